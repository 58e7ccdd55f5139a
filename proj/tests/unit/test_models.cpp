#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "hqnn/models.hpp"
#include "hqnn/trainer.hpp"

using namespace hqnn;
using namespace hqnn::models;
namespace fs = std::filesystem;

namespace {

// Closed forms written out independently of the library.
long p_cnn(long K, long Nt, long F, long m) { return (K * m * m + 3) * F + 2 * K * (F * (2 * Nt - m + 3) * (4 - m) + 1); }
long p_qnn(long K, long Nt, long F, long m, long L, long Q) {
  return (K * m * m + 3) * F + (F * (2 * Nt - m + 3) * (4 - m) + 1) * Q + L * Q + 2 * K * (Q + 1);
}
long p_qnn_t(long K, long Nt, long F, long m, long L, long Q) {
  return (F * (2 * Nt - m + 3) * (4 - m) + 1) * Q + L * Q + 2 * K * (Q + 1);
}
long p_qcnn(long K, long Nt, long F, long m, long L, long Q, long FQ) {
  return L * Q + ((K / FQ) * m * m + 3) * F + 2 * K * (F * (2 * Nt / FQ - m + 3) * (Q - m + 3) + 1);
}

std::vector<bf::ChannelSample> samples(int K, int Nt, int n, std::uint64_t seed) {
  bf::SystemParams s;
  s.K = K;
  s.Nt = Nt;
  auto data = bf::generate_dataset(n, s, seed);
  // Scale to O(1) inputs so the tiny test networks are not saturated.
  for (auto& d : data) d.H /= d.H.norm() / std::sqrt(static_cast<double>(K * Nt));
  return data;
}

double end_to_end_check(Model& model, const std::vector<bf::ChannelSample>& batch, nn::Mode mode) {
  const double P = 1.0;
  auto raws = [](const BatchForward& f) {
    std::vector<std::vector<double>> r;
    for (std::size_t i = 0; i < f.samples.size(); ++i) r.push_back(f.raw(i));
    return r;
  };
  auto loss = [&] {
    const auto f = model.forward(batch, mode, Exec::serial);
    return trainer::batch_loss(batch, raws(f), P, false).loss;
  };
  auto backward = [&] {
    model.zero_grad();
    const auto f = model.forward(batch, mode, Exec::serial);
    const auto l = trainer::batch_loss(batch, raws(f), P, true);
    model.backward(f, l.grad_raw, Exec::serial);
  };
  std::vector<nn::Param*> trainable;
  for (auto* p : model.parameters())
    if (!p->frozen) trainable.push_back(p);
  return nn::grad_check(loss, backward, trainable, 1e-5);
}

}  // namespace

TEST_CASE("closed-form parameter counts") {
  const auto at8 = [](ModelKind k) { return count_params(ModelConfig::defaults(k, 8, 8)); };
  CHECK(at8(ModelKind::classical_cnn) == 2664);
  CHECK(at8(ModelKind::hybrid_qnn) == 1204);
  CHECK(at8(ModelKind::hybrid_qnn_transfer) == 604);
  CHECK(at8(ModelKind::hybrid_qcnn) == 2380);
  for (int K : {4, 6, 8, 10, 20}) {
    CHECK(count_params(ModelConfig::defaults(ModelKind::classical_cnn, K, K)) == p_cnn(K, K, 8, 3));
    CHECK(count_params(ModelConfig::defaults(ModelKind::hybrid_qnn, K, K)) == p_qnn(K, K, 8, 3, 2, 4));
    CHECK(count_params(ModelConfig::defaults(ModelKind::hybrid_qnn_transfer, K, K)) == p_qnn_t(K, K, 8, 3, 2, 4));
    CHECK(count_params(ModelConfig::defaults(ModelKind::hybrid_qcnn, K, K)) == p_qcnn(K, K, 8, 3, 2, 2, 2));
  }
  // Direct beamforming output: the 2K output width becomes 2 Nt K.
  const auto c = ModelConfig::defaults(ModelKind::classical_cnn, 8, 8);
  CHECK(count_params_direct_beamforming(c) == (8 * 9 + 3) * 8 + 2 * 8 * 8 * (8 * 16 + 1));
}

TEST_CASE("walked trainable scalars equal the closed forms") {
  for (int K : {4, 6, 8}) {
    const auto cc = ModelConfig::defaults(ModelKind::classical_cnn, K, K);
    const Model classical(cc, 1);
    CHECK(classical.trainable_scalars() == static_cast<std::size_t>(count_params(cc)));
    const auto qc = ModelConfig::defaults(ModelKind::hybrid_qnn, K, K);
    CHECK(Model(qc, 1).trainable_scalars() == static_cast<std::size_t>(count_params(qc)));
    const auto tc = ModelConfig::defaults(ModelKind::hybrid_qnn_transfer, K, K);
    CHECK(Model::transfer_from(classical, tc, 1).trainable_scalars() == static_cast<std::size_t>(count_params(tc)));
    const auto qq = ModelConfig::defaults(ModelKind::hybrid_qcnn, K, K);
    CHECK(Model(qq, 1).trainable_scalars() == static_cast<std::size_t>(count_params(qq)));
  }
}

TEST_CASE("configuration errors") {
  auto q = ModelConfig::defaults(ModelKind::hybrid_qcnn, 5, 4);
  CHECK_THROWS_AS(q.validate(), ConfigError);
  q = ModelConfig::defaults(ModelKind::hybrid_qcnn, 4, 4);
  q.embedding = qlayers::EmbeddingKind::angle;
  CHECK_THROWS_AS(q.validate(), ConfigError);
  CHECK_THROWS_AS(ModelConfig::defaults(ModelKind::hybrid_qnn_transfer, 4, 4).validate(), ConfigError);
  CHECK_THROWS_AS(parse_model_kind("mlp"), ConfigError);
  CHECK(parse_model_kind("qnn_transfer") == ModelKind::hybrid_qnn_transfer);

  const Model classical(ModelConfig::defaults(ModelKind::classical_cnn, 4, 4), 1);
  CHECK_THROWS_AS(Model::transfer_from(classical, ModelConfig::defaults(ModelKind::hybrid_qnn_transfer, 6, 6), 1),
                  ConfigError);
  Model m(ModelConfig::defaults(ModelKind::classical_cnn, 4, 4), 1);
  CHECK_THROWS_AS(m.forward(samples(3, 4, 2, 1), nn::Mode::eval), ConfigError);
}

TEST_CASE("input layout and output range") {
  bf::CMatrix H(2, 3);
  H << bf::cplx(1, 2), bf::cplx(3, 4), bf::cplx(5, 6), bf::cplx(7, 8), bf::cplx(9, 10), bf::cplx(11, 12);
  const auto t = channel_to_input(H);
  CHECK(t.shape == std::vector<int>{2, 6, 1});
  CHECK(t.at(1, 0, 0) == 7);
  CHECK(t.at(1, 3, 0) == 8);
  CHECK(t.at(0, 5, 0) == 6);

  for (auto kind : {ModelKind::classical_cnn, ModelKind::hybrid_qnn, ModelKind::hybrid_qcnn}) {
    Model m(ModelConfig::defaults(kind, 4, 4), 3);
    const auto f = m.forward(samples(4, 4, 5, 2), nn::Mode::eval);
    for (const auto& s : f.samples) {
      REQUIRE(s.raw.data.size() == 8);
      for (double v : s.raw.data) CHECK((v > 0.0 && v < 1.0));
    }
  }
}

TEST_CASE("end-to-end gradients of every architecture") {
  const auto batch = samples(2, 2, 3, 5);
  ModelConfig c = ModelConfig::defaults(ModelKind::classical_cnn, 2, 2);
  c.F = 2;
  Model classical(c, 11);
  CHECK(end_to_end_check(classical, batch, nn::Mode::train) < 1e-4);
  CHECK(end_to_end_check(classical, batch, nn::Mode::eval) < 1e-4);

  for (auto emb : {qlayers::EmbeddingKind::angle_with_hadamard, qlayers::EmbeddingKind::angle,
                   qlayers::EmbeddingKind::amplitude}) {
    ModelConfig q = ModelConfig::defaults(ModelKind::hybrid_qnn, 2, 2);
    q.F = 2;
    q.Q = 2;
    q.L = 2;
    q.embedding = emb;
    Model qnn(q, 12);
    CHECK(end_to_end_check(qnn, batch, nn::Mode::train) < 1e-4);
  }

  ModelConfig t = ModelConfig::defaults(ModelKind::hybrid_qnn_transfer, 2, 2);
  t.F = 2;
  t.Q = 2;
  Model transfer = Model::transfer_from(classical, t, 13);
  CHECK(end_to_end_check(transfer, batch, nn::Mode::train) < 1e-4);

  ModelConfig qc = ModelConfig::defaults(ModelKind::hybrid_qcnn, 2, 2);
  qc.F = 2;
  Model qcnn(qc, 14);
  CHECK(end_to_end_check(qcnn, batch, nn::Mode::train) < 1e-4);
}

TEST_CASE("transfer copies and freezes the front-end") {
  Model classical(ModelConfig::defaults(ModelKind::classical_cnn, 4, 4), 1);
  classical.batchnorm().running_mean[0] = 0.25;
  const auto tc = ModelConfig::defaults(ModelKind::hybrid_qnn_transfer, 4, 4);
  Model t = Model::transfer_from(classical, tc, 2);
  CHECK(t.find_param("conv.weight")->value.data == classical.find_param("conv.weight")->value.data);
  CHECK(t.find_param("conv.weight")->frozen);
  CHECK(t.find_param("bn.gamma")->frozen);
  CHECK_FALSE(t.find_param("fc1.weight")->frozen);
  CHECK(t.batchnorm().running_mean[0] == 0.25);

  // Train-mode forward leaves the frozen BN statistics alone.
  const auto batch = samples(4, 4, 6, 3);
  t.forward(batch, nn::Mode::train);
  CHECK(t.batchnorm().running_mean[0] == 0.25);
}

TEST_CASE("checkpoint round trip and corruption") {
  const auto dir = fs::temp_directory_path() / "hqnn_models_ckpt";
  fs::remove_all(dir);
  const auto batch = samples(4, 4, 4, 8);
  for (auto kind : {ModelKind::classical_cnn, ModelKind::hybrid_qnn, ModelKind::hybrid_qcnn}) {
    Model m(ModelConfig::defaults(kind, 4, 4), 21);
    m.batchnorm().running_var[1] = 1.7;
    m.metadata = {{"note", "x"}};
    const auto path = dir / (std::string(to_string(kind)) + ".ckpt");
    save_checkpoint(m, path);
    Model back = load_checkpoint(path);
    CHECK(back.config().to_json() == m.config().to_json());
    CHECK(back.metadata == m.metadata);
    CHECK(back.batchnorm().running_var[1] == 1.7);
    const auto a = m.forward(batch, nn::Mode::eval);
    const auto b = back.forward(batch, nn::Mode::eval);
    for (std::size_t i = 0; i < batch.size(); ++i) CHECK(a.raw(i) == b.raw(i));
  }

  // Transfer checkpoint keeps its frozen flags.
  const Model classical(ModelConfig::defaults(ModelKind::classical_cnn, 4, 4), 1);
  save_checkpoint(classical, dir / "pre.ckpt");
  auto tc = ModelConfig::defaults(ModelKind::hybrid_qnn_transfer, 4, 4);
  tc.pretrained_checkpoint = dir / "pre.ckpt";
  const Model t(tc, 2);
  CHECK(t.find_param("conv.bias")->value.data == classical.find_param("conv.bias")->value.data);
  save_checkpoint(t, dir / "t.ckpt");
  const Model tb = load_checkpoint(dir / "t.ckpt");
  CHECK(tb.find_param("conv.bias")->frozen);
  CHECK(tb.trainable_scalars() == static_cast<std::size_t>(count_params(tc)));

  // Flip one payload byte.
  const auto path = dir / "classical_cnn.ckpt";
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekg(-3, std::ios::end);
    char c;
    f.get(c);
    f.seekp(-3, std::ios::end);
    f.put(static_cast<char>(c ^ 0x10));
  }
  CHECK_THROWS_AS(load_checkpoint(path), CheckpointError);
  {
    std::ofstream f(dir / "junk.ckpt", std::ios::binary);
    f << "not a checkpoint";
  }
  CHECK_THROWS_AS(load_checkpoint(dir / "junk.ckpt"), CheckpointError);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), CheckpointError);
  fs::remove_all(dir);
}
