#include "hqnn/models.hpp"

#include <cmath>
#include <random>

namespace hqnn::models {

using nn::Mode;
using nn::Param;
using nn::Tensor;
using qlayers::EmbeddingKind;

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::classical_cnn: return "classical_cnn";
    case ModelKind::hybrid_qnn: return "hybrid_qnn";
    case ModelKind::hybrid_qnn_transfer: return "hybrid_qnn_transfer";
    case ModelKind::hybrid_qcnn: return "hybrid_qcnn";
  }
  return "?";
}

ModelKind parse_model_kind(std::string_view name) {
  if (name == "classical_cnn" || name == "classical" || name == "cnn") return ModelKind::classical_cnn;
  if (name == "hybrid_qnn" || name == "qnn") return ModelKind::hybrid_qnn;
  if (name == "hybrid_qnn_transfer" || name == "qnn_transfer" || name == "transfer") {
    return ModelKind::hybrid_qnn_transfer;
  }
  if (name == "hybrid_qcnn" || name == "qcnn") return ModelKind::hybrid_qcnn;
  throw ConfigError("unknown model kind '" + std::string(name) + "'");
}

ModelConfig ModelConfig::defaults(ModelKind kind, int K, int Nt) {
  ModelConfig c;
  c.kind = kind;
  c.K = K;
  c.Nt = Nt;
  if (kind == ModelKind::hybrid_qcnn) {
    c.Q = 2;
    c.embedding = EmbeddingKind::amplitude;
  }
  return c;
}

void ModelConfig::validate() const {
  if (K < 1 || Nt < 1) throw ConfigError("K and Nt must be >= 1");
  if (F < 1) throw ConfigError("F must be >= 1");
  if (m < 1 || m > 3) throw ConfigError("kernel size m must be in [1, 3] for a width-1 input with padding 1");
  if (kind == ModelKind::classical_cnn) return;
  if (Q < 1 || L < 1) throw ConfigError("Q and L must be >= 1");
  if (Q > 12) throw ConfigError("Q > 12 is not supported");
  if (kind == ModelKind::hybrid_qnn_transfer && !pretrained_checkpoint) {
    throw ConfigError("the transfer model needs a pretrained classical checkpoint");
  }
  if (kind == ModelKind::hybrid_qcnn) {
    if (FQ != qlayers::kQuanvKernel) throw ConfigError("only F_Q = 2 quanvolution kernels are supported");
    if (Q != qlayers::kQuanvQubits) throw ConfigError("QCNN uses Q = 2 qubits");
    if (embedding != EmbeddingKind::amplitude) {
      throw ConfigError("QCNN needs amplitude embedding: a 2x2 block has 4 values for 2 qubits");
    }
    if (K % FQ != 0) throw ConfigError("QCNN needs K divisible by F_Q = 2 (K must be even), got K = " + std::to_string(K));
    if (m > Q + 2) throw ConfigError("kernel size too large for the quanvolution output width");
  }
}

nlohmann::json ModelConfig::to_json() const {
  nlohmann::json j{{"kind", std::string(models::to_string(kind))},
                   {"K", K},
                   {"Nt", Nt},
                   {"F", F},
                   {"m", m},
                   {"Q", Q},
                   {"L", L},
                   {"embedding", std::string(qlayers::to_string(embedding))},
                   {"FQ", FQ}};
  j["pretrained_checkpoint"] = pretrained_checkpoint ? nlohmann::json(pretrained_checkpoint->string()) : nlohmann::json();
  return j;
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.kind = parse_model_kind(j.at("kind").get<std::string>());
  c.K = j.at("K").get<int>();
  c.Nt = j.at("Nt").get<int>();
  c.F = j.at("F").get<int>();
  c.m = j.at("m").get<int>();
  c.Q = j.at("Q").get<int>();
  c.L = j.at("L").get<int>();
  c.embedding = qlayers::parse_embedding(j.at("embedding").get<std::string>());
  c.FQ = j.at("FQ").get<int>();
  if (j.contains("pretrained_checkpoint") && !j["pretrained_checkpoint"].is_null()) {
    c.pretrained_checkpoint = j["pretrained_checkpoint"].get<std::string>();
  }
  return c;
}

namespace {

struct FrontDims {
  int c_in, h, w;  // conv input
  int oh, ow;      // conv output
};

FrontDims front_dims(const ModelConfig& cfg) {
  FrontDims d{};
  if (cfg.kind == ModelKind::hybrid_qcnn) {
    d.c_in = cfg.K / cfg.FQ;
    d.h = 2 * cfg.Nt / cfg.FQ;
    d.w = cfg.Q;
  } else {
    d.c_in = cfg.K;
    d.h = 2 * cfg.Nt;
    d.w = 1;
  }
  d.oh = d.h + 3 - cfg.m;
  d.ow = d.w + 3 - cfg.m;
  return d;
}

int qnn_input_width(const ModelConfig& cfg) { return qlayers::embedding_width(cfg.embedding, cfg.Q); }

}  // namespace

int flatten_length(const ModelConfig& cfg) {
  const FrontDims d = front_dims(cfg);
  return cfg.F * d.oh * d.ow;
}

long count_params(const ModelConfig& cfg) {
  const long K = cfg.K, Nt = cfg.Nt, F = cfg.F, m = cfg.m, Q = cfg.Q, L = cfg.L, FQ = cfg.FQ;
  const long flat = F * (2 * Nt - m + 3) * (4 - m);
  const long fc1 = qnn_input_width(cfg);
  switch (cfg.kind) {
    case ModelKind::classical_cnn:
      return (K * m * m + 3) * F + 2 * K * (flat + 1);
    case ModelKind::hybrid_qnn:
      return (K * m * m + 3) * F + (flat + 1) * fc1 + L * Q + 2 * K * (Q + 1);
    case ModelKind::hybrid_qnn_transfer:
      return (flat + 1) * fc1 + L * Q + 2 * K * (Q + 1);
    case ModelKind::hybrid_qcnn:
      return L * Q + ((K / FQ) * m * m + 3) * F + 2 * K * (F * (2 * Nt / FQ - m + 3) * (Q - m + 3) + 1);
  }
  return 0;
}

long count_params_direct_beamforming(const ModelConfig& cfg) {
  const long K = cfg.K, Nt = cfg.Nt, F = cfg.F, m = cfg.m, Q = cfg.Q, L = cfg.L, FQ = cfg.FQ;
  const long flat = F * (2 * Nt - m + 3) * (4 - m);
  switch (cfg.kind) {
    case ModelKind::classical_cnn:
      return (K * m * m + 3) * F + 2 * Nt * K * (flat + 1);
    case ModelKind::hybrid_qnn:
      return (K * m * m + 3) * F + (flat + 1) * Q + L * Q + 2 * K * (Q + 1);
    case ModelKind::hybrid_qnn_transfer:
      return (flat + 1) * Q + L * Q + 2 * K * (Q + 1);
    case ModelKind::hybrid_qcnn:
      return L * Q + ((K / FQ) * m * m + 3) * F + 2 * Nt * K * (F * (2 * Nt / FQ - m + 3) * (Q - m + 3) + 1);
  }
  return 0;
}

Tensor channel_to_input(const bf::CMatrix& H) {
  const int K = static_cast<int>(H.rows());
  const int Nt = static_cast<int>(H.cols());
  Tensor t({K, 2 * Nt, 1});
  for (int k = 0; k < K; ++k) {
    for (int i = 0; i < Nt; ++i) {
      t.at(k, i, 0) = H(k, i).real();
      t.at(k, Nt + i, 0) = H(k, i).imag();
    }
  }
  return t;
}

// ---------------------------------------------------------------- construction

Model::Model(ModelConfig cfg, std::uint64_t seed, NoInit) : cfg_(std::move(cfg)), seed_(seed) {
  cfg_.validate();
  build_layers();
}

Model::Model(ModelConfig cfg, std::uint64_t seed) : Model(std::move(cfg), seed, NoInit{}) {
  init_random();
  if (cfg_.kind == ModelKind::hybrid_qnn_transfer) {
    const Model pre = load_checkpoint(*cfg_.pretrained_checkpoint);
    *this = transfer_from(pre, cfg_, seed);
  }
}

void Model::build_layers() {
  const FrontDims d = front_dims(cfg_);
  const int F = cfg_.F;
  const int twoK = 2 * cfg_.K;
  const int flat = flatten_length(cfg_);
  conv_w_ = Param("conv.weight", Tensor({F, d.c_in, cfg_.m, cfg_.m}));
  conv_b_ = Param("conv.bias", Tensor({F}));
  bn_ = nn::BatchNorm(F, "bn");
  switch (cfg_.kind) {
    case ModelKind::classical_cnn:
      fc_w_ = Param("fc.weight", Tensor({twoK, flat}));
      fc_b_ = Param("fc.bias", Tensor({twoK}));
      break;
    case ModelKind::hybrid_qnn:
    case ModelKind::hybrid_qnn_transfer: {
      const int width = qnn_input_width(cfg_);
      fc1_w_ = Param("fc1.weight", Tensor({width, flat}));
      fc1_b_ = Param("fc1.bias", Tensor({width}));
      pqc_theta_ = Param("pqc.theta", Tensor({cfg_.L, cfg_.Q}));
      fc2_w_ = Param("fc2.weight", Tensor({twoK, cfg_.Q}));
      fc2_b_ = Param("fc2.bias", Tensor({twoK}));
      break;
    }
    case ModelKind::hybrid_qcnn:
      quanv_theta_ = Param("quanv.theta", Tensor({cfg_.L, cfg_.Q}));
      fc_w_ = Param("fc.weight", Tensor({twoK, flat}));
      fc_b_ = Param("fc.bias", Tensor({twoK}));
      break;
  }
}

void Model::init_random() {
  std::mt19937_64 rng(seed_);
  const FrontDims d = front_dims(cfg_);
  const int conv_fan_in = d.c_in * cfg_.m * cfg_.m;
  const int flat = flatten_length(cfg_);
  auto init_theta = [&](Param& p) {
    const auto q = qlayers::PQCParams::random(cfg_.L, cfg_.Q, rng);
    p.value.data = q.thetas;
  };
  if (cfg_.kind == ModelKind::hybrid_qcnn) init_theta(quanv_theta_);
  nn::init_uniform_fan_in(conv_w_.value, conv_fan_in, rng);
  nn::init_uniform_fan_in(conv_b_.value, conv_fan_in, rng);
  switch (cfg_.kind) {
    case ModelKind::classical_cnn:
    case ModelKind::hybrid_qcnn:
      nn::init_uniform_fan_in(fc_w_.value, flat, rng);
      nn::init_uniform_fan_in(fc_b_.value, flat, rng);
      break;
    case ModelKind::hybrid_qnn:
    case ModelKind::hybrid_qnn_transfer:
      nn::init_uniform_fan_in(fc1_w_.value, flat, rng);
      nn::init_uniform_fan_in(fc1_b_.value, flat, rng);
      init_theta(pqc_theta_);
      nn::init_uniform_fan_in(fc2_w_.value, cfg_.Q, rng);
      nn::init_uniform_fan_in(fc2_b_.value, cfg_.Q, rng);
      break;
  }
}

Model Model::transfer_from(const Model& pretrained, ModelConfig cfg, std::uint64_t seed) {
  cfg.kind = ModelKind::hybrid_qnn_transfer;
  if (!cfg.pretrained_checkpoint) cfg.pretrained_checkpoint = std::filesystem::path("<in-memory>");
  const ModelConfig& src = pretrained.config();
  if (src.kind == ModelKind::hybrid_qcnn) {
    throw ConfigError("transfer needs a pretrained model with the classical conv front-end");
  }
  if (src.K != cfg.K || src.Nt != cfg.Nt || src.F != cfg.F || src.m != cfg.m) {
    throw ConfigError("pretrained front-end dimensions (K, Nt, F, m) do not match the transfer config");
  }
  Model out(cfg, seed, NoInit{});
  out.init_random();
  out.conv_w_.value = pretrained.conv_w_.value;
  out.conv_b_.value = pretrained.conv_b_.value;
  out.bn_.gamma.value = pretrained.bn_.gamma.value;
  out.bn_.beta.value = pretrained.bn_.beta.value;
  out.bn_.running_mean = pretrained.bn_.running_mean;
  out.bn_.running_var = pretrained.bn_.running_var;
  for (Param* p : {&out.conv_w_, &out.conv_b_, &out.bn_.gamma, &out.bn_.beta}) p->frozen = true;
  return out;
}

std::vector<Param*> Model::parameters() {
  std::vector<Param*> out;
  if (cfg_.kind == ModelKind::hybrid_qcnn) out.push_back(&quanv_theta_);
  out.insert(out.end(), {&conv_w_, &conv_b_, &bn_.gamma, &bn_.beta});
  switch (cfg_.kind) {
    case ModelKind::classical_cnn:
    case ModelKind::hybrid_qcnn:
      out.insert(out.end(), {&fc_w_, &fc_b_});
      break;
    case ModelKind::hybrid_qnn:
    case ModelKind::hybrid_qnn_transfer:
      out.insert(out.end(), {&fc1_w_, &fc1_b_, &pqc_theta_, &fc2_w_, &fc2_b_});
      break;
  }
  return out;
}

std::vector<const Param*> Model::parameters() const {
  auto mut = const_cast<Model*>(this)->parameters();
  return {mut.begin(), mut.end()};
}

Param* Model::find_param(std::string_view name) {
  for (Param* p : parameters())
    if (p->name == name) return p;
  return nullptr;
}

const Param* Model::find_param(std::string_view name) const {
  return const_cast<Model*>(this)->find_param(name);
}

std::size_t Model::trainable_scalars() const {
  std::size_t n = 0;
  for (const Param* p : parameters())
    if (!p->frozen) n += p->value.size();
  return n;
}

void Model::zero_grad() {
  for (Param* p : parameters()) p->zero_grad();
}

// ---------------------------------------------------------------- forward

qlayers::QuantumLayerConfig Model::pqc_config(Mode mode, std::uint64_t sample_index) const {
  qlayers::QuantumLayerConfig q;
  q.num_qubits = cfg_.Q;
  q.num_layers = cfg_.L;
  q.embedding = cfg_.embedding;
  if (mode == Mode::eval) {
    q.shots = qeval_.shots;
    q.noise = qeval_.noise;
    q.shot_seed = derive_seed(qeval_.shot_seed, sample_index, 0x9);
  }
  return q;
}

qlayers::QuantumLayerConfig Model::quanv_config(Mode mode, std::uint64_t sample_index) const {
  auto q = pqc_config(mode, sample_index);
  q.num_qubits = qlayers::kQuanvQubits;
  q.embedding = EmbeddingKind::amplitude;
  return q;
}

qlayers::PQCParams Model::pqc_params(const Param& p) const {
  qlayers::PQCParams q(p.value.dim(0), p.value.dim(1));
  q.thetas = p.value.data;
  return q;
}

void Model::forward_front(SampleCache& s, Mode mode, std::uint64_t idx) const {
  if (cfg_.kind == ModelKind::hybrid_qcnn) {
    const auto out = qlayers::quanvolution_forward(s.input.data, cfg_.K, 2 * cfg_.Nt, pqc_params(quanv_theta_),
                                                   quanv_config(mode, idx));
    s.conv_in = Tensor({out.channels, out.height, out.width}, out.data);
    s.quantum_out = Tensor({static_cast<int>(out.data.size())}, out.data);
  } else {
    s.conv_in = s.input;
  }
  s.conv_out = nn::conv2d_forward(s.conv_in, conv_w_.value, conv_b_.value, 1);
  s.relu_out = nn::activate(nn::Activation::relu, s.conv_out);
}

void Model::forward_head(SampleCache& s, Mode mode, std::uint64_t idx) const {
  Tensor flat_view({static_cast<int>(s.flat.size())}, s.flat.data);
  if (cfg_.kind == ModelKind::classical_cnn || cfg_.kind == ModelKind::hybrid_qcnn) {
    s.logits = nn::linear_forward(flat_view, fc_w_.value, fc_b_.value);
  } else {
    s.fc1_out = nn::linear_forward(flat_view, fc1_w_.value, fc1_b_.value);
    s.fc1_act = nn::activate(nn::Activation::tanh, s.fc1_out);
    const auto z = qlayers::pqc_forward(std::span<const double>(s.fc1_act.data), pqc_params(pqc_theta_),
                                        pqc_config(mode, idx));
    s.quantum_out = Tensor({cfg_.Q}, z);
    s.logits = nn::linear_forward(s.quantum_out, fc2_w_.value, fc2_b_.value);
  }
  s.raw = nn::activate(nn::Activation::sigmoid, s.logits);
}

BatchForward Model::forward(std::span<const bf::ChannelSample> batch, Mode mode, Exec exec,
                            std::uint64_t index_base) {
  std::vector<Tensor> inputs(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (batch[i].H.rows() != cfg_.K || batch[i].H.cols() != cfg_.Nt) {
      throw ConfigError("sample channel is " + std::to_string(batch[i].H.rows()) + " x " +
                        std::to_string(batch[i].H.cols()) + ", model expects " + std::to_string(cfg_.K) +
                        " x " + std::to_string(cfg_.Nt));
    }
    inputs[i] = channel_to_input(batch[i].H);
  }
  return forward_inputs(inputs, mode, exec, index_base);
}

BatchForward Model::forward_inputs(std::span<const Tensor> inputs, Mode mode, Exec exec,
                                   std::uint64_t index_base) {
  BatchForward fwd;
  fwd.mode = mode;
  fwd.samples.resize(inputs.size());
  const std::vector<int> want{cfg_.K, 2 * cfg_.Nt, 1};
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (inputs[i].shape != want) throw ConfigError("model input has shape " + inputs[i].shape_str());
    fwd.samples[i].input = inputs[i];
  }
  for_each_index(exec, inputs.size(),
                 [&](std::size_t i) { forward_front(fwd.samples[i], mode, index_base + i); });

  std::vector<Tensor> relu(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) relu[i] = fwd.samples[i].relu_out;
  const Mode bn_mode = frontend_frozen() ? Mode::eval : mode;
  auto normalized = nn::batchnorm_forward(bn_, relu, bn_mode, &fwd.bn_cache);
  for (std::size_t i = 0; i < inputs.size(); ++i) fwd.samples[i].flat = std::move(normalized[i]);

  for_each_index(exec, inputs.size(),
                 [&](std::size_t i) { forward_head(fwd.samples[i], mode, index_base + i); });
  return fwd;
}

// ---------------------------------------------------------------- backward

void Model::backward(const BatchForward& fwd, const std::vector<std::vector<double>>& grad_raw, Exec exec) {
  const std::size_t n = fwd.samples.size();
  if (grad_raw.size() != n) throw ConfigError("grad_raw batch size mismatch");
  const auto params = parameters();
  auto slot = [&](const Param& p) {
    for (std::size_t i = 0; i < params.size(); ++i)
      if (params[i] == &p) return i;
    throw std::logic_error("unknown parameter");
  };
  // Per-sample gradient buffers, reduced in sample order at the end.
  std::vector<std::vector<Tensor>> local(n);
  for (auto& l : local) {
    l.reserve(params.size());
    for (const Param* p : params) l.emplace_back(p->value.shape);
  }

  const bool head_only = frontend_frozen();
  std::vector<Tensor> grad_flat(n);
  const auto i_fc_w = cfg_.kind == ModelKind::classical_cnn || cfg_.kind == ModelKind::hybrid_qcnn
                          ? slot(fc_w_) : 0;

  for_each_index(exec, n, [&](std::size_t i) {
    const SampleCache& s = fwd.samples[i];
    auto& g = local[i];
    if (grad_raw[i].size() != s.raw.size()) throw ConfigError("grad_raw length must be 2K");
    const Tensor graw({static_cast<int>(grad_raw[i].size())}, grad_raw[i]);
    const Tensor glogit = nn::activate_backward(nn::Activation::sigmoid, s.logits, s.raw, graw);
    const Tensor flat_view({static_cast<int>(s.flat.size())}, s.flat.data);
    Tensor gflat;
    if (cfg_.kind == ModelKind::classical_cnn || cfg_.kind == ModelKind::hybrid_qcnn) {
      nn::linear_backward(flat_view, fc_w_.value, glogit, &gflat, &g[i_fc_w], &g[slot(fc_b_)]);
    } else {
      Tensor gq;
      nn::linear_backward(s.quantum_out, fc2_w_.value, glogit, &gq, &g[slot(fc2_w_)], &g[slot(fc2_b_)]);
      const auto qcfg = pqc_config(Mode::train, 0);
      const auto qp = pqc_params(pqc_theta_);
      std::vector<double> g_in;
      Tensor& gtheta = g[slot(pqc_theta_)];
      if (cfg_.embedding == EmbeddingKind::amplitude) {
        const auto pg = qlayers::pqc_param_shift_grad(std::span<const double>(s.fc1_act.data), qp, qcfg, gq.data, false);
        for (std::size_t k = 0; k < pg.thetas.size(); ++k) gtheta[k] += pg.thetas[k];
        g_in = qlayers::amplitude_input_grad_fd(s.fc1_act.data, qp, qcfg, gq.data);
      } else {
        const auto pg = qlayers::pqc_param_shift_grad(std::span<const double>(s.fc1_act.data), qp, qcfg, gq.data, true);
        for (std::size_t k = 0; k < pg.thetas.size(); ++k) gtheta[k] += pg.thetas[k];
        g_in = pg.input_angles;
      }
      const Tensor gact({static_cast<int>(g_in.size())}, g_in);
      const Tensor gfc1 = nn::activate_backward(nn::Activation::tanh, s.fc1_out, s.fc1_act, gact);
      nn::linear_backward(flat_view, fc1_w_.value, gfc1, head_only ? nullptr : &gflat, &g[slot(fc1_w_)],
                          &g[slot(fc1_b_)]);
    }
    if (!head_only) grad_flat[i] = Tensor(s.flat.shape, std::move(gflat.data));
  });

  if (!head_only) {
    // gamma / beta gradients accumulate directly; BN is a batch-level op.
    const auto grad_relu = nn::batchnorm_backward(bn_, fwd.bn_cache, grad_flat);
    const bool qcnn = cfg_.kind == ModelKind::hybrid_qcnn;
    for_each_index(exec, n, [&](std::size_t i) {
      const SampleCache& s = fwd.samples[i];
      auto& g = local[i];
      const Tensor gconv = nn::activate_backward(nn::Activation::relu, s.conv_out, s.relu_out, grad_relu[i]);
      Tensor gin;
      nn::conv2d_backward(s.conv_in, conv_w_.value, gconv, 1, qcnn ? &gin : nullptr, &g[slot(conv_w_)],
                          &g[slot(conv_b_)]);
      if (qcnn) {
        qlayers::QuanvOutput up{gin.dim(0), gin.dim(1), gin.dim(2), gin.data};
        const auto qg = qlayers::quanvolution_grad(s.input.data, cfg_.K, 2 * cfg_.Nt, pqc_params(quanv_theta_),
                                                   quanv_config(Mode::train, 0), up, false);
        Tensor& gt = g[slot(quanv_theta_)];
        for (std::size_t k = 0; k < qg.thetas.size(); ++k) gt[k] += qg.thetas[k];
      }
    });
  }

  for (std::size_t p = 0; p < params.size(); ++p) {
    if (params[p] == &bn_.gamma || params[p] == &bn_.beta) continue;
    Tensor& dst = params[p]->grad;
    for (std::size_t i = 0; i < n; ++i) {
      const Tensor& src = local[i][p];
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
    }
  }
}

}  // namespace hqnn::models
