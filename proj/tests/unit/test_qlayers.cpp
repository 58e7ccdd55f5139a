#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <numbers>
#include <random>

#include "hqnn/nn.hpp"
#include "hqnn/qlayers.hpp"
#include "oracle.hpp"

using namespace hqnn;
using namespace hqnn::qlayers;

namespace {

// Dense evolution of the layered circuit, starting from `psi`.
Eigen::VectorXcd dense_circuit(Eigen::VectorXcd psi, const PQCParams& p) {
  const int n = p.qubits;
  for (int l = 0; l < p.layers; ++l) {
    for (int i = 0; i + 1 < n; ++i) psi = oracle::cnot(i, i + 1, n) * psi;
    for (int i = 0; i < n; ++i) psi = oracle::on_qubit(oracle::ry(p.at(l, i)), i, n) * psi;
  }
  return psi;
}

Eigen::VectorXcd dense_angle_embed(const std::vector<double>& x, bool hadamard) {
  const int n = static_cast<int>(x.size());
  Eigen::VectorXcd psi = Eigen::VectorXcd::Zero(Eigen::Index(1) << n);
  psi(0) = 1.0;
  for (int i = 0; i < n; ++i) {
    if (hadamard) psi = oracle::on_qubit(oracle::hadamard(), i, n) * psi;
    psi = oracle::on_qubit(oracle::ry(x[static_cast<std::size_t>(i)]), i, n) * psi;
  }
  return psi;
}

double weighted(const std::vector<double>& z, const std::vector<double>& up) {
  double a = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) a += z[i] * up[i];
  return a;
}

}  // namespace

TEST_CASE("embeddings") {
  const std::vector<double> x{0.3, -1.2, 2.0};
  for (bool h : {false, true}) {
    const auto s = embed(x, h ? EmbeddingKind::angle_with_hadamard : EmbeddingKind::angle, 3);
    const auto ref = dense_angle_embed(x, h);
    for (std::size_t i = 0; i < s.dim(); ++i) CHECK(std::abs(s[i] - ref(static_cast<Eigen::Index>(i))) < 1e-14);
  }
  // Angle embedding alone gives <Z_i> = cos(x_i).
  const auto s = embed(x, EmbeddingKind::angle, 3);
  for (int q = 0; q < 3; ++q) CHECK(qsim::expectation_z(s, q) == doctest::Approx(std::cos(x[q])).epsilon(1e-12));

  const std::vector<double> a{3.0, 0.0, 4.0, 0.0};
  const auto amp = embed(a, EmbeddingKind::amplitude, 2);
  CHECK(amp[0].real() == doctest::Approx(0.6));
  CHECK(amp[2].real() == doctest::Approx(0.8));
  const auto zero = embed(std::vector<double>(4, 0.0), EmbeddingKind::amplitude, 2);
  CHECK(zero[0] == qsim::cplx(1.0, 0.0));
  CHECK_THROWS_AS(embed(a, EmbeddingKind::amplitude, 3), std::invalid_argument);
  CHECK(embedding_width(EmbeddingKind::amplitude, 4) == 16);
  CHECK(embedding_width(EmbeddingKind::angle, 4) == 4);
}

TEST_CASE("pqc_forward agrees with the dense circuit") {
  std::mt19937_64 rng(2);
  for (int n = 1; n <= 4; ++n) {
    for (int L = 1; L <= 3; ++L) {
      const auto p = PQCParams::random(L, n, rng);
      std::vector<double> x(static_cast<std::size_t>(n));
      std::uniform_real_distribution<double> u(-2, 2);
      for (auto& v : x) v = u(rng);
      QuantumLayerConfig cfg;
      cfg.num_qubits = n;
      cfg.num_layers = L;
      const auto z = pqc_forward(std::span<const double>(x), p, cfg);
      const auto psi = dense_circuit(dense_angle_embed(x, true), p);
      for (int q = 0; q < n; ++q) CHECK(z[q] == doctest::Approx(oracle::expect_z(psi, q, n)).epsilon(1e-12));
    }
  }
}

TEST_CASE("parameter shift equals central finite differences") {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(-3, 3);
  double worst = 0.0;
  for (int trial = 0; trial < 40; ++trial) {
    QuantumLayerConfig cfg;
    cfg.num_qubits = 1 + trial % 4;
    cfg.num_layers = 1 + trial % 3;
    cfg.embedding = trial % 2 ? EmbeddingKind::angle : EmbeddingKind::angle_with_hadamard;
    auto p = PQCParams::random(cfg.num_layers, cfg.num_qubits, rng);
    std::vector<double> x(static_cast<std::size_t>(cfg.num_qubits)), up(x.size());
    for (auto& v : x) v = u(rng);
    for (auto& v : up) v = u(rng);
    const auto g = pqc_param_shift_grad(std::span<const double>(x), p, cfg, up, true);
    const double h = 1e-5;
    for (std::size_t k = 0; k < p.thetas.size(); ++k) {
      const double t0 = p.thetas[k];
      p.thetas[k] = t0 + h;
      const double fp = weighted(pqc_forward(std::span<const double>(x), p, cfg), up);
      p.thetas[k] = t0 - h;
      const double fm = weighted(pqc_forward(std::span<const double>(x), p, cfg), up);
      p.thetas[k] = t0;
      worst = std::max(worst, nn::relative_error(g.thetas[k], (fp - fm) / (2 * h)));
    }
    for (std::size_t k = 0; k < x.size(); ++k) {
      auto xp = x, xm = x;
      xp[k] += h;
      xm[k] -= h;
      const double fd = (weighted(pqc_forward(std::span<const double>(xp), p, cfg), up) -
                         weighted(pqc_forward(std::span<const double>(xm), p, cfg), up)) /
                        (2 * h);
      worst = std::max(worst, nn::relative_error(g.input_angles[k], fd));
    }
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("amplitude embedding: shift rule refused, finite-difference input gradient") {
  std::mt19937_64 rng(4);
  QuantumLayerConfig cfg;
  cfg.num_qubits = 2;
  cfg.num_layers = 2;
  cfg.embedding = EmbeddingKind::amplitude;
  const auto p = PQCParams::random(2, 2, rng);
  const std::vector<double> x{0.4, -0.2, 0.9, 0.1}, up{1.0, -0.5};
  CHECK_THROWS_AS(pqc_param_shift_grad(std::span<const double>(x), p, cfg, up, true), UnsupportedGradient);
  const auto g = pqc_param_shift_grad(std::span<const double>(x), p, cfg, up, false);
  CHECK(g.thetas.size() == 4);
  CHECK(g.input_angles.empty());

  // Analytic oracle: d/dx of <psi(x)|O|psi(x)>, psi = U x/|x|, with O = sum up_q Z_q.
  Eigen::MatrixXcd U(4, 4);
  for (int c = 0; c < 4; ++c) U.col(c) = dense_circuit(Eigen::VectorXcd::Unit(4, c), p);
  const Eigen::MatrixXcd O = up[0] * oracle::on_qubit(oracle::pauli_z(), 0, 2) + up[1] * oracle::on_qubit(oracle::pauli_z(), 1, 2);
  const Eigen::MatrixXd M = (U.adjoint() * O * U).real();
  Eigen::VectorXd xv(4);
  for (int i = 0; i < 4; ++i) xv(i) = x[static_cast<std::size_t>(i)];
  const double n2 = xv.squaredNorm();
  const double f = xv.dot(M * xv) / n2;
  const Eigen::VectorXd grad = (2 * M * xv) / n2 - (2 * f / n2) * xv;
  const auto fd = amplitude_input_grad_fd(x, p, cfg, up);
  for (int i = 0; i < 4; ++i) CHECK(fd[static_cast<std::size_t>(i)] == doctest::Approx(grad(i)).epsilon(1e-7));
}

TEST_CASE("noise path") {
  std::mt19937_64 rng(8);
  QuantumLayerConfig cfg;
  cfg.num_qubits = 3;
  cfg.num_layers = 2;
  const auto p = PQCParams::random(2, 3, rng);
  const std::vector<double> x{0.5, 1.5, -0.7};
  const auto clean = pqc_forward(std::span<const double>(x), p, cfg);
  for (auto kind : {qsim::NoiseKind::bit_flip, qsim::NoiseKind::phase_flip, qsim::NoiseKind::depolarizing}) {
    cfg.noise = NoiseSpec{kind, 0.0};
    const auto z = pqc_forward(std::span<const double>(x), p, cfg);
    for (int q = 0; q < 3; ++q) CHECK(std::abs(z[q] - clean[q]) < 1e-12);
  }

  // One qubit, one layer, certain bit flip: a flip after the embedding and
  // after the layer gives X Ry(t) X Ry(x)|0> = Ry(x - t)|0>, so <Z> = cos(x - t)
  // where the noiseless circuit gives cos(x + t).
  QuantumLayerConfig one;
  one.num_qubits = 1;
  one.num_layers = 1;
  one.embedding = EmbeddingKind::angle;
  PQCParams t(1, 1);
  t.thetas = {0.8};
  const std::vector<double> in{0.3};
  CHECK(pqc_forward(std::span<const double>(in), t, one)[0] == doctest::Approx(std::cos(1.1)).epsilon(1e-12));
  one.noise = NoiseSpec{qsim::NoiseKind::bit_flip, 1.0};
  CHECK(pqc_forward(std::span<const double>(in), t, one)[0] == doctest::Approx(std::cos(-0.5)).epsilon(1e-12));

  // Mean absolute deviation from the noiseless output grows with p.
  for (auto kind : {qsim::NoiseKind::bit_flip, qsim::NoiseKind::depolarizing}) {
    double prev = -1.0;
    for (double pr : {0.0, 0.05, 0.3}) {
      cfg.noise = NoiseSpec{kind, pr};
      const auto z = pqc_forward(std::span<const double>(x), p, cfg);
      double dev = 0.0;
      for (int q = 0; q < 3; ++q) dev += std::abs(z[q] - clean[q]);
      CHECK(dev >= prev);
      prev = dev;
    }
  }
}

TEST_CASE("quanvolution block layout and gradient") {
  // 4 x 4 input -> 2 x 2 blocks -> output (2, 2, 2).
  std::vector<double> x(16);
  for (int i = 0; i < 16; ++i) x[i] = 0.1 * (i + 1) * (i % 3 == 0 ? -1 : 1);
  std::mt19937_64 rng(6);
  const auto p = PQCParams::random(2, 2, rng);
  QuantumLayerConfig cfg;
  cfg.num_qubits = 2;
  cfg.num_layers = 2;
  cfg.embedding = EmbeddingKind::amplitude;
  const auto out = quanvolution_forward(x, 4, 4, p, cfg);
  CHECK(out.channels == 2);
  CHECK(out.height == 2);
  CHECK(out.width == 2);
  // Block (1, 0) reads x(2,0), x(2,1), x(3,0), x(3,1).
  const std::vector<double> blk{x[8], x[9], x[12], x[13]};
  const auto z = pqc_forward(std::span<const double>(blk), p, cfg);
  CHECK(out.at(1, 0, 0) == doctest::Approx(z[0]).epsilon(1e-14));
  CHECK(out.at(1, 0, 1) == doctest::Approx(z[1]).epsilon(1e-14));

  QuanvOutput up{2, 2, 2, {0.3, -1.0, 0.5, 0.2, -0.4, 0.9, 0.0, 0.0}};
  const auto g = quanvolution_grad(x, 4, 4, p, cfg, up, true);
  auto objective = [&](const PQCParams& pp, const std::vector<double>& xx) {
    const auto o = quanvolution_forward(xx, 4, 4, pp, cfg);
    return weighted(o.data, up.data);
  };
  const double h = 1e-5;
  for (std::size_t k = 0; k < p.thetas.size(); ++k) {
    auto a = p, b = p;
    a.thetas[k] += h;
    b.thetas[k] -= h;
    CHECK(nn::relative_error(g.thetas[k], (objective(a, x) - objective(b, x)) / (2 * h)) < 1e-6);
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    auto a = x, b = x;
    a[i] += h;
    b[i] -= h;
    CHECK(nn::relative_error(g.input[i], (objective(p, a) - objective(p, b)) / (2 * h)) < 1e-5);
  }
  CHECK_THROWS(quanvolution_forward(std::vector<double>(15), 3, 5, p, cfg));
}
