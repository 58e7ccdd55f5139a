#include <cmath>
#include <complex>
#include <iomanip>
#include <numbers>
#include <random>
#include <sstream>

#include "hqnn/beamforming.hpp"
#include "hqnn/cli.hpp"
#include "hqnn/models.hpp"
#include "hqnn/nn.hpp"
#include "hqnn/qlayers.hpp"
#include "hqnn/qsim.hpp"

namespace hqnn::cli {

namespace {

using cplx = std::complex<double>;

class Checker {
 public:
  explicit Checker(std::ostream& out) : out_(out) {}

  void check(bool ok, const std::string& name, const std::string& detail = {}) {
    out_ << (ok ? "PASS  " : "FAIL  ") << name;
    if (!detail.empty()) out_ << "  (" << detail << ")";
    out_ << "\n";
    all_ &= ok;
  }
  bool all() const { return all_; }
  std::ostream& out() { return out_; }

 private:
  std::ostream& out_;
  bool all_ = true;
};

std::string sci(double v) {
  std::ostringstream os;
  os << std::scientific << std::setprecision(2) << v;
  return os.str();
}

void suite_gates(Checker& c) {
  using namespace qsim;
  const double s = 1.0 / std::sqrt(2.0);
  const cplx i(0.0, 1.0);
  Eigen::Matrix2cd H, X, Y, Z;
  H << s, s, s, -s;
  X << 0, 1, 1, 0;
  Y << 0, -i, i, 0;
  Z << 1, 0, 0, -1;
  const double th = 0.731;
  Eigen::Matrix2cd R;
  R << std::cos(th / 2), -std::sin(th / 2), std::sin(th / 2), std::cos(th / 2);
  Eigen::Matrix4cd CX = Eigen::Matrix4cd::Zero();
  CX(0, 0) = CX(1, 1) = CX(2, 3) = CX(3, 2) = 1.0;

  struct Row {
    const char* name;
    GateOp op;
    Eigen::MatrixXcd want;
  };
  const Row rows[] = {{"H", hadamard(0), H},  {"X", pauli_x(0), X},  {"Y", pauli_y(0), Y},
                      {"Z", pauli_z(0), Z},   {"Ry", ry(0, th), R},  {"CNOT", cnot(0, 1), CX}};
  for (const auto& r : rows) {
    const Eigen::MatrixXcd m = r.op.matrix();
    const double diff = (m - r.want).cwiseAbs().maxCoeff();
    const double unit = (m.adjoint() * m - Eigen::MatrixXcd::Identity(m.rows(), m.cols())).cwiseAbs().maxCoeff();
    c.check(diff <= 1e-12 && unit <= 1e-12, std::string("gate ") + r.name + " matrix and unitarity",
            "diff " + sci(diff) + ", unitarity " + sci(unit));
  }

  StateVector bell(2);
  apply_gate_inplace(bell, hadamard(0));
  apply_gate_inplace(bell, cnot(0, 1));
  const double bell_err = std::max({std::abs(bell[0] - s), std::abs(bell[3] - s), std::abs(bell[1]), std::abs(bell[2])});
  c.check(bell_err <= 1e-12, "Bell state (|00> + |11>)/sqrt2", "max error " + sci(bell_err));

  const StateVector flipped = apply_gate(StateVector::basis(2, 2), cnot(0, 1));
  const bool exact = flipped[3] == cplx(1.0, 0.0) && flipped[0] == 0.0 && flipped[1] == 0.0 && flipped[2] == 0.0;
  c.check(exact, "CNOT |10> = |11> bit-exact");
}

void suite_kraus(Checker& c) {
  using namespace qsim;
  for (NoiseKind kind : {NoiseKind::bit_flip, NoiseKind::phase_flip, NoiseKind::depolarizing}) {
    for (double p : {0.0, 0.05, 0.3, 0.5, 1.0}) {
      const double e = make_noise_channel(kind, p).completeness_error();
      std::ostringstream name;
      name << "Kraus completeness " << to_string(kind) << " p=" << p;
      c.check(e <= 1e-12, name.str(), sci(e));
    }
  }
}

void suite_grad(Checker& c, int cases, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> qd(1, 4), ld(1, 3);
  std::uniform_real_distribution<double> ang(-std::numbers::pi, std::numbers::pi);
  double worst = 0.0;
  int failures = 0;
  for (int t = 0; t < cases; ++t) {
    qlayers::QuantumLayerConfig cfg;
    cfg.num_qubits = qd(rng);
    cfg.num_layers = ld(rng);
    cfg.embedding = (t % 2 == 0) ? qlayers::EmbeddingKind::angle : qlayers::EmbeddingKind::angle_with_hadamard;
    const auto params = qlayers::PQCParams::random(cfg.num_layers, cfg.num_qubits, rng);
    std::vector<double> x(static_cast<std::size_t>(cfg.num_qubits)), up(x.size());
    for (auto& v : x) v = ang(rng);
    for (auto& v : up) v = ang(rng);
    const auto g = qlayers::pqc_param_shift_grad(std::span<const double>(x), params, cfg, up, true);
    auto objective = [&](const qlayers::PQCParams& p, const std::vector<double>& in) {
      const auto z = qlayers::pqc_forward(std::span<const double>(in), p, cfg);
      double acc = 0.0;
      for (std::size_t q = 0; q < z.size(); ++q) acc += up[q] * z[q];
      return acc;
    };
    const double h = 1e-5;
    for (std::size_t k = 0; k < params.thetas.size(); ++k) {
      auto plus = params, minus = params;
      plus.thetas[k] += h;
      minus.thetas[k] -= h;
      const double fd = (objective(plus, x) - objective(minus, x)) / (2 * h);
      const double e = nn::relative_error(g.thetas[k], fd);
      worst = std::max(worst, e);
      failures += e > 1e-6;
    }
    for (std::size_t k = 0; k < x.size(); ++k) {
      auto plus = x, minus = x;
      plus[k] += h;
      minus[k] -= h;
      const double fd = (objective(params, plus) - objective(params, minus)) / (2 * h);
      const double e = nn::relative_error(g.input_angles[k], fd);
      worst = std::max(worst, e);
      failures += e > 1e-6;
    }
  }
  c.check(failures == 0, "parameter shift vs finite differences on " + std::to_string(cases) + " random circuits",
          "max relative error " + sci(worst));
}

void suite_wmmse(Checker& c, int cases, std::uint64_t seed) {
  bf::SystemParams sys;
  const double P = sys.power_w();
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> dim(1, 6);
  double worst_drop = 0.0;
  for (int t = 0; t < cases; ++t) {
    sys.K = dim(rng);
    sys.Nt = dim(rng);
    const auto sample = bf::generate_sample(sys, seed, 0x77, static_cast<std::uint64_t>(t));
    const auto r = bf::wmmse(sample.H, P);
    for (std::size_t i = 1; i < r.rate_history.size(); ++i)
      worst_drop = std::max(worst_drop, r.rate_history[i - 1] - r.rate_history[i]);
  }
  c.check(worst_drop <= 1e-9, "WMMSE rate history non-decreasing on " + std::to_string(cases) + " instances",
          "largest drop " + sci(worst_drop));

  double worst_mf = 0.0;
  sys.K = 1;
  sys.Nt = 4;
  for (int t = 0; t < 10; ++t) {
    const auto sample = bf::generate_sample(sys, seed, 0x78, static_cast<std::uint64_t>(t));
    const double mf = std::log2(1.0 + P * sample.H.squaredNorm());
    worst_mf = std::max(worst_mf, std::abs(bf::wmmse(sample.H, P).rate_history.back() - mf));
  }
  c.check(worst_mf <= 1e-6, "WMMSE single user equals matched filter", "max error " + sci(worst_mf));
}

void suite_params(Checker& c, int K) {
  using models::ModelKind;
  std::ostream& out = c.out();
  out << "  K = Nt = " << K << ", F = 8, m = 3, L = 2\n";
  out << "  " << std::left << std::setw(22) << "model" << std::right << std::setw(10) << "formula"
      << std::setw(10) << "walked" << "\n";
  const auto classical_cfg = models::ModelConfig::defaults(ModelKind::classical_cnn, K, K);
  const models::Model classical(classical_cfg, 1);
  auto row = [&](const models::ModelConfig& cfg, std::size_t walked) {
    const long formula = models::count_params(cfg);
    out << "  " << std::left << std::setw(22) << models::to_string(cfg.kind) << std::right << std::setw(10)
        << formula << std::setw(10) << walked << "\n";
    c.check(formula == static_cast<long>(walked),
            std::string("parameter count ") + std::string(models::to_string(cfg.kind)) + " K=" + std::to_string(K));
  };
  row(classical_cfg, classical.trainable_scalars());
  const auto qnn_cfg = models::ModelConfig::defaults(ModelKind::hybrid_qnn, K, K);
  row(qnn_cfg, models::Model(qnn_cfg, 1).trainable_scalars());
  auto tr_cfg = models::ModelConfig::defaults(ModelKind::hybrid_qnn_transfer, K, K);
  row(tr_cfg, models::Model::transfer_from(classical, tr_cfg, 1).trainable_scalars());
  if (K % 2 == 0) {
    const auto qcnn_cfg = models::ModelConfig::defaults(ModelKind::hybrid_qcnn, K, K);
    row(qcnn_cfg, models::Model(qcnn_cfg, 1).trainable_scalars());
  } else {
    out << "  hybrid_qcnn skipped: K must be even\n";
  }
}

}  // namespace

bool run_verify(const VerifyOptions& opts, std::ostream& out) {
  Checker c(out);
  bool known = false;
  auto want = [&](const char* s) {
    const bool on = opts.suite == "all" || opts.suite == s;
    if (on) out << "[" << s << "]\n";
    known |= on;
    return on;
  };
  if (want("gates")) suite_gates(c);
  if (want("kraus")) suite_kraus(c);
  if (want("grad")) suite_grad(c, opts.grad_cases, opts.seed);
  if (want("wmmse")) suite_wmmse(c, opts.wmmse_cases, opts.seed);
  if (want("params")) suite_params(c, opts.K);
  if (!known) {
    out << "unknown suite '" << opts.suite << "'\n";
    return false;
  }
  out << (c.all() ? "all checks passed\n" : "some checks FAILED\n");
  return c.all();
}

}  // namespace hqnn::cli
