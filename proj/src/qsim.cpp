#include "hqnn/qsim.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace hqnn::qsim {

namespace {

constexpr double kNormTol = 1e-10;

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

int log2_exact(std::size_t n) {
  int q = 0;
  while ((std::size_t{1} << q) < n) ++q;
  return q;
}

// Bit mask of `qubit` inside a basis index (qubit 0 is the MSB).
std::size_t qubit_mask(int num_qubits, int qubit) {
  return std::size_t{1} << (num_qubits - 1 - qubit);
}

void check_qubit(int num_qubits, int qubit) {
  if (qubit < 0 || qubit >= num_qubits) {
    throw QsimError("qubit index " + std::to_string(qubit) + " out of range for " +
                    std::to_string(num_qubits) + " qubits");
  }
}

void check_targets(const GateOp& gate, int num_qubits) {
  for (int t : gate.targets) check_qubit(num_qubits, t);
}

// Iterates over all index pairs (i0, i1) differing only in `mask`, i0 having the bit clear.
template <class Fn>
void for_each_pair(std::size_t dim, std::size_t mask, Fn&& fn) {
  for (std::size_t base = 0; base < dim; base += 2 * mask) {
    for (std::size_t off = 0; off < mask; ++off) {
      const std::size_t i0 = base + off;
      fn(i0, i0 | mask);
    }
  }
}

// Applies a 2x2 matrix to rows (left multiply) of a column-major matrix.
void apply_single_rows(Eigen::MatrixXcd& m, std::size_t mask, const Eigen::Matrix2cd& u) {
  const auto dim = static_cast<std::size_t>(m.rows());
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    cplx* col = m.col(c).data();
    for_each_pair(dim, mask, [&](std::size_t i0, std::size_t i1) {
      const cplx a = col[i0];
      const cplx b = col[i1];
      col[i0] = u(0, 0) * a + u(0, 1) * b;
      col[i1] = u(1, 0) * a + u(1, 1) * b;
    });
  }
}

// Right-multiplies by u^dagger (acts on column indices).
void apply_single_cols_adjoint(Eigen::MatrixXcd& m, std::size_t mask, const Eigen::Matrix2cd& u) {
  const auto dim = static_cast<std::size_t>(m.cols());
  for_each_pair(dim, mask, [&](std::size_t j0, std::size_t j1) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      const cplx a = m(r, static_cast<Eigen::Index>(j0));
      const cplx b = m(r, static_cast<Eigen::Index>(j1));
      m(r, static_cast<Eigen::Index>(j0)) = a * std::conj(u(0, 0)) + b * std::conj(u(0, 1));
      m(r, static_cast<Eigen::Index>(j1)) = a * std::conj(u(1, 0)) + b * std::conj(u(1, 1));
    }
  });
}

Eigen::Matrix2cd single_qubit_matrix(const GateOp& gate) {
  const double s = 1.0 / std::sqrt(2.0);
  Eigen::Matrix2cd u;
  switch (gate.kind) {
    case GateKind::H:
      u << s, s, s, -s;
      break;
    case GateKind::X:
      u << 0, 1, 1, 0;
      break;
    case GateKind::Y:
      u << 0, cplx(0, -1), cplx(0, 1), 0;
      break;
    case GateKind::Z:
      u << 1, 0, 0, -1;
      break;
    case GateKind::Ry:
      u = ry_matrix(gate.theta);
      break;
    case GateKind::CNOT:
      throw QsimError("CNOT is not a single-qubit gate");
  }
  return u;
}

}  // namespace

// ---------------------------------------------------------------- states

StateVector::StateVector(int num_qubits) : num_qubits_(num_qubits) {
  if (num_qubits < 1) throw QsimError("state needs at least one qubit");
  amps_.assign(std::size_t{1} << num_qubits, cplx{0.0, 0.0});
  amps_[0] = 1.0;
}

StateVector::StateVector(int num_qubits, std::vector<cplx> amps)
    : num_qubits_(num_qubits), amps_(std::move(amps)) {}

StateVector StateVector::from_amplitudes(std::vector<cplx> amplitudes) {
  if (amplitudes.size() < 2 || !is_power_of_two(amplitudes.size())) {
    throw QsimError("amplitude vector length must be a power of two >= 2");
  }
  double n2 = 0.0;
  for (const auto& a : amplitudes) n2 += std::norm(a);
  if (std::abs(std::sqrt(n2) - 1.0) > kNormTol) throw QsimError("amplitudes are not normalized");
  const int q = log2_exact(amplitudes.size());
  return StateVector(q, std::move(amplitudes));
}

StateVector StateVector::basis(int num_qubits, std::size_t index) {
  StateVector s(num_qubits);
  if (index >= s.dim()) throw QsimError("basis index out of range");
  s.amps_[0] = 0.0;
  s.amps_[index] = 1.0;
  return s;
}

double StateVector::norm() const {
  double n2 = 0.0;
  for (const auto& a : amps_) n2 += std::norm(a);
  return std::sqrt(n2);
}

DensityMatrix::DensityMatrix(int num_qubits) : num_qubits_(num_qubits) {
  if (num_qubits < 1) throw QsimError("density matrix needs at least one qubit");
  const auto d = Eigen::Index{1} << num_qubits;
  rho_ = Eigen::MatrixXcd::Zero(d, d);
  rho_(0, 0) = 1.0;
}

DensityMatrix::DensityMatrix(int num_qubits, Eigen::MatrixXcd rho)
    : num_qubits_(num_qubits), rho_(std::move(rho)) {
  const auto d = Eigen::Index{1} << num_qubits;
  if (rho_.rows() != d || rho_.cols() != d) throw QsimError("density matrix has wrong dimension");
}

DensityMatrix DensityMatrix::maximally_mixed(int num_qubits) {
  const auto d = Eigen::Index{1} << num_qubits;
  Eigen::MatrixXcd m = Eigen::MatrixXcd::Identity(d, d) / static_cast<double>(d);
  return DensityMatrix(num_qubits, std::move(m));
}

DensityMatrix to_density(const StateVector& state) {
  Eigen::Map<const Eigen::VectorXcd> psi(state.amplitudes().data(),
                                         static_cast<Eigen::Index>(state.dim()));
  return DensityMatrix(state.num_qubits(), psi * psi.adjoint());
}

// ---------------------------------------------------------------- gates

std::string_view to_string(GateKind kind) {
  switch (kind) {
    case GateKind::H: return "H";
    case GateKind::X: return "X";
    case GateKind::Y: return "Y";
    case GateKind::Z: return "Z";
    case GateKind::Ry: return "Ry";
    case GateKind::CNOT: return "CNOT";
  }
  return "?";
}

Eigen::Matrix2cd ry_matrix(double theta) {
  const double c = std::cos(theta / 2.0);
  const double s = std::sin(theta / 2.0);
  Eigen::Matrix2cd u;
  u << c, -s, s, c;
  return u;
}

Eigen::MatrixXcd GateOp::matrix() const {
  if (kind == GateKind::CNOT) {
    Eigen::MatrixXcd u = Eigen::MatrixXcd::Zero(4, 4);
    u(0, 0) = 1.0;
    u(1, 1) = 1.0;
    u(2, 3) = 1.0;
    u(3, 2) = 1.0;
    return u;
  }
  return single_qubit_matrix(*this);
}

GateOp make_gate(GateKind kind, std::vector<int> targets, std::optional<double> theta,
                 std::optional<int> num_qubits) {
  const std::size_t arity = kind == GateKind::CNOT ? 2 : 1;
  if (targets.size() != arity) {
    throw QsimError(std::string(to_string(kind)) + " expects " + std::to_string(arity) +
                    " qubit index(es)");
  }
  for (int t : targets) {
    if (t < 0) throw QsimError("negative qubit index");
  }
  if (arity == 2 && targets[0] == targets[1]) throw QsimError("control and target must differ");
  if (kind == GateKind::Ry && !theta) throw QsimError("Ry requires an angle");
  if (kind != GateKind::Ry && theta) throw QsimError("only Ry takes an angle");
  if (theta && !std::isfinite(*theta)) throw QsimError("gate angle must be finite");
  GateOp g{kind, theta.value_or(0.0), std::move(targets)};
  if (num_qubits) check_targets(g, *num_qubits);
  return g;
}

GateOp hadamard(int q) { return make_gate(GateKind::H, {q}); }
GateOp pauli_x(int q) { return make_gate(GateKind::X, {q}); }
GateOp pauli_y(int q) { return make_gate(GateKind::Y, {q}); }
GateOp pauli_z(int q) { return make_gate(GateKind::Z, {q}); }
GateOp ry(int q, double theta) { return make_gate(GateKind::Ry, {q}, theta); }
GateOp cnot(int control, int target) { return make_gate(GateKind::CNOT, {control, target}); }

void apply_gate_inplace(StateVector& state, const GateOp& gate) {
  const int nq = state.num_qubits();
  check_targets(gate, nq);
  auto amps = state.amplitudes_mut();
  const std::size_t dim = amps.size();

  if (gate.kind == GateKind::CNOT) {
    const std::size_t cmask = qubit_mask(nq, gate.targets[0]);
    const std::size_t tmask = qubit_mask(nq, gate.targets[1]);
    for_each_pair(dim, tmask, [&](std::size_t i0, std::size_t i1) {
      if (i0 & cmask) std::swap(amps[i0], amps[i1]);
    });
    return;
  }

  const std::size_t mask = qubit_mask(nq, gate.targets[0]);
  if (gate.kind == GateKind::Ry) {
    // Real rotation; avoids complex multiplies in the hot path.
    const double c = std::cos(gate.theta / 2.0);
    const double s = std::sin(gate.theta / 2.0);
    for_each_pair(dim, mask, [&](std::size_t i0, std::size_t i1) {
      const cplx a = amps[i0];
      const cplx b = amps[i1];
      amps[i0] = c * a - s * b;
      amps[i1] = s * a + c * b;
    });
    return;
  }
  const Eigen::Matrix2cd u = single_qubit_matrix(gate);
  for_each_pair(dim, mask, [&](std::size_t i0, std::size_t i1) {
    const cplx a = amps[i0];
    const cplx b = amps[i1];
    amps[i0] = u(0, 0) * a + u(0, 1) * b;
    amps[i1] = u(1, 0) * a + u(1, 1) * b;
  });
}

StateVector apply_gate(StateVector state, const GateOp& gate) {
  apply_gate_inplace(state, gate);
  return state;
}

void apply_gate_inplace(DensityMatrix& rho, const GateOp& gate) {
  const int nq = rho.num_qubits();
  check_targets(gate, nq);
  Eigen::MatrixXcd& m = rho.matrix_mut();
  const std::size_t dim = rho.dim();

  if (gate.kind == GateKind::CNOT) {
    const std::size_t cmask = qubit_mask(nq, gate.targets[0]);
    const std::size_t tmask = qubit_mask(nq, gate.targets[1]);
    for_each_pair(dim, tmask, [&](std::size_t i0, std::size_t i1) {
      if (i0 & cmask) {
        m.row(static_cast<Eigen::Index>(i0)).swap(m.row(static_cast<Eigen::Index>(i1)));
        m.col(static_cast<Eigen::Index>(i0)).swap(m.col(static_cast<Eigen::Index>(i1)));
      }
    });
    return;
  }
  const std::size_t mask = qubit_mask(nq, gate.targets[0]);
  const Eigen::Matrix2cd u = single_qubit_matrix(gate);
  apply_single_rows(m, mask, u);
  apply_single_cols_adjoint(m, mask, u);
}

DensityMatrix apply_gate(DensityMatrix rho, const GateOp& gate) {
  apply_gate_inplace(rho, gate);
  return rho;
}

// ---------------------------------------------------------------- measurement

double prob_zero(const StateVector& state, int qubit) {
  check_qubit(state.num_qubits(), qubit);
  const std::size_t mask = qubit_mask(state.num_qubits(), qubit);
  double p0 = 0.0;
  const auto amps = state.amplitudes();
  for (std::size_t i = 0; i < amps.size(); ++i) {
    if (!(i & mask)) p0 += std::norm(amps[i]);
  }
  return p0;
}

double prob_zero(const DensityMatrix& rho, int qubit) {
  check_qubit(rho.num_qubits(), qubit);
  const std::size_t mask = qubit_mask(rho.num_qubits(), qubit);
  double p0 = 0.0;
  for (std::size_t i = 0; i < rho.dim(); ++i) {
    if (!(i & mask)) p0 += rho.matrix()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)).real();
  }
  return p0;
}

double expectation_z(const StateVector& state, int qubit) {
  check_qubit(state.num_qubits(), qubit);
  const std::size_t mask = qubit_mask(state.num_qubits(), qubit);
  double e = 0.0;
  const auto amps = state.amplitudes();
  for (std::size_t i = 0; i < amps.size(); ++i) {
    e += (i & mask) ? -std::norm(amps[i]) : std::norm(amps[i]);
  }
  return e;
}

double expectation_z(const DensityMatrix& rho, int qubit) {
  check_qubit(rho.num_qubits(), qubit);
  const std::size_t mask = qubit_mask(rho.num_qubits(), qubit);
  double e = 0.0;
  for (std::size_t i = 0; i < rho.dim(); ++i) {
    const double d = rho.matrix()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)).real();
    e += (i & mask) ? -d : d;
  }
  return e;
}

namespace {

double sample_from_p0(double p0, int shots, std::uint64_t seed) {
  if (shots < 1) throw QsimError("shots must be >= 1");
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution zero(std::clamp(p0, 0.0, 1.0));
  long plus = 0;
  for (int s = 0; s < shots; ++s) plus += zero(rng) ? 1 : 0;
  return static_cast<double>(2 * plus - shots) / shots;
}

}  // namespace

double sample_expectation_z(const StateVector& state, int qubit, int shots, std::uint64_t seed) {
  return sample_from_p0(prob_zero(state, qubit), shots, seed);
}

double sample_expectation_z(const DensityMatrix& rho, int qubit, int shots, std::uint64_t seed) {
  return sample_from_p0(prob_zero(rho, qubit), shots, seed);
}

// ---------------------------------------------------------------- noise

std::string_view to_string(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::bit_flip: return "bit_flip";
    case NoiseKind::phase_flip: return "phase_flip";
    case NoiseKind::depolarizing: return "depolarizing";
  }
  return "?";
}

NoiseKind parse_noise_kind(std::string_view name) {
  if (name == "bit_flip" || name == "bitflip") return NoiseKind::bit_flip;
  if (name == "phase_flip" || name == "phaseflip") return NoiseKind::phase_flip;
  if (name == "depolarizing" || name == "depolarising") return NoiseKind::depolarizing;
  throw QsimError("unknown noise channel '" + std::string(name) + "'");
}

double NoiseChannel::completeness_error() const {
  Eigen::Matrix2cd sum = Eigen::Matrix2cd::Zero();
  for (const auto& k : kraus) sum += k.adjoint() * k;
  return (sum - Eigen::Matrix2cd::Identity()).cwiseAbs().maxCoeff();
}

NoiseChannel make_noise_channel(NoiseKind kind, double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw QsimError("noise probability must lie in [0, 1]");
  const Eigen::Matrix2cd id = Eigen::Matrix2cd::Identity();
  Eigen::Matrix2cd x, y, z;
  x << 0, 1, 1, 0;
  y << 0, cplx(0, -1), cplx(0, 1), 0;
  z << 1, 0, 0, -1;

  NoiseChannel ch{kind, p, {}};
  if (p == 0.0) {
    ch.kraus.push_back(id);
    return ch;
  }
  const double keep = std::sqrt(1.0 - p);
  switch (kind) {
    case NoiseKind::bit_flip:
      ch.kraus = {keep * id, std::sqrt(p) * x};
      break;
    case NoiseKind::phase_flip:
      ch.kraus = {keep * id, std::sqrt(p) * z};
      break;
    case NoiseKind::depolarizing: {
      const double e = std::sqrt(p / 3.0);
      ch.kraus = {keep * id, e * x, e * y, e * z};
      break;
    }
  }
  return ch;
}

void apply_channel_inplace(DensityMatrix& rho, const NoiseChannel& channel, int qubit) {
  check_qubit(rho.num_qubits(), qubit);
  if (channel.kraus.size() == 1 && channel.kraus[0].isIdentity(0.0)) return;
  const std::size_t mask = qubit_mask(rho.num_qubits(), qubit);
  Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(rho.matrix().rows(), rho.matrix().cols());
  for (const auto& k : channel.kraus) {
    Eigen::MatrixXcd term = rho.matrix();
    apply_single_rows(term, mask, k);
    apply_single_cols_adjoint(term, mask, k);
    out += term;
  }
  rho.matrix_mut() = std::move(out);
}

DensityMatrix apply_channel(const DensityMatrix& rho, const NoiseChannel& channel, int qubit) {
  DensityMatrix out = rho;
  apply_channel_inplace(out, channel, qubit);
  return out;
}

}  // namespace hqnn::qsim
