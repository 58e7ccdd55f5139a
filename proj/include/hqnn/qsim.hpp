#pragma once

// Small exact quantum-circuit simulator: statevectors, density matrices,
// the gate set {H, X, Y, Z, Ry, CNOT} and single-qubit Kraus channels.
//
// Qubit ordering: qubit 0 is the leftmost label in ket notation and the most
// significant bit of the basis index, so |10> on two qubits is index 2.

#include <complex>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace hqnn::qsim {

using cplx = std::complex<double>;

class QsimError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class StateVector {
 public:
  /// |0...0> on `num_qubits` qubits.
  explicit StateVector(int num_qubits);

  /// Takes ownership of `amplitudes`; length must be a power of two and the
  /// vector must have unit norm within 1e-10.
  static StateVector from_amplitudes(std::vector<cplx> amplitudes);

  /// Computational basis state |index>.
  static StateVector basis(int num_qubits, std::size_t index);

  int num_qubits() const { return num_qubits_; }
  std::size_t dim() const { return amps_.size(); }
  std::span<const cplx> amplitudes() const { return amps_; }
  std::span<cplx> amplitudes_mut() { return amps_; }
  const cplx& operator[](std::size_t i) const { return amps_[i]; }

  double norm() const;

 private:
  StateVector(int num_qubits, std::vector<cplx> amps);
  int num_qubits_;
  std::vector<cplx> amps_;
};

class DensityMatrix {
 public:
  explicit DensityMatrix(int num_qubits);
  DensityMatrix(int num_qubits, Eigen::MatrixXcd rho);

  /// I / 2^Q.
  static DensityMatrix maximally_mixed(int num_qubits);

  int num_qubits() const { return num_qubits_; }
  std::size_t dim() const { return static_cast<std::size_t>(rho_.rows()); }
  const Eigen::MatrixXcd& matrix() const { return rho_; }
  Eigen::MatrixXcd& matrix_mut() { return rho_; }
  cplx trace() const { return rho_.trace(); }

 private:
  int num_qubits_;
  Eigen::MatrixXcd rho_;
};

enum class GateKind { H, X, Y, Z, Ry, CNOT };

std::string_view to_string(GateKind kind);

struct GateOp {
  GateKind kind;
  double theta = 0.0;        // radians, Ry only
  std::vector<int> targets;  // {q} or {control, target}

  /// 2x2 for single-qubit kinds, 4x4 (control as the high bit) for CNOT.
  Eigen::MatrixXcd matrix() const;
};

/// Validates arity, distinctness and theta presence. `num_qubits`, when given,
/// also range-checks the targets.
GateOp make_gate(GateKind kind, std::vector<int> targets, std::optional<double> theta = std::nullopt,
                 std::optional<int> num_qubits = std::nullopt);

GateOp hadamard(int q);
GateOp pauli_x(int q);
GateOp pauli_y(int q);
GateOp pauli_z(int q);
GateOp ry(int q, double theta);
GateOp cnot(int control, int target);

Eigen::Matrix2cd ry_matrix(double theta);

/// In-place application by strided amplitude updates.
void apply_gate_inplace(StateVector& state, const GateOp& gate);
StateVector apply_gate(StateVector state, const GateOp& gate);

/// rho -> U rho U^dagger, applied as row/column updates.
void apply_gate_inplace(DensityMatrix& rho, const GateOp& gate);
DensityMatrix apply_gate(DensityMatrix rho, const GateOp& gate);

DensityMatrix to_density(const StateVector& state);

/// P(qubit = 0) - P(qubit = 1).
double expectation_z(const StateVector& state, int qubit);
double expectation_z(const DensityMatrix& rho, int qubit);

/// Probability of reading 0 on `qubit`.
double prob_zero(const StateVector& state, int qubit);
double prob_zero(const DensityMatrix& rho, int qubit);

/// Mean of `shots` i.i.d. +/-1 outcomes with P(+1) = P(qubit = 0).
double sample_expectation_z(const StateVector& state, int qubit, int shots, std::uint64_t seed);
double sample_expectation_z(const DensityMatrix& rho, int qubit, int shots, std::uint64_t seed);

enum class NoiseKind { bit_flip, phase_flip, depolarizing };

std::string_view to_string(NoiseKind kind);
NoiseKind parse_noise_kind(std::string_view name);

struct NoiseChannel {
  NoiseKind kind;
  double p;
  std::vector<Eigen::Matrix2cd> kraus;

  /// max |sum_i K_i^dagger K_i - I|.
  double completeness_error() const;
};

NoiseChannel make_noise_channel(NoiseKind kind, double p);

/// Phi(rho) = sum_i K_i rho K_i^dagger with each K_i acting on `qubit`.
DensityMatrix apply_channel(const DensityMatrix& rho, const NoiseChannel& channel, int qubit);
void apply_channel_inplace(DensityMatrix& rho, const NoiseChannel& channel, int qubit);

}  // namespace hqnn::qsim
