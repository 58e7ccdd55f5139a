#pragma once

// Quantum neural-network building blocks: data embeddings, the layered
// CNOT-chain + Ry circuit, Z-basis readout, parameter-shift gradients and the
// trainable 2x2 quanvolution filter.

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "hqnn/parallel.hpp"
#include "hqnn/qsim.hpp"

namespace hqnn::qlayers {

using qsim::DensityMatrix;
using qsim::StateVector;

class UnsupportedGradient : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

enum class EmbeddingKind { angle, angle_with_hadamard, amplitude };

std::string_view to_string(EmbeddingKind kind);
EmbeddingKind parse_embedding(std::string_view name);

/// Number of classical values an embedding consumes on Q qubits.
int embedding_width(EmbeddingKind kind, int num_qubits);

struct NoiseSpec {
  qsim::NoiseKind kind;
  double p;
};

struct QuantumLayerConfig {
  int num_qubits = 4;
  int num_layers = 2;
  EmbeddingKind embedding = EmbeddingKind::angle_with_hadamard;
  int shots = 0;  // 0 = exact expectation values
  std::optional<NoiseSpec> noise;
  std::uint64_t shot_seed = 0;

  void validate() const;
};

/// Trainable rotation angles, L x Q, row-major (layer, qubit).
struct PQCParams {
  int layers = 0;
  int qubits = 0;
  std::vector<double> thetas;

  PQCParams() = default;
  PQCParams(int l, int q) : layers(l), qubits(q), thetas(static_cast<std::size_t>(l * q), 0.0) {}

  double& at(int l, int q) { return thetas[static_cast<std::size_t>(l * qubits + q)]; }
  double at(int l, int q) const { return thetas[static_cast<std::size_t>(l * qubits + q)]; }

  /// theta ~ Uniform[-2 pi, 2 pi].
  static PQCParams random(int l, int q, std::mt19937_64& rng);
};

/// Angle kinds: tensor product of Ry(c_i)|0> (Hadamard first for the _with_hadamard
/// variant). Amplitude: c / |c|, with a zero vector mapped to |0...0>.
StateVector embed(std::span<const double> c, EmbeddingKind kind, int num_qubits);

/// Runs L layers of (CNOT chain i -> i+1, then Ry(theta_{l,i}) on every qubit) and
/// returns per-qubit <Z>. Uses the density path when cfg.noise is set; a noise
/// channel acts on every qubit after the input state and after each layer.
std::vector<double> pqc_forward(const StateVector& input_state, const PQCParams& params,
                                const QuantumLayerConfig& cfg);

/// Embeds `inputs` with cfg.embedding first.
std::vector<double> pqc_forward(std::span<const double> inputs, const PQCParams& params,
                                const QuantumLayerConfig& cfg);

struct PQCGradient {
  std::vector<double> thetas;        // L x Q, same layout as PQCParams
  std::vector<double> input_angles;  // empty unless requested
};

/// Parameter-shift gradient of sum_q upstream[q] * <Z_q> with respect to every
/// theta (shift pi/2, prefactor 1/2 for Ry).
PQCGradient pqc_param_shift_grad(const StateVector& input_state, const PQCParams& params,
                                 const QuantumLayerConfig& cfg, std::span<const double> upstream);

/// As above, and when `want_input_grad` also differentiates the embedding Ry
/// angles by the same shift rule. Amplitude embedding cannot be shifted and
/// throws UnsupportedGradient.
PQCGradient pqc_param_shift_grad(std::span<const double> inputs, const PQCParams& params,
                                 const QuantumLayerConfig& cfg, std::span<const double> upstream,
                                 bool want_input_grad);

/// Gradient of sum_q upstream[q] * <Z_q> with respect to the raw amplitude-embedding
/// input, by central finite differences through the normalization (step h).
std::vector<double> amplitude_input_grad_fd(std::span<const double> inputs, const PQCParams& params,
                                            const QuantumLayerConfig& cfg,
                                            std::span<const double> upstream, double h = 1e-5);

// ---------------------------------------------------------------- quanvolution

inline constexpr int kQuanvKernel = 2;
inline constexpr int kQuanvQubits = 2;

/// Output of the quanvolution filter: channels x height x width, row-major.
struct QuanvOutput {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<double> data;

  double& at(int c, int h, int w) {
    return data[static_cast<std::size_t>((c * height + h) * width + w)];
  }
  double at(int c, int h, int w) const {
    return data[static_cast<std::size_t>((c * height + h) * width + w)];
  }
};

/// Slides a shared 2-qubit circuit over non-overlapping 2x2 blocks of a
/// rows x cols input (row-major). Block (r, c) is amplitude-embedded from
/// [x(2r,2c), x(2r,2c+1), x(2r+1,2c), x(2r+1,2c+1)] and writes its Q=2
/// expectations to output[channel=r][height=c][width=q].
QuanvOutput quanvolution_forward(std::span<const double> input, int rows, int cols,
                                 const PQCParams& params, const QuantumLayerConfig& cfg,
                                 Exec exec = Exec::serial);

struct QuanvGradient {
  std::vector<double> thetas;  // summed over blocks
  std::vector<double> input;   // rows x cols, empty unless requested
};

QuanvGradient quanvolution_grad(std::span<const double> input, int rows, int cols,
                                const PQCParams& params, const QuantumLayerConfig& cfg,
                                const QuanvOutput& upstream, bool want_input_grad = true,
                                Exec exec = Exec::serial);

}  // namespace hqnn::qlayers
