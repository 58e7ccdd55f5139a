#include "hqnn/qlayers.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <string>

namespace hqnn::qlayers {

namespace {

constexpr double kShift = std::numbers::pi / 2.0;  // pi / (4r) with r = 1/2
constexpr double kShiftScale = 0.5;                // r

void check_upstream(std::span<const double> upstream, int q) {
  if (upstream.size() != static_cast<std::size_t>(q)) {
    throw std::invalid_argument("upstream gradient length must equal the qubit count");
  }
}

void check_params(const PQCParams& params, const QuantumLayerConfig& cfg) {
  if (params.layers != cfg.num_layers || params.qubits != cfg.num_qubits ||
      params.thetas.size() != static_cast<std::size_t>(cfg.num_layers * cfg.num_qubits)) {
    throw std::invalid_argument("PQC parameter shape does not match the layer configuration");
  }
}

template <class State>
void apply_layer(State& s, const PQCParams& params, int layer) {
  const int q = params.qubits;
  for (int i = 0; i + 1 < q; ++i) qsim::apply_gate_inplace(s, qsim::cnot(i, i + 1));
  for (int i = 0; i < q; ++i) qsim::apply_gate_inplace(s, qsim::ry(i, params.at(layer, i)));
}

template <class State>
std::vector<double> readout(const State& s, const QuantumLayerConfig& cfg) {
  std::vector<double> out(static_cast<std::size_t>(cfg.num_qubits));
  for (int i = 0; i < cfg.num_qubits; ++i) {
    out[static_cast<std::size_t>(i)] =
        cfg.shots > 0 ? qsim::sample_expectation_z(s, i, cfg.shots, derive_seed(cfg.shot_seed, static_cast<std::uint64_t>(i)))
                      : qsim::expectation_z(s, i);
  }
  return out;
}

double weighted(const std::vector<double>& z, std::span<const double> upstream) {
  double acc = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) acc += upstream[i] * z[i];
  return acc;
}

}  // namespace

std::string_view to_string(EmbeddingKind kind) {
  switch (kind) {
    case EmbeddingKind::angle: return "angle";
    case EmbeddingKind::angle_with_hadamard: return "angle_with_hadamard";
    case EmbeddingKind::amplitude: return "amplitude";
  }
  return "?";
}

EmbeddingKind parse_embedding(std::string_view name) {
  if (name == "angle") return EmbeddingKind::angle;
  if (name == "angle_with_hadamard" || name == "hadamard_angle") return EmbeddingKind::angle_with_hadamard;
  if (name == "amplitude") return EmbeddingKind::amplitude;
  throw std::invalid_argument("unknown embedding '" + std::string(name) + "'");
}

int embedding_width(EmbeddingKind kind, int num_qubits) {
  return kind == EmbeddingKind::amplitude ? (1 << num_qubits) : num_qubits;
}

void QuantumLayerConfig::validate() const {
  if (num_qubits < 1) throw std::invalid_argument("quantum layer needs at least one qubit");
  if (num_layers < 1) throw std::invalid_argument("quantum layer needs at least one circuit layer");
  if (shots < 0) throw std::invalid_argument("shots must be >= 0");
  if (noise && !(noise->p >= 0.0 && noise->p <= 1.0)) {
    throw std::invalid_argument("noise probability must lie in [0, 1]");
  }
}

PQCParams PQCParams::random(int l, int q, std::mt19937_64& rng) {
  PQCParams p(l, q);
  std::uniform_real_distribution<double> u(-2.0 * std::numbers::pi, 2.0 * std::numbers::pi);
  for (auto& t : p.thetas) t = u(rng);
  return p;
}

StateVector embed(std::span<const double> c, EmbeddingKind kind, int num_qubits) {
  const auto width = static_cast<std::size_t>(embedding_width(kind, num_qubits));
  if (c.size() != width) {
    throw std::invalid_argument("embedding '" + std::string(to_string(kind)) + "' on " +
                                std::to_string(num_qubits) + " qubits expects " +
                                std::to_string(width) + " values, got " + std::to_string(c.size()));
  }
  if (kind == EmbeddingKind::amplitude) {
    double n2 = 0.0;
    for (double v : c) n2 += v * v;
    if (n2 == 0.0) return StateVector(num_qubits);
    const double inv = 1.0 / std::sqrt(n2);
    std::vector<qsim::cplx> amps(c.size());
    for (std::size_t i = 0; i < c.size(); ++i) amps[i] = c[i] * inv;
    return StateVector::from_amplitudes(std::move(amps));
  }
  StateVector s(num_qubits);
  for (int i = 0; i < num_qubits; ++i) {
    if (kind == EmbeddingKind::angle_with_hadamard) qsim::apply_gate_inplace(s, qsim::hadamard(i));
    qsim::apply_gate_inplace(s, qsim::ry(i, c[static_cast<std::size_t>(i)]));
  }
  return s;
}

std::vector<double> pqc_forward(const StateVector& input_state, const PQCParams& params,
                                const QuantumLayerConfig& cfg) {
  cfg.validate();
  check_params(params, cfg);
  if (input_state.num_qubits() != cfg.num_qubits) {
    throw std::invalid_argument("input state qubit count does not match the layer");
  }
  if (!cfg.noise) {
    StateVector s = input_state;
    for (int l = 0; l < cfg.num_layers; ++l) apply_layer(s, params, l);
    return readout(s, cfg);
  }
  const auto channel = qsim::make_noise_channel(cfg.noise->kind, cfg.noise->p);
  auto noisy_step = [&](DensityMatrix& rho) {
    for (int i = 0; i < cfg.num_qubits; ++i) qsim::apply_channel_inplace(rho, channel, i);
  };
  DensityMatrix rho = qsim::to_density(input_state);
  noisy_step(rho);
  for (int l = 0; l < cfg.num_layers; ++l) {
    apply_layer(rho, params, l);
    noisy_step(rho);
  }
  return readout(rho, cfg);
}

std::vector<double> pqc_forward(std::span<const double> inputs, const PQCParams& params,
                                const QuantumLayerConfig& cfg) {
  return pqc_forward(embed(inputs, cfg.embedding, cfg.num_qubits), params, cfg);
}

PQCGradient pqc_param_shift_grad(const StateVector& input_state, const PQCParams& params,
                                 const QuantumLayerConfig& cfg, std::span<const double> upstream) {
  check_params(params, cfg);
  check_upstream(upstream, cfg.num_qubits);
  PQCGradient g;
  g.thetas.assign(params.thetas.size(), 0.0);
  PQCParams shifted = params;
  for (std::size_t i = 0; i < params.thetas.size(); ++i) {
    const double orig = params.thetas[i];
    shifted.thetas[i] = orig + kShift;
    const double plus = weighted(pqc_forward(input_state, shifted, cfg), upstream);
    shifted.thetas[i] = orig - kShift;
    const double minus = weighted(pqc_forward(input_state, shifted, cfg), upstream);
    shifted.thetas[i] = orig;
    g.thetas[i] = kShiftScale * (plus - minus);
  }
  return g;
}

PQCGradient pqc_param_shift_grad(std::span<const double> inputs, const PQCParams& params,
                                 const QuantumLayerConfig& cfg, std::span<const double> upstream,
                                 bool want_input_grad) {
  if (want_input_grad && cfg.embedding == EmbeddingKind::amplitude) {
    throw UnsupportedGradient(
        "parameter-shift input gradient is undefined for amplitude embedding; "
        "use amplitude_input_grad_fd");
  }
  PQCGradient g = pqc_param_shift_grad(embed(inputs, cfg.embedding, cfg.num_qubits), params, cfg, upstream);
  if (!want_input_grad) return g;

  g.input_angles.assign(inputs.size(), 0.0);
  std::vector<double> shifted(inputs.begin(), inputs.end());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const double orig = inputs[i];
    shifted[i] = orig + kShift;
    const double plus = weighted(pqc_forward(std::span<const double>(shifted), params, cfg), upstream);
    shifted[i] = orig - kShift;
    const double minus = weighted(pqc_forward(std::span<const double>(shifted), params, cfg), upstream);
    shifted[i] = orig;
    g.input_angles[i] = kShiftScale * (plus - minus);
  }
  return g;
}

std::vector<double> amplitude_input_grad_fd(std::span<const double> inputs, const PQCParams& params,
                                            const QuantumLayerConfig& cfg,
                                            std::span<const double> upstream, double h) {
  check_upstream(upstream, cfg.num_qubits);
  std::vector<double> grad(inputs.size(), 0.0);
  std::vector<double> x(inputs.begin(), inputs.end());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + h;
    const double plus = weighted(pqc_forward(std::span<const double>(x), params, cfg), upstream);
    x[i] = orig - h;
    const double minus = weighted(pqc_forward(std::span<const double>(x), params, cfg), upstream);
    x[i] = orig;
    grad[i] = (plus - minus) / (2.0 * h);
  }
  return grad;
}

// ---------------------------------------------------------------- quanvolution

namespace {

struct TileGrid {
  int tile_rows;
  int tile_cols;
};

TileGrid check_quanv(std::span<const double> input, int rows, int cols, const PQCParams& params,
                     const QuantumLayerConfig& cfg) {
  if (rows <= 0 || cols <= 0 || input.size() != static_cast<std::size_t>(rows * cols)) {
    throw std::invalid_argument("quanvolution input size does not match rows x cols");
  }
  if (rows % kQuanvKernel != 0 || cols % kQuanvKernel != 0) {
    throw std::invalid_argument("quanvolution needs both input dimensions divisible by 2 (got " +
                                std::to_string(rows) + " x " + std::to_string(cols) + ")");
  }
  if (cfg.num_qubits != kQuanvQubits || cfg.embedding != EmbeddingKind::amplitude) {
    throw std::invalid_argument("quanvolution uses 2 qubits with amplitude embedding");
  }
  check_params(params, cfg);
  return {rows / kQuanvKernel, cols / kQuanvKernel};
}

std::array<double, 4> block_values(std::span<const double> input, int cols, int r, int c) {
  auto x = [&](int i, int j) { return input[static_cast<std::size_t>(i * cols + j)]; };
  return {x(2 * r, 2 * c), x(2 * r, 2 * c + 1), x(2 * r + 1, 2 * c), x(2 * r + 1, 2 * c + 1)};
}

QuantumLayerConfig block_config(const QuantumLayerConfig& cfg, std::size_t block) {
  QuantumLayerConfig b = cfg;
  b.shot_seed = derive_seed(cfg.shot_seed, block, 0x51);
  return b;
}

}  // namespace

QuanvOutput quanvolution_forward(std::span<const double> input, int rows, int cols,
                                 const PQCParams& params, const QuantumLayerConfig& cfg, Exec exec) {
  const TileGrid grid = check_quanv(input, rows, cols, params, cfg);
  QuanvOutput out{grid.tile_rows, grid.tile_cols, kQuanvQubits, {}};
  out.data.assign(static_cast<std::size_t>(grid.tile_rows * grid.tile_cols * kQuanvQubits), 0.0);
  const auto blocks = static_cast<std::size_t>(grid.tile_rows * grid.tile_cols);
  for_each_index(exec, blocks, [&](std::size_t b) {
    const int r = static_cast<int>(b) / grid.tile_cols;
    const int c = static_cast<int>(b) % grid.tile_cols;
    const auto v = block_values(input, cols, r, c);
    const auto z = pqc_forward(std::span<const double>(v), params, block_config(cfg, b));
    for (int q = 0; q < kQuanvQubits; ++q) out.at(r, c, q) = z[static_cast<std::size_t>(q)];
  });
  return out;
}

QuanvGradient quanvolution_grad(std::span<const double> input, int rows, int cols,
                                const PQCParams& params, const QuantumLayerConfig& cfg,
                                const QuanvOutput& upstream, bool want_input_grad, Exec exec) {
  const TileGrid grid = check_quanv(input, rows, cols, params, cfg);
  if (upstream.channels != grid.tile_rows || upstream.height != grid.tile_cols ||
      upstream.width != kQuanvQubits) {
    throw std::invalid_argument("quanvolution upstream gradient has the wrong shape");
  }
  const auto blocks = static_cast<std::size_t>(grid.tile_rows * grid.tile_cols);
  std::vector<std::vector<double>> per_block(blocks);
  QuanvGradient g;
  if (want_input_grad) g.input.assign(input.size(), 0.0);

  for_each_index(exec, blocks, [&](std::size_t b) {
    const int r = static_cast<int>(b) / grid.tile_cols;
    const int c = static_cast<int>(b) % grid.tile_cols;
    const std::array<double, 2> up{upstream.at(r, c, 0), upstream.at(r, c, 1)};
    if (up[0] == 0.0 && up[1] == 0.0) {
      per_block[b].assign(params.thetas.size(), 0.0);
      return;
    }
    const auto v = block_values(input, cols, r, c);
    const auto bcfg = block_config(cfg, b);
    per_block[b] = pqc_param_shift_grad(std::span<const double>(v), params, bcfg, up, false).thetas;
    if (want_input_grad) {
      const auto gi = amplitude_input_grad_fd(std::span<const double>(v), params, bcfg, up);
      // Disjoint blocks: each thread writes its own four cells.
      g.input[static_cast<std::size_t>((2 * r) * cols + 2 * c)] = gi[0];
      g.input[static_cast<std::size_t>((2 * r) * cols + 2 * c + 1)] = gi[1];
      g.input[static_cast<std::size_t>((2 * r + 1) * cols + 2 * c)] = gi[2];
      g.input[static_cast<std::size_t>((2 * r + 1) * cols + 2 * c + 1)] = gi[3];
    }
  });

  g.thetas.assign(params.thetas.size(), 0.0);
  for (const auto& pb : per_block) {
    for (std::size_t i = 0; i < pb.size(); ++i) g.thetas[i] += pb[i];
  }
  return g;
}

}  // namespace hqnn::qlayers
