#pragma once

// The four power-vector predictors: classical CNN, hybrid QNN, hybrid QNN
// with a frozen pretrained front-end, and hybrid QCNN. Each maps a channel
// matrix to 2K sigmoid outputs (downlink p, then virtual uplink q).
//
// Input layout: channels = K users, height = 2 Nt = [Re h_k^H | Im h_k^H],
// width = 1. Flatten order is channel-major.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "hqnn/beamforming.hpp"
#include "hqnn/nn.hpp"
#include "hqnn/parallel.hpp"
#include "hqnn/qlayers.hpp"

namespace hqnn::models {

enum class ModelKind { classical_cnn, hybrid_qnn, hybrid_qnn_transfer, hybrid_qcnn };

std::string_view to_string(ModelKind kind);
/// Accepts the canonical names plus the CLI short forms classical / qnn / qnn_transfer / qcnn.
ModelKind parse_model_kind(std::string_view name);

struct ModelConfig {
  ModelKind kind = ModelKind::classical_cnn;
  int K = 4;
  int Nt = 4;
  int F = 8;
  int m = 3;
  int Q = 4;
  int L = 2;
  qlayers::EmbeddingKind embedding = qlayers::EmbeddingKind::angle_with_hadamard;
  int FQ = 2;
  std::optional<std::filesystem::path> pretrained_checkpoint;

  /// Per-kind defaults: QNN kinds use Q = 4 with Hadamard + Ry embedding,
  /// QCNN uses Q = 2 with amplitude embedding.
  static ModelConfig defaults(ModelKind kind, int K, int Nt);

  void validate() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Closed-form trainable-parameter count of the power-vector networks.
long count_params(const ModelConfig& cfg);

/// Closed-form count when the last layer emits the 2 Nt K beamforming reals directly.
long count_params_direct_beamforming(const ModelConfig& cfg);

/// Evaluation-time quantum settings. Training always runs exact and noiseless.
struct QuantumEvalOptions {
  int shots = 0;
  std::optional<qlayers::NoiseSpec> noise;
  std::uint64_t shot_seed = 0;
};

/// (K, 2 Nt, 1) real input tensor from a normalized channel matrix.
nn::Tensor channel_to_input(const bf::CMatrix& H);

struct SampleCache {
  nn::Tensor input;       // (K, 2Nt, 1)
  nn::Tensor conv_in;     // input, or the quanvolution output for QCNN
  nn::Tensor conv_out;
  nn::Tensor relu_out;
  nn::Tensor flat;        // batch-norm output
  nn::Tensor fc1_out;     // QNN kinds
  nn::Tensor fc1_act;
  nn::Tensor quantum_out; // QNN readout, or flattened quanvolution output
  nn::Tensor logits;
  nn::Tensor raw;         // sigmoid outputs, length 2K
};

struct BatchForward {
  std::vector<SampleCache> samples;
  nn::BatchNormCache bn_cache;
  nn::Mode mode = nn::Mode::eval;

  std::vector<double> raw(std::size_t i) const { return samples[i].raw.data; }
};

class Model {
 public:
  /// Random initialization; transfer kinds load and freeze the front-end from
  /// cfg.pretrained_checkpoint.
  Model(ModelConfig cfg, std::uint64_t seed);

  /// Transfer model whose conv + BN tensors are copied from `pretrained` and frozen.
  static Model transfer_from(const Model& pretrained, ModelConfig cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  std::uint64_t seed() const { return seed_; }
  bool has_quantum_layer() const { return cfg_.kind != ModelKind::classical_cnn; }

  std::vector<nn::Param*> parameters();
  std::vector<const nn::Param*> parameters() const;
  nn::Param* find_param(std::string_view name);
  const nn::Param* find_param(std::string_view name) const;
  nn::BatchNorm& batchnorm() { return bn_; }
  const nn::BatchNorm& batchnorm() const { return bn_; }

  /// Sum of sizes of non-frozen params.
  std::size_t trainable_scalars() const;

  QuantumEvalOptions& quantum_eval() { return qeval_; }
  const QuantumEvalOptions& quantum_eval() const { return qeval_; }

  /// Train mode uses batch statistics in BN (unless the front-end is frozen)
  /// and forces exact noiseless circuits. `index_base` offsets per-sample shot seeds.
  BatchForward forward(std::span<const bf::ChannelSample> batch, nn::Mode mode, Exec exec = Exec::parallel,
                       std::uint64_t index_base = 0);
  BatchForward forward_inputs(std::span<const nn::Tensor> inputs, nn::Mode mode, Exec exec = Exec::parallel,
                              std::uint64_t index_base = 0);

  /// Accumulates d(objective)/d(param) into Param::grad given d(objective)/d(raw)
  /// for every sample. Per-sample contributions are reduced in sample order.
  void backward(const BatchForward& fwd, const std::vector<std::vector<double>>& grad_raw,
                Exec exec = Exec::parallel);

  void zero_grad();

  nlohmann::json metadata;

 private:
  struct NoInit {};
  Model(ModelConfig cfg, std::uint64_t seed, NoInit);
  void build_layers();
  void init_random();
  qlayers::QuantumLayerConfig pqc_config(nn::Mode mode, std::uint64_t sample_index) const;
  qlayers::QuantumLayerConfig quanv_config(nn::Mode mode, std::uint64_t sample_index) const;
  qlayers::PQCParams pqc_params(const nn::Param& p) const;
  bool frontend_frozen() const { return cfg_.kind == ModelKind::hybrid_qnn_transfer; }

  void forward_front(SampleCache& s, nn::Mode mode, std::uint64_t idx) const;
  void forward_head(SampleCache& s, nn::Mode mode, std::uint64_t idx) const;

  ModelConfig cfg_;
  std::uint64_t seed_;
  QuantumEvalOptions qeval_;

  nn::Param conv_w_, conv_b_;
  nn::BatchNorm bn_;
  nn::Param fc_w_, fc_b_;      // classical / qcnn head
  nn::Param fc1_w_, fc1_b_;    // qnn
  nn::Param pqc_theta_;        // qnn (L, Q)
  nn::Param fc2_w_, fc2_b_;    // qnn
  nn::Param quanv_theta_;      // qcnn (L, 2)

  friend Model load_checkpoint(const std::filesystem::path& path);
};

/// Flattened conv/BN output length F * (H + 3 - m) * (W + 3 - m).
int flatten_length(const ModelConfig& cfg);

// ---------------------------------------------------------------- checkpoints

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// "BFQCKPT", u16 version, u32 header length, JSON header (config, seed,
/// metadata, tensor directory with name / shape / offset / frozen / crc32),
/// u32 header crc32, then little-endian f64 payloads.
void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace hqnn::models
