#pragma once

// Unsupervised training on the negative mean sum rate, the train / validation
// protocol, and evaluation normalized against WMMSE (clean, noisy-circuit and
// imperfect-CSI variants).

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "hqnn/beamforming.hpp"
#include "hqnn/models.hpp"
#include "hqnn/parallel.hpp"

namespace hqnn::trainer {

/// Raised when the training loss becomes NaN or infinite.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  int epochs = 150;
  int batch_size = 100;
  double lr = 0.001;
  int n_train = 10000;
  double validation_fraction = 0.2;
  int n_test = 1000;
  std::uint64_t seed = 0;
  models::ModelConfig model;
  bf::SystemParams system;
  Exec exec = Exec::parallel;

  void validate() const;
  nlohmann::json to_json() const;
};

struct EpochRecord {
  int epoch = 0;  // 0 = before the first update
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct Metrics {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  double best_val_loss = 0.0;
  std::size_t updated_scalars = 0;  // scalars touched by each optimizer step

  double test_sum_rate = 0.0;    // mean bits/s/Hz
  double normalized_rate = 0.0;  // mean of per-sample model / WMMSE ratios
  std::vector<double> model_rates;
  std::vector<double> reference_rates;
  std::vector<double> ratios;

  double wall_seconds = 0.0;  // console only; never written to output files

  nlohmann::json to_json() const;
};

// ---------------------------------------------------------------- loss

struct LossResult {
  double loss = 0.0;
  std::vector<double> rates;                  // per-sample sum rate
  std::vector<std::vector<double>> grad_raw;  // d loss / d raw outputs, empty unless requested
};

/// -(1 / 2KN) sum_n sum_k log2(1 + gamma_k) for beams recovered from the
/// normalized raw outputs, and optionally its gradient with respect to them.
LossResult batch_loss(std::span<const bf::ChannelSample> samples, const std::vector<std::vector<double>>& raw,
                      double P, bool want_grad);

// ---------------------------------------------------------------- training

struct Split {
  std::vector<bf::ChannelSample> train;
  std::vector<bf::ChannelSample> validation;
};

/// Seeded permutation, then the first round(n * fraction) samples go to validation.
Split split_train_validation(const std::vector<bf::ChannelSample>& samples, double fraction, std::uint64_t seed);

using EpochCallback = std::function<void(const EpochRecord&)>;

struct TrainResult {
  models::Model best;   // lowest validation loss
  models::Model final;  // after the last epoch
  Metrics metrics;
};

/// Trains on `data` (split internally into train / validation). `initial`
/// overrides the seeded initialization, e.g. a transfer model built in memory.
TrainResult train(const TrainConfig& cfg, const std::vector<bf::ChannelSample>& data,
                  std::optional<models::Model> initial = std::nullopt, const EpochCallback& on_epoch = {});

/// Mean eval-mode loss over a sample set.
double dataset_loss(models::Model& model, const std::vector<bf::ChannelSample>& samples, double P,
                    Exec exec = Exec::parallel, int batch_size = 500);

// ---------------------------------------------------------------- evaluation

/// Eval-mode sum rate per sample. The model and the beam recovery see `inputs`;
/// the rate is scored on `truth`.
std::vector<double> model_rates(models::Model& model, const std::vector<bf::ChannelSample>& inputs,
                                const std::vector<bf::ChannelSample>& truth, double P,
                                Exec exec = Exec::parallel);

/// Normalized rate against precomputed WMMSE rates on the same samples.
Metrics evaluate(models::Model& model, const std::vector<bf::ChannelSample>& test,
                 const std::vector<double>& wmmse_rates, double P, Exec exec = Exec::parallel);

/// Every quantum sublayer runs with `noise` (density path) and optional shot
/// sampling. Throws models::ConfigError for a model without quantum layers.
Metrics evaluate_noisy(models::Model& model, const std::vector<bf::ChannelSample>& test,
                       const std::vector<double>& wmmse_rates, double P, const qlayers::NoiseSpec& noise,
                       int shots = 0, std::uint64_t shot_seed = 0, Exec exec = Exec::parallel);

/// Mean squared difference between noiseless and noisy quantum-layer outputs,
/// averaged over samples and output components.
double qnn_output_mse(models::Model& model, const std::vector<bf::ChannelSample>& test,
                      const qlayers::NoiseSpec& noise, int shots = 0, std::uint64_t shot_seed = 0,
                      Exec exec = Exec::parallel);

/// The test samples act as channel estimates; the true channel adds
/// CN(0, sigma_e2) error with per-sample seeds derived from `seed`. The model
/// sees the estimate and both it and WMMSE are scored on the true channel.
struct CsiTruth {
  std::vector<bf::ChannelSample> truth;
  std::vector<double> wmmse_rates;
};
CsiTruth perturb_channels(const std::vector<bf::ChannelSample>& estimates, double sigma_e2, std::uint64_t seed,
                          double P, Exec exec = Exec::parallel);

Metrics evaluate_imperfect_csi(models::Model& model, const std::vector<bf::ChannelSample>& estimates,
                               const CsiTruth& truth, double P, Exec exec = Exec::parallel);

/// Linear-interpolation quantile, q in [0, 1].
double quantile(std::vector<double> values, double q);

}  // namespace hqnn::trainer
