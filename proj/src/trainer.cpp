#include "hqnn/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

namespace hqnn::trainer {

using bf::ChannelSample;
using models::Model;
using nn::Mode;

void TrainConfig::validate() const {
  if (epochs < 0) throw models::ConfigError("epochs must be >= 0");
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
    throw models::ConfigError("validation fraction must lie in (0, 1)");
  }
  if (n_train < 4) throw models::ConfigError("need at least 4 training samples");
  const int n_val = static_cast<int>(std::lround(n_train * validation_fraction));
  if (batch_size < 2) throw models::ConfigError("batch size must be >= 2 for batch norm");
  if (batch_size > n_train - n_val) throw models::ConfigError("batch size exceeds the training split");
  if (!(lr > 0.0)) throw models::ConfigError("learning rate must be positive");
  if (model.K != system.K || model.Nt != system.Nt) throw models::ConfigError("model and system dimensions differ");
  model.validate();
  system.validate();
}

nlohmann::json TrainConfig::to_json() const {
  return {{"epochs", epochs},
          {"batch_size", batch_size},
          {"lr", lr},
          {"n_train", n_train},
          {"validation_fraction", validation_fraction},
          {"n_test", n_test},
          {"seed", seed},
          {"model", model.to_json()},
          {"system",
           {{"K", system.K},
            {"Nt", system.Nt},
            {"tx_power_dbm", system.tx_power_dbm},
            {"bandwidth_hz", system.bandwidth_hz},
            {"noise_psd_dbm_per_hz", system.noise_psd_dbm_per_hz}}}};
}

nlohmann::json Metrics::to_json() const {
  nlohmann::json ep = nlohmann::json::array();
  for (const auto& e : epochs) ep.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_loss", e.val_loss}});
  return {{"epochs", ep},
          {"best_epoch", best_epoch},
          {"best_val_loss", best_val_loss},
          {"updated_scalars", updated_scalars},
          {"test_sum_rate", test_sum_rate},
          {"normalized_rate", normalized_rate}};
}

// ---------------------------------------------------------------- loss

LossResult batch_loss(std::span<const ChannelSample> samples, const std::vector<std::vector<double>>& raw,
                      double P, bool want_grad) {
  if (raw.size() != samples.size()) throw std::invalid_argument("batch_loss: raw / sample count mismatch");
  LossResult out;
  const std::size_t n = samples.size();
  if (n == 0) return out;
  const int K = static_cast<int>(samples[0].H.rows());
  const double scale = 1.0 / (2.0 * K * static_cast<double>(n));
  out.rates.resize(n);
  if (want_grad) out.grad_raw.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto pv = bf::normalize_power(raw[i], P);
    if (want_grad) {
      const auto g = bf::rate_and_gradient(samples[i].H, pv);
      out.rates[i] = g.rate;
      auto d = bf::chain_normalization(raw[i], P, g);
      for (double& v : d) v *= -scale;
      out.grad_raw[i] = std::move(d);
    } else {
      out.rates[i] = bf::sum_rate(samples[i].H, bf::recover_beamforming(samples[i].H, pv).W);
    }
  }
  double total = 0.0;
  for (double r : out.rates) total += r;
  out.loss = -scale * total;
  return out;
}

// ---------------------------------------------------------------- training

Split split_train_validation(const std::vector<ChannelSample>& samples, double fraction, std::uint64_t seed) {
  std::vector<std::size_t> idx(samples.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(derive_seed(seed, 0x5b11));
  for (std::size_t i = idx.size(); i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(idx[i - 1], idx[pick(rng)]);
  }
  const auto n_val = static_cast<std::size_t>(std::lround(static_cast<double>(samples.size()) * fraction));
  Split s;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    (i < n_val ? s.validation : s.train).push_back(samples[idx[i]]);
  }
  return s;
}

namespace {

std::vector<std::vector<double>> raw_outputs(const models::BatchForward& fwd) {
  std::vector<std::vector<double>> raw(fwd.samples.size());
  for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = fwd.raw(i);
  return raw;
}

void check_finite(double loss, int epoch, std::size_t batch) {
  if (!std::isfinite(loss)) {
    throw DivergenceError("training diverged: loss is " + std::to_string(loss) + " at epoch " +
                          std::to_string(epoch) + ", batch " + std::to_string(batch));
  }
}

}  // namespace

double dataset_loss(Model& model, const std::vector<ChannelSample>& samples, double P, Exec exec, int batch_size) {
  if (samples.empty()) return 0.0;
  double weighted = 0.0;
  for (std::size_t start = 0; start < samples.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t len = std::min<std::size_t>(static_cast<std::size_t>(batch_size), samples.size() - start);
    const std::span<const ChannelSample> chunk(samples.data() + start, len);
    const auto fwd = model.forward(chunk, Mode::eval, exec, start);
    weighted += batch_loss(chunk, raw_outputs(fwd), P, false).loss * static_cast<double>(len);
  }
  return weighted / static_cast<double>(samples.size());
}

TrainResult train(const TrainConfig& cfg, const std::vector<ChannelSample>& data, std::optional<Model> initial,
                  const EpochCallback& on_epoch) {
  TrainConfig effective = cfg;
  effective.n_train = static_cast<int>(data.size());
  effective.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const double P = cfg.system.power_w();
  const Split split = split_train_validation(data, cfg.validation_fraction, cfg.seed);

  Model model = initial ? std::move(*initial) : Model(cfg.model, derive_seed(cfg.seed, 0x1417));
  nn::AdamState adam;
  adam.lr = cfg.lr;
  const auto params = model.parameters();
  std::vector<double> frozen_before;
  for (const nn::Param* p : params)
    if (p->frozen) frozen_before.insert(frozen_before.end(), p->value.data.begin(), p->value.data.end());

  Metrics metrics;
  EpochRecord first{0, dataset_loss(model, split.train, P, cfg.exec), dataset_loss(model, split.validation, P, cfg.exec)};
  check_finite(first.train_loss, 0, 0);
  metrics.epochs.push_back(first);
  metrics.best_epoch = 0;
  metrics.best_val_loss = first.val_loss;
  if (on_epoch) on_epoch(first);
  Model best = model;

  std::vector<std::size_t> order(split.train.size());
  std::iota(order.begin(), order.end(), 0);
  const auto bs = static_cast<std::size_t>(cfg.batch_size);
  std::vector<ChannelSample> batch;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::mt19937_64 rng(derive_seed(cfg.seed, 0xE90C, static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::uniform_int_distribution<std::size_t> pick(0, i - 1);
      std::swap(order[i - 1], order[pick(rng)]);
    }
    double weighted = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0, b = 0; start < order.size(); start += bs, ++b) {
      const std::size_t len = std::min(bs, order.size() - start);
      if (len < 2) break;  // a single-sample batch has no batch statistics
      batch.clear();
      for (std::size_t j = 0; j < len; ++j) batch.push_back(split.train[order[start + j]]);
      model.zero_grad();
      const auto fwd = model.forward(batch, Mode::train, cfg.exec);
      const auto lr = batch_loss(batch, raw_outputs(fwd), P, true);
      check_finite(lr.loss, epoch, b);
      model.backward(fwd, lr.grad_raw, cfg.exec);
      metrics.updated_scalars = nn::adam_step(params, adam);
      weighted += lr.loss * static_cast<double>(len);
      seen += len;
    }
    EpochRecord rec{epoch, weighted / static_cast<double>(seen), dataset_loss(model, split.validation, P, cfg.exec)};
    check_finite(rec.val_loss, epoch, 0);
    metrics.epochs.push_back(rec);
    if (rec.val_loss < metrics.best_val_loss) {
      metrics.best_val_loss = rec.val_loss;
      metrics.best_epoch = epoch;
      best = model;
    }
    if (on_epoch) on_epoch(rec);
  }

  std::vector<double> frozen_after;
  for (const nn::Param* p : params)
    if (p->frozen) frozen_after.insert(frozen_after.end(), p->value.data.begin(), p->value.data.end());
  if (frozen_after != frozen_before) throw std::logic_error("training modified a frozen tensor");

  metrics.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  nlohmann::json meta{{"best_epoch", metrics.best_epoch},
                      {"best_val_loss", metrics.best_val_loss},
                      {"final_epoch", cfg.epochs},
                      {"final_val_loss", metrics.epochs.back().val_loss},
                      {"train_config", cfg.to_json()}};
  best.metadata = meta;
  best.metadata["snapshot"] = "best_validation";
  model.metadata = meta;
  model.metadata["snapshot"] = "final_epoch";
  return TrainResult{std::move(best), std::move(model), std::move(metrics)};
}

// ---------------------------------------------------------------- evaluation

std::vector<double> model_rates(Model& model, const std::vector<ChannelSample>& inputs,
                                const std::vector<ChannelSample>& truth, double P, Exec exec) {
  if (inputs.size() != truth.size()) throw std::invalid_argument("model_rates: input / truth size mismatch");
  std::vector<double> rates(inputs.size());
  constexpr std::size_t kChunk = 500;
  for (std::size_t start = 0; start < inputs.size(); start += kChunk) {
    const std::size_t len = std::min(kChunk, inputs.size() - start);
    const auto fwd = model.forward(std::span<const ChannelSample>(inputs.data() + start, len), Mode::eval, exec, start);
    for_each_index(exec, len, [&](std::size_t i) {
      const auto pv = bf::normalize_power(fwd.samples[i].raw.data, P);
      // Beams come from what the model was given; the rate is scored on the truth.
      const auto W = bf::recover_beamforming(inputs[start + i].H, pv).W;
      rates[start + i] = bf::sum_rate(truth[start + i].H, W);
    });
  }
  return rates;
}

namespace {

Metrics summarize(std::vector<double> rates, const std::vector<double>& reference) {
  if (rates.size() != reference.size()) throw std::invalid_argument("reference rate count mismatch");
  Metrics m;
  m.ratios.resize(rates.size());
  double rate_sum = 0.0, ratio_sum = 0.0;
  for (std::size_t i = 0; i < rates.size(); ++i) {
    m.ratios[i] = reference[i] > 0.0 ? rates[i] / reference[i] : 1.0;
    rate_sum += rates[i];
    ratio_sum += m.ratios[i];
  }
  const double n = std::max<double>(1.0, static_cast<double>(rates.size()));
  m.test_sum_rate = rate_sum / n;
  m.normalized_rate = ratio_sum / n;
  m.model_rates = std::move(rates);
  m.reference_rates = reference;
  return m;
}

void require_quantum(const Model& model) {
  if (!model.has_quantum_layer()) {
    throw models::ConfigError("noisy-circuit evaluation needs a model with a quantum layer");
  }
}

// Restores the model's evaluation options on scope exit.
struct EvalOptionsGuard {
  Model& model;
  models::QuantumEvalOptions saved;
  explicit EvalOptionsGuard(Model& m) : model(m), saved(m.quantum_eval()) {}
  ~EvalOptionsGuard() { model.quantum_eval() = saved; }
};

std::vector<double> quantum_outputs(Model& model, const std::vector<ChannelSample>& samples, Exec exec) {
  std::vector<double> out;
  constexpr std::size_t kChunk = 500;
  for (std::size_t start = 0; start < samples.size(); start += kChunk) {
    const std::size_t len = std::min(kChunk, samples.size() - start);
    const auto fwd =
        model.forward(std::span<const ChannelSample>(samples.data() + start, len), Mode::eval, exec, start);
    for (const auto& s : fwd.samples) out.insert(out.end(), s.quantum_out.data.begin(), s.quantum_out.data.end());
  }
  return out;
}

}  // namespace

Metrics evaluate(Model& model, const std::vector<ChannelSample>& test, const std::vector<double>& wmmse_rates,
                 double P, Exec exec) {
  return summarize(model_rates(model, test, test, P, exec), wmmse_rates);
}

Metrics evaluate_noisy(Model& model, const std::vector<ChannelSample>& test, const std::vector<double>& wmmse_rates,
                       double P, const qlayers::NoiseSpec& noise, int shots, std::uint64_t shot_seed, Exec exec) {
  require_quantum(model);
  EvalOptionsGuard guard(model);
  model.quantum_eval() = {shots, noise, shot_seed};
  return evaluate(model, test, wmmse_rates, P, exec);
}

double qnn_output_mse(Model& model, const std::vector<ChannelSample>& test, const qlayers::NoiseSpec& noise,
                      int shots, std::uint64_t shot_seed, Exec exec) {
  require_quantum(model);
  EvalOptionsGuard guard(model);
  model.quantum_eval() = {};
  const auto clean = quantum_outputs(model, test, exec);
  model.quantum_eval() = {shots, noise, shot_seed};
  const auto noisy = quantum_outputs(model, test, exec);
  if (clean.empty()) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < clean.size(); ++i) acc += (noisy[i] - clean[i]) * (noisy[i] - clean[i]);
  return acc / static_cast<double>(clean.size());
}

CsiTruth perturb_channels(const std::vector<ChannelSample>& estimates, double sigma_e2, std::uint64_t seed,
                          double P, Exec exec) {
  CsiTruth t;
  t.truth.resize(estimates.size());
  for_each_index(exec, estimates.size(), [&](std::size_t i) {
    t.truth[i] = bf::add_channel_error(estimates[i], sigma_e2, derive_seed(seed, 0xC5, i));
  });
  t.wmmse_rates = bf::wmmse_rates(t.truth, P, {}, exec);
  return t;
}

Metrics evaluate_imperfect_csi(Model& model, const std::vector<ChannelSample>& estimates, const CsiTruth& truth,
                               double P, Exec exec) {
  return summarize(model_rates(model, estimates, truth.truth, P, exec), truth.wmmse_rates);
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

}  // namespace hqnn::trainer
