#pragma once

// Minimal classical deep-learning kit: dense tensors, the conv / activation /
// batch-norm / dense layers used by the beamforming networks, Adam, and a
// finite-difference gradient checker.
//
// Layer kernels are free functions over a single sample. Backward kernels
// accumulate parameter gradients into caller-provided buffers so per-sample
// gradients can be computed independently and reduced in a fixed order.

#include <cstddef>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace hqnn::nn {

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s, double fill = 0.0);
  Tensor(std::vector<int> s, std::vector<double> values);

  std::size_t size() const { return data.size(); }
  int dim(std::size_t axis) const { return shape.at(axis); }
  std::string shape_str() const;

  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }

  // 3-D (C, H, W) access.
  double& at(int c, int h, int w) { return data[index3(c, h, w)]; }
  double at(int c, int h, int w) const { return data[index3(c, h, w)]; }

  void fill(double v);

 private:
  std::size_t index3(int c, int h, int w) const {
    return static_cast<std::size_t>((c * shape[1] + h) * shape[2] + w);
  }
};

std::size_t shape_product(const std::vector<int>& shape);

/// A trainable tensor together with its gradient accumulator.
struct Param {
  std::string name;
  Tensor value;
  Tensor grad;
  bool frozen = false;

  Param() = default;
  Param(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(value.shape) {}

  void zero_grad() { grad.fill(0.0); }
};

/// Uniform(-sqrt(1/fan_in), sqrt(1/fan_in)).
void init_uniform_fan_in(Tensor& t, int fan_in, std::mt19937_64& rng);

// ---------------------------------------------------------------- conv2d

/// Zero-padded stride-1 cross-correlation. input (C, H, W), kernels (F, C, m, m),
/// bias (F) -> (F, H + 2p - m + 1, W + 2p - m + 1).
Tensor conv2d_forward(const Tensor& input, const Tensor& kernels, const Tensor& bias, int padding = 1);

/// grad_input is overwritten when non-null; grad_kernels and grad_bias accumulate.
void conv2d_backward(const Tensor& input, const Tensor& kernels, const Tensor& grad_out, int padding,
                     Tensor* grad_input, Tensor* grad_kernels, Tensor* grad_bias);

// ---------------------------------------------------------------- dense

/// y = W x + b; W is (k, n).
Tensor linear_forward(const Tensor& x, const Tensor& weights, const Tensor& bias);

void linear_backward(const Tensor& x, const Tensor& weights, const Tensor& grad_y, Tensor* grad_x,
                     Tensor* grad_weights, Tensor* grad_bias);

// ---------------------------------------------------------------- activations

enum class Activation { relu, tanh, sigmoid };

Tensor activate(Activation act, const Tensor& x);

/// Uses the forward input for relu and the forward output for tanh / sigmoid.
Tensor activate_backward(Activation act, const Tensor& x, const Tensor& y, const Tensor& grad_y);

// ---------------------------------------------------------------- batch norm

enum class Mode { train, eval };

/// Per-channel normalization of (C, H, W) samples over batch x H x W.
struct BatchNorm {
  int channels = 0;
  Param gamma;
  Param beta;
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double momentum = 0.1;
  double epsilon = 1e-5;

  BatchNorm() = default;
  explicit BatchNorm(int c, std::string prefix = "bn");
};

struct BatchNormCache {
  Mode mode = Mode::eval;
  std::vector<Tensor> xhat;
  std::vector<double> inv_std;
};

/// Train mode uses batch statistics (biased variance) and updates the running
/// stats with `momentum` (unbiased variance); eval mode uses running stats.
std::vector<Tensor> batchnorm_forward(BatchNorm& bn, const std::vector<Tensor>& batch, Mode mode,
                                      BatchNormCache* cache);

/// Returns input gradients; gamma/beta gradients accumulate into bn.*.grad.
std::vector<Tensor> batchnorm_backward(BatchNorm& bn, const BatchNormCache& cache,
                                       const std::vector<Tensor>& grad_out);

// ---------------------------------------------------------------- Adam

struct AdamState {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  long step_count = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
};

/// Bias-corrected Adam over every non-frozen param. Returns the number of
/// scalars updated.
std::size_t adam_step(const std::vector<Param*>& params, AdamState& state);

// ---------------------------------------------------------------- gradient check

/// |a - n| / max(|a|, |n|, floor).
double relative_error(double analytic, double numeric, double floor = 1e-4);

/// Compares `analytic` (flattened over `params`, same order) with central
/// differences of `loss` at step h. Returns the max relative error.
double grad_check(const std::function<double()>& loss, const std::vector<Param*>& params,
                  const std::vector<double>& analytic, double h = 1e-5);

/// Convenience: runs `backward` (which must fill Param::grad) then grad_check.
double grad_check(const std::function<double()>& loss, const std::function<void()>& backward,
                  const std::vector<Param*>& params, double h = 1e-5);

}  // namespace hqnn::nn
