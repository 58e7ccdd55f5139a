#include "hqnn/nn.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace hqnn::nn {

std::size_t shape_product(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw ShapeError("negative tensor dimension");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

Tensor::Tensor(std::vector<int> s, double fill) : shape(std::move(s)), data(shape_product(shape), fill) {}

Tensor::Tensor(std::vector<int> s, std::vector<double> values) : shape(std::move(s)), data(std::move(values)) {
  if (data.size() != shape_product(shape)) throw ShapeError("tensor data length does not match shape");
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ')';
  return os.str();
}

void Tensor::fill(double v) { std::fill(data.begin(), data.end(), v); }

void init_uniform_fan_in(Tensor& t, int fan_in, std::mt19937_64& rng) {
  const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> u(-bound, bound);
  for (auto& v : t.data) v = u(rng);
}

// ---------------------------------------------------------------- conv2d

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

struct ConvDims {
  int c, h, w, f, m, oh, ow;
};

ConvDims conv_dims(const Tensor& input, const Tensor& kernels, int padding) {
  require(input.shape.size() == 3, "conv2d input must be (C, H, W), got " + input.shape_str());
  require(kernels.shape.size() == 4, "conv2d kernels must be (F, C, m, m)");
  require(kernels.shape[1] == input.shape[0], "conv2d channel mismatch: kernels " + kernels.shape_str() +
                                                  " vs input " + input.shape_str());
  require(kernels.shape[2] == kernels.shape[3], "conv2d kernels must be square");
  ConvDims d{input.shape[0], input.shape[1], input.shape[2], kernels.shape[0], kernels.shape[2], 0, 0};
  d.oh = d.h + 2 * padding - d.m + 1;
  d.ow = d.w + 2 * padding - d.m + 1;
  require(d.oh >= 1 && d.ow >= 1, "conv2d kernel larger than padded input");
  return d;
}

}  // namespace

Tensor conv2d_forward(const Tensor& input, const Tensor& kernels, const Tensor& bias, int padding) {
  const ConvDims d = conv_dims(input, kernels, padding);
  require(bias.size() == static_cast<std::size_t>(d.f), "conv2d bias length must equal filter count");
  Tensor out({d.f, d.oh, d.ow});
  const double* k = kernels.data.data();
  for (int f = 0; f < d.f; ++f) {
    for (int oy = 0; oy < d.oh; ++oy) {
      for (int ox = 0; ox < d.ow; ++ox) {
        double acc = bias[static_cast<std::size_t>(f)];
        for (int c = 0; c < d.c; ++c) {
          for (int ky = 0; ky < d.m; ++ky) {
            const int iy = oy + ky - padding;
            if (iy < 0 || iy >= d.h) continue;
            for (int kx = 0; kx < d.m; ++kx) {
              const int ix = ox + kx - padding;
              if (ix < 0 || ix >= d.w) continue;
              acc += k[((f * d.c + c) * d.m + ky) * d.m + kx] * input.at(c, iy, ix);
            }
          }
        }
        out.at(f, oy, ox) = acc;
      }
    }
  }
  return out;
}

void conv2d_backward(const Tensor& input, const Tensor& kernels, const Tensor& grad_out, int padding,
                     Tensor* grad_input, Tensor* grad_kernels, Tensor* grad_bias) {
  const ConvDims d = conv_dims(input, kernels, padding);
  require(grad_out.shape == std::vector<int>{d.f, d.oh, d.ow}, "conv2d grad_out has wrong shape");
  if (grad_input) {
    *grad_input = Tensor(input.shape);
  }
  if (grad_kernels) require(grad_kernels->shape == kernels.shape, "conv2d kernel grad shape");
  if (grad_bias) require(grad_bias->size() == static_cast<std::size_t>(d.f), "conv2d bias grad shape");

  const double* k = kernels.data.data();
  for (int f = 0; f < d.f; ++f) {
    for (int oy = 0; oy < d.oh; ++oy) {
      for (int ox = 0; ox < d.ow; ++ox) {
        const double g = grad_out.at(f, oy, ox);
        if (grad_bias) (*grad_bias)[static_cast<std::size_t>(f)] += g;
        if (g == 0.0) continue;
        for (int c = 0; c < d.c; ++c) {
          for (int ky = 0; ky < d.m; ++ky) {
            const int iy = oy + ky - padding;
            if (iy < 0 || iy >= d.h) continue;
            for (int kx = 0; kx < d.m; ++kx) {
              const int ix = ox + kx - padding;
              if (ix < 0 || ix >= d.w) continue;
              const auto ki = static_cast<std::size_t>(((f * d.c + c) * d.m + ky) * d.m + kx);
              if (grad_kernels) (*grad_kernels)[ki] += g * input.at(c, iy, ix);
              if (grad_input) grad_input->at(c, iy, ix) += g * k[ki];
            }
          }
        }
      }
    }
  }
}

// ---------------------------------------------------------------- dense

Tensor linear_forward(const Tensor& x, const Tensor& weights, const Tensor& bias) {
  require(weights.shape.size() == 2, "linear weights must be (k, n)");
  const int k = weights.shape[0];
  const int n = weights.shape[1];
  require(x.size() == static_cast<std::size_t>(n),
          "linear input length " + std::to_string(x.size()) + " != " + std::to_string(n));
  require(bias.size() == static_cast<std::size_t>(k), "linear bias length mismatch");
  Tensor y({k});
  for (int i = 0; i < k; ++i) {
    double acc = bias[static_cast<std::size_t>(i)];
    const double* row = weights.data.data() + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) acc += row[j] * x[static_cast<std::size_t>(j)];
    y[static_cast<std::size_t>(i)] = acc;
  }
  return y;
}

void linear_backward(const Tensor& x, const Tensor& weights, const Tensor& grad_y, Tensor* grad_x,
                     Tensor* grad_weights, Tensor* grad_bias) {
  const int k = weights.shape[0];
  const int n = weights.shape[1];
  require(grad_y.size() == static_cast<std::size_t>(k), "linear grad_y length mismatch");
  require(x.size() == static_cast<std::size_t>(n), "linear input length mismatch");
  if (grad_x) *grad_x = Tensor({n});
  for (int i = 0; i < k; ++i) {
    const double g = grad_y[static_cast<std::size_t>(i)];
    if (grad_bias) (*grad_bias)[static_cast<std::size_t>(i)] += g;
    const double* row = weights.data.data() + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      if (grad_weights) (*grad_weights)[static_cast<std::size_t>(i) * n + j] += g * x[static_cast<std::size_t>(j)];
      if (grad_x) (*grad_x)[static_cast<std::size_t>(j)] += g * row[j];
    }
  }
}

// ---------------------------------------------------------------- activations

Tensor activate(Activation act, const Tensor& x) {
  Tensor y = x;
  for (auto& v : y.data) {
    switch (act) {
      case Activation::relu: v = v > 0.0 ? v : 0.0; break;
      case Activation::tanh: v = std::tanh(v); break;
      case Activation::sigmoid: v = 1.0 / (1.0 + std::exp(-v)); break;
    }
  }
  return y;
}

Tensor activate_backward(Activation act, const Tensor& x, const Tensor& y, const Tensor& grad_y) {
  require(x.size() == grad_y.size() && y.size() == grad_y.size(), "activation gradient shape mismatch");
  Tensor g = grad_y;
  for (std::size_t i = 0; i < g.size(); ++i) {
    switch (act) {
      case Activation::relu: g[i] = x[i] > 0.0 ? g[i] : 0.0; break;
      case Activation::tanh: g[i] *= 1.0 - y[i] * y[i]; break;
      case Activation::sigmoid: g[i] *= y[i] * (1.0 - y[i]); break;
    }
  }
  return g;
}

// ---------------------------------------------------------------- batch norm

BatchNorm::BatchNorm(int c, std::string prefix)
    : channels(c),
      gamma(prefix + ".gamma", Tensor({c}, 1.0)),
      beta(prefix + ".beta", Tensor({c}, 0.0)),
      running_mean(static_cast<std::size_t>(c), 0.0),
      running_var(static_cast<std::size_t>(c), 1.0) {}

std::vector<Tensor> batchnorm_forward(BatchNorm& bn, const std::vector<Tensor>& batch, Mode mode,
                                      BatchNormCache* cache) {
  require(!batch.empty(), "batchnorm on an empty batch");
  if (mode == Mode::train && batch.size() < 2) {
    throw std::invalid_argument("batchnorm in train mode needs a batch of at least 2");
  }
  const auto& shape = batch.front().shape;
  require(shape.size() == 3 && shape[0] == bn.channels, "batchnorm input must be (C, H, W) with C = " +
                                                            std::to_string(bn.channels));
  for (const auto& t : batch) require(t.shape == shape, "batchnorm samples differ in shape");

  const int c_count = shape[0];
  const std::size_t plane = static_cast<std::size_t>(shape[1] * shape[2]);
  const double count = static_cast<double>(plane * batch.size());

  std::vector<double> mean(static_cast<std::size_t>(c_count));
  std::vector<double> inv_std(static_cast<std::size_t>(c_count));
  for (int c = 0; c < c_count; ++c) {
    const auto ci = static_cast<std::size_t>(c);
    if (mode == Mode::train) {
      double s = 0.0;
      for (const auto& t : batch)
        for (std::size_t i = 0; i < plane; ++i) s += t[ci * plane + i];
      const double mu = s / count;
      double v = 0.0;
      for (const auto& t : batch)
        for (std::size_t i = 0; i < plane; ++i) {
          const double d = t[ci * plane + i] - mu;
          v += d * d;
        }
      v /= count;
      mean[ci] = mu;
      inv_std[ci] = 1.0 / std::sqrt(v + bn.epsilon);
      const double unbiased = count > 1.0 ? v * count / (count - 1.0) : v;
      bn.running_mean[ci] = (1.0 - bn.momentum) * bn.running_mean[ci] + bn.momentum * mu;
      bn.running_var[ci] = (1.0 - bn.momentum) * bn.running_var[ci] + bn.momentum * unbiased;
    } else {
      mean[ci] = bn.running_mean[ci];
      inv_std[ci] = 1.0 / std::sqrt(bn.running_var[ci] + bn.epsilon);
    }
  }

  std::vector<Tensor> out;
  out.reserve(batch.size());
  if (cache) {
    cache->mode = mode;
    cache->inv_std = inv_std;
    cache->xhat.clear();
    cache->xhat.reserve(batch.size());
  }
  for (const auto& t : batch) {
    Tensor xhat(shape);
    Tensor y(shape);
    for (int c = 0; c < c_count; ++c) {
      const auto ci = static_cast<std::size_t>(c);
      const double g = bn.gamma.value[ci];
      const double b = bn.beta.value[ci];
      for (std::size_t i = 0; i < plane; ++i) {
        const std::size_t idx = ci * plane + i;
        xhat[idx] = (t[idx] - mean[ci]) * inv_std[ci];
        y[idx] = g * xhat[idx] + b;
      }
    }
    if (cache) cache->xhat.push_back(std::move(xhat));
    out.push_back(std::move(y));
  }
  return out;
}

std::vector<Tensor> batchnorm_backward(BatchNorm& bn, const BatchNormCache& cache,
                                       const std::vector<Tensor>& grad_out) {
  require(grad_out.size() == cache.xhat.size(), "batchnorm backward batch size mismatch");
  const auto& shape = cache.xhat.front().shape;
  const int c_count = shape[0];
  const std::size_t plane = static_cast<std::size_t>(shape[1] * shape[2]);
  const double count = static_cast<double>(plane * grad_out.size());

  std::vector<Tensor> grad_in(grad_out.size(), Tensor(shape));
  for (int c = 0; c < c_count; ++c) {
    const auto ci = static_cast<std::size_t>(c);
    double sum_dy = 0.0;
    double sum_dy_xhat = 0.0;
    for (std::size_t n = 0; n < grad_out.size(); ++n)
      for (std::size_t i = 0; i < plane; ++i) {
        const std::size_t idx = ci * plane + i;
        sum_dy += grad_out[n][idx];
        sum_dy_xhat += grad_out[n][idx] * cache.xhat[n][idx];
      }
    bn.beta.grad[ci] += sum_dy;
    bn.gamma.grad[ci] += sum_dy_xhat;

    const double g = bn.gamma.value[ci];
    const double is = cache.inv_std[ci];
    for (std::size_t n = 0; n < grad_out.size(); ++n)
      for (std::size_t i = 0; i < plane; ++i) {
        const std::size_t idx = ci * plane + i;
        if (cache.mode == Mode::eval) {
          grad_in[n][idx] = grad_out[n][idx] * g * is;
        } else {
          grad_in[n][idx] = g * is / count *
                            (count * grad_out[n][idx] - sum_dy - cache.xhat[n][idx] * sum_dy_xhat);
        }
      }
  }
  return grad_in;
}

// ---------------------------------------------------------------- Adam

std::size_t adam_step(const std::vector<Param*>& params, AdamState& state) {
  if (state.first_moment.size() != params.size()) {
    state.first_moment.assign(params.size(), {});
    state.second_moment.assign(params.size(), {});
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.first_moment[i].assign(params[i]->value.size(), 0.0);
      state.second_moment[i].assign(params[i]->value.size(), 0.0);
    }
  }
  ++state.step_count;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));
  std::size_t updated = 0;
  for (std::size_t p = 0; p < params.size(); ++p) {
    Param& prm = *params[p];
    if (prm.frozen) continue;
    require(prm.grad.size() == prm.value.size(), "gradient and parameter sizes differ for " + prm.name);
    auto& m = state.first_moment[p];
    auto& v = state.second_moment[p];
    for (std::size_t i = 0; i < prm.value.size(); ++i) {
      const double g = prm.grad[i];
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      prm.value[i] -= state.lr * mhat / (std::sqrt(vhat) + state.epsilon);
    }
    updated += prm.value.size();
  }
  return updated;
}

// ---------------------------------------------------------------- gradient check

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

double grad_check(const std::function<double()>& loss, const std::vector<Param*>& params,
                  const std::vector<double>& analytic, double h) {
  double worst = 0.0;
  std::size_t k = 0;
  for (Param* p : params) {
    for (std::size_t i = 0; i < p->value.size(); ++i, ++k) {
      if (k >= analytic.size()) throw ShapeError("analytic gradient shorter than parameter list");
      const double orig = p->value[i];
      p->value[i] = orig + h;
      const double plus = loss();
      p->value[i] = orig - h;
      const double minus = loss();
      p->value[i] = orig;
      worst = std::max(worst, relative_error(analytic[k], (plus - minus) / (2.0 * h)));
    }
  }
  return worst;
}

double grad_check(const std::function<double()>& loss, const std::function<void()>& backward,
                  const std::vector<Param*>& params, double h) {
  for (Param* p : params) p->zero_grad();
  backward();
  std::vector<double> analytic;
  for (Param* p : params) analytic.insert(analytic.end(), p->grad.data.begin(), p->grad.data.end());
  return grad_check(loss, params, analytic, h);
}

}  // namespace hqnn::nn
