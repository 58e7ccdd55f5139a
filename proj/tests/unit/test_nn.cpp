#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "hqnn/nn.hpp"

using namespace hqnn::nn;

namespace {

Tensor random_tensor(std::vector<int> shape, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> u(-1, 1);
  for (auto& v : t.data) v = u(rng);
  return t;
}

double dot(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Reference convolution: explicit zero-padded copy, then a plain correlation.
Tensor conv_reference(const Tensor& x, const Tensor& k, const Tensor& b, int pad) {
  const int C = x.dim(0), H = x.dim(1), W = x.dim(2), F = k.dim(0), m = k.dim(2);
  Tensor padded({C, H + 2 * pad, W + 2 * pad});
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < H; ++y)
      for (int z = 0; z < W; ++z) padded.at(c, y + pad, z + pad) = x.at(c, y, z);
  const int oh = H + 2 * pad - m + 1, ow = W + 2 * pad - m + 1;
  Tensor out({F, oh, ow});
  for (int f = 0; f < F; ++f)
    for (int y = 0; y < oh; ++y)
      for (int z = 0; z < ow; ++z) {
        double s = b[f];
        for (int c = 0; c < C; ++c)
          for (int u = 0; u < m; ++u)
            for (int v = 0; v < m; ++v) s += k.data[((f * C + c) * m + u) * m + v] * padded.at(c, y + u, z + v);
        out.at(f, y, z) = s;
      }
  return out;
}

}  // namespace

TEST_CASE("conv2d forward matches the padded reference") {
  std::mt19937_64 rng(1);
  for (int m : {1, 2, 3}) {
    const auto x = random_tensor({3, 6, 2}, rng);
    const auto k = random_tensor({4, 3, m, m}, rng);
    const auto b = random_tensor({4}, rng);
    const auto y = conv2d_forward(x, k, b, 1);
    const auto r = conv_reference(x, k, b, 1);
    REQUIRE(y.shape == r.shape);
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == doctest::Approx(r[i]).epsilon(1e-14));
  }
  // Width-1 input with padding 1 and m = 3 keeps the spatial size.
  CHECK(conv2d_forward(Tensor({2, 8, 1}), Tensor({5, 2, 3, 3}), Tensor({5}), 1).shape == std::vector<int>{5, 8, 1});
  CHECK_THROWS_AS(conv2d_forward(Tensor({2, 8, 1}), Tensor({5, 3, 3, 3}), Tensor({5}), 1), ShapeError);
}

TEST_CASE("conv2d backward matches finite differences") {
  std::mt19937_64 rng(2);
  Param x("x", random_tensor({2, 5, 2}, rng));
  Param k("k", random_tensor({3, 2, 3, 3}, rng));
  Param b("b", random_tensor({3}, rng));
  const auto up = random_tensor({3, 5, 2}, rng);
  auto loss = [&] { return dot(conv2d_forward(x.value, k.value, b.value, 1), up); };
  auto backward = [&] {
    Tensor gx;
    k.zero_grad();
    b.zero_grad();
    conv2d_backward(x.value, k.value, up, 1, &gx, &k.grad, &b.grad);
    x.grad = gx;
  };
  CHECK(grad_check(loss, backward, {&x, &k, &b}) < 1e-7);
}

TEST_CASE("dense layer and activations") {
  std::mt19937_64 rng(3);
  Param x("x", random_tensor({6}, rng));
  Param w("w", random_tensor({4, 6}, rng));
  Param b("b", random_tensor({4}, rng));
  const auto y = linear_forward(x.value, w.value, b.value);
  for (int i = 0; i < 4; ++i) {
    double s = b.value[i];
    for (int j = 0; j < 6; ++j) s += w.value[i * 6 + j] * x.value[j];
    CHECK(y[i] == doctest::Approx(s));
  }
  const auto up = random_tensor({4}, rng);
  for (Activation act : {Activation::relu, Activation::tanh, Activation::sigmoid}) {
    auto loss = [&] { return dot(activate(act, linear_forward(x.value, w.value, b.value)), up); };
    auto backward = [&] {
      const auto z = linear_forward(x.value, w.value, b.value);
      const auto a = activate(act, z);
      const auto gz = activate_backward(act, z, a, up);
      Tensor gx;
      w.zero_grad();
      b.zero_grad();
      linear_backward(x.value, w.value, gz, &gx, &w.grad, &b.grad);
      x.grad = gx;
    };
    CHECK(grad_check(loss, backward, {&x, &w, &b}) < 1e-6);
  }
  const auto s = activate(Activation::sigmoid, Tensor({3}, std::vector<double>{0.0, 40.0, -40.0}));
  CHECK(s[0] == doctest::Approx(0.5));
  CHECK(s[1] <= 1.0);
  CHECK(s[2] >= 0.0);
}

TEST_CASE("batch norm") {
  std::mt19937_64 rng(4);
  BatchNorm bn(2);
  std::vector<Tensor> batch;
  for (int i = 0; i < 5; ++i) batch.push_back(random_tensor({2, 3, 1}, rng));
  BatchNormCache cache;
  const auto y = batchnorm_forward(bn, batch, Mode::train, &cache);
  for (int c = 0; c < 2; ++c) {
    double s = 0.0, s2 = 0.0;
    for (const auto& t : y)
      for (int h = 0; h < 3; ++h) {
        s += t.at(c, h, 0);
        s2 += t.at(c, h, 0) * t.at(c, h, 0);
      }
    CHECK(std::abs(s / 15.0) < 1e-12);
    CHECK(s2 / 15.0 == doctest::Approx(1.0).epsilon(1e-3));  // eps = 1e-5 in the denominator
  }
  // Running stats moved by momentum 0.1 from (0, 1).
  CHECK(bn.running_mean[0] != 0.0);
  CHECK(bn.running_var[0] != 1.0);
  CHECK_THROWS(batchnorm_forward(bn, {batch[0]}, Mode::train, nullptr));

  // Eval mode uses the running statistics.
  const auto e = batchnorm_forward(bn, {batch[0]}, Mode::eval, nullptr);
  CHECK(e[0].at(1, 2, 0) ==
        doctest::Approx((batch[0].at(1, 2, 0) - bn.running_mean[1]) / std::sqrt(bn.running_var[1] + bn.epsilon)));

  // Backward through batch statistics.
  std::vector<Param> xs;
  for (int i = 0; i < 4; ++i) xs.emplace_back("x" + std::to_string(i), random_tensor({2, 3, 1}, rng));
  bn.gamma.value = random_tensor({2}, rng);
  bn.beta.value = random_tensor({2}, rng);
  std::vector<Tensor> ups;
  for (int i = 0; i < 4; ++i) ups.push_back(random_tensor({2, 3, 1}, rng));
  auto inputs = [&] {
    std::vector<Tensor> v;
    for (auto& p : xs) v.push_back(p.value);
    return v;
  };
  auto loss = [&] {
    const auto out = batchnorm_forward(bn, inputs(), Mode::train, nullptr);
    double s = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) s += dot(out[i], ups[i]);
    return s;
  };
  auto backward = [&] {
    BatchNormCache c;
    batchnorm_forward(bn, inputs(), Mode::train, &c);
    bn.gamma.zero_grad();
    bn.beta.zero_grad();
    const auto gx = batchnorm_backward(bn, c, ups);
    for (std::size_t i = 0; i < xs.size(); ++i) xs[i].grad = gx[i];
  };
  std::vector<Param*> ps{&bn.gamma, &bn.beta};
  for (auto& p : xs) ps.push_back(&p);
  CHECK(grad_check(loss, backward, ps) < 1e-6);
}

TEST_CASE("Adam first step and frozen params") {
  Param a("a", Tensor({2}, std::vector<double>{1.0, -2.0}));
  Param f("f", Tensor({3}, std::vector<double>{5.0, 5.0, 5.0}));
  f.frozen = true;
  a.grad = Tensor({2}, std::vector<double>{0.5, -4.0});
  f.grad = Tensor({3}, 1.0);
  AdamState st;
  st.lr = 0.1;
  const auto n = adam_step({&a, &f}, st);
  CHECK(n == 2);
  // Bias-corrected first step moves each coordinate by lr * g / (|g| + eps').
  CHECK(a.value[0] == doctest::Approx(1.0 - 0.1 * 0.5 / (0.5 + 1e-8)));
  CHECK(a.value[1] == doctest::Approx(-2.0 + 0.1 * 4.0 / (4.0 + 1e-8)));
  CHECK(f.value.data == std::vector<double>{5.0, 5.0, 5.0});

  // Second step against a hand-rolled recurrence.
  a.grad = Tensor({2}, std::vector<double>{0.1, 0.2});
  const double m1 = 0.9 * (0.1 * 0.5) + 0.1 * 0.1, v1 = 0.999 * (0.001 * 0.25) + 0.001 * 0.01;
  const double expect = a.value[0] - 0.1 * (m1 / (1 - 0.81)) / (std::sqrt(v1 / (1 - 0.999 * 0.999)) + 1e-8);
  adam_step({&a, &f}, st);
  CHECK(a.value[0] == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("gradient checker flags a wrong gradient") {
  Param p("p", Tensor({2}, std::vector<double>{0.3, 0.7}));
  auto loss = [&] { return p.value[0] * p.value[0] + std::sin(p.value[1]); };
  CHECK(grad_check(loss, {&p}, {0.6, std::cos(0.7)}) < 1e-8);
  CHECK(grad_check(loss, {&p}, {0.6, 1.1 * std::cos(0.7)}) > 0.05);
  CHECK(relative_error(0.0, 1e-6) == doctest::Approx(1e-2));
}
