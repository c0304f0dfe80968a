#include <doctest.h>

#include <cmath>
#include <random>

#include "gradcheck.hpp"
#include "usonic/nn/layers.hpp"
#include "usonic/nn/params.hpp"
#include "usonic/common/error.hpp"

using namespace usonic::nn;

namespace {

std::vector<double> randn(std::size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  std::vector<double> v(n);
  for (double& x : v) x = nd(rng);
  return v;
}

Tensor4<double> random_tensor(int n, int h, int w, int c, unsigned seed) {
  Tensor4<double> t(n, h, w, c);
  t.data = randn(t.size(), seed);
  return t;
}

// Naive quadruple loop with explicit zero padding.
Tensor4<double> brute_conv(const Tensor4<double>& x, const std::vector<double>& k, const std::vector<double>& bias,
                           int cout, int ks, bool same) {
  const int pad = same ? ks / 2 : 0;
  const int ho = x.h + 2 * pad - ks + 1;
  const int wo = x.w + 2 * pad - ks + 1;
  Tensor4<double> y(x.n, ho, wo, cout);
  for (int n = 0; n < x.n; ++n)
    for (int oc = 0; oc < cout; ++oc)
      for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox) {
          double acc = bias.empty() ? 0.0 : bias[static_cast<std::size_t>(oc)];
          for (int ic = 0; ic < x.c; ++ic)
            for (int ky = 0; ky < ks; ++ky)
              for (int kx = 0; kx < ks; ++kx) {
                const int iy = oy + ky - pad;
                const int ix = ox + kx - pad;
                if (iy < 0 || iy >= x.h || ix < 0 || ix >= x.w) continue;
                acc += k[static_cast<std::size_t>(((oc * x.c + ic) * ks + ky) * ks + kx)] * x.at(n, iy, ix, ic);
              }
          y.at(n, oy, ox, oc) = acc;
        }
  return y;
}

// Scalar test loss L = sum(r .* y) for a fixed random r, so dL/dy = r.
double project(const Tensor4<double>& y, const std::vector<double>& r) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.data.size(); ++i) s += r[i] * y.data[i];
  return s;
}

}  // namespace

TEST_CASE("conv2d: ones on ones with valid padding sums to 9") {
  Tensor4<double> x(1, 3, 3, 1);
  std::fill(x.data.begin(), x.data.end(), 1.0);
  std::vector<double> k(9, 1.0);
  Tensor4<double> y;
  conv2d_forward<double>(x, k, {}, 1, 3, Padding::Valid, y);
  REQUIRE(y.size() == 1);
  CHECK(y.data[0] == 9.0);
}

TEST_CASE("conv2d: identity 1x1 kernel returns the input") {
  const auto x = random_tensor(2, 4, 5, 3, 1);
  std::vector<double> k(9, 0.0);
  for (int c = 0; c < 3; ++c) k[static_cast<std::size_t>(c * 3 + c)] = 1.0;
  Tensor4<double> y;
  conv2d_forward<double>(x, k, {}, 3, 1, Padding::Same, y);
  CHECK(y.data == x.data);
}

TEST_CASE("conv2d matches the brute-force oracle") {
  for (int ks : {1, 3, 5}) {
    for (bool same : {true, false}) {
      const auto x = random_tensor(2, 5, 5, 2, 10 + ks);
      const auto k = randn(static_cast<std::size_t>(3 * 2 * ks * ks), 20 + ks);
      const auto b = randn(3, 30);
      Tensor4<double> y;
      conv2d_forward<double>(x, k, b, 3, ks, same ? Padding::Same : Padding::Valid, y);
      const auto ref = brute_conv(x, k, b, 3, ks, same);
      REQUIRE(y.same_shape(ref));
      double md = 0.0;
      for (std::size_t i = 0; i < y.data.size(); ++i) md = std::max(md, std::abs(y.data[i] - ref.data[i]));
      CHECK(md < 1e-6);
    }
  }
}

TEST_CASE("conv2d float path agrees with the oracle") {
  const auto xd = random_tensor(1, 5, 5, 2, 3);
  const auto kd = randn(2 * 2 * 9, 4);
  Tensor4<float> xf(1, 5, 5, 2);
  for (std::size_t i = 0; i < xd.data.size(); ++i) xf.data[i] = static_cast<float>(xd.data[i]);
  std::vector<float> kf(kd.begin(), kd.end());
  std::vector<double> kd_rounded(kf.begin(), kf.end());
  Tensor4<double> xd_rounded(1, 5, 5, 2);
  for (std::size_t i = 0; i < xf.data.size(); ++i) xd_rounded.data[i] = xf.data[i];
  Tensor4<float> y;
  conv2d_forward<float>(xf, kf, {}, 2, 3, Padding::Same, y);
  const auto ref = brute_conv(xd_rounded, kd_rounded, {}, 2, 3, true);
  for (std::size_t i = 0; i < y.data.size(); ++i) CHECK(std::abs(y.data[i] - ref.data[i]) < 1e-5);
}

TEST_CASE("conv2d rejects a kernel with the wrong input channel count") {
  const auto x = random_tensor(1, 4, 4, 2, 1);
  std::vector<double> k(9, 1.0);  // sized for one input channel
  Tensor4<double> y;
  CHECK_THROWS_AS(conv2d_forward<double>(x, k, {}, 1, 3, Padding::Same, y), std::invalid_argument);
}

TEST_CASE("conv2d is linear in input and kernel") {
  const auto x1 = random_tensor(1, 6, 4, 2, 1);
  const auto x2 = random_tensor(1, 6, 4, 2, 2);
  const auto k = randn(2 * 2 * 9, 3);
  Tensor4<double> xs = x1;
  for (std::size_t i = 0; i < xs.data.size(); ++i) xs.data[i] = 2.0 * x1.data[i] + x2.data[i];
  Tensor4<double> y1, y2, ys;
  conv2d_forward<double>(x1, k, {}, 2, 3, Padding::Same, y1);
  conv2d_forward<double>(x2, k, {}, 2, 3, Padding::Same, y2);
  conv2d_forward<double>(xs, k, {}, 2, 3, Padding::Same, ys);
  for (std::size_t i = 0; i < ys.data.size(); ++i) CHECK(ys.data[i] == doctest::Approx(2.0 * y1.data[i] + y2.data[i]));
}

TEST_CASE("conv2d gradients match finite differences") {
  for (bool same : {true, false}) {
    const Padding pad = same ? Padding::Same : Padding::Valid;
    auto x = random_tensor(2, 5, 4, 2, 5);
    auto k = randn(3 * 2 * 9, 6);
    auto b = randn(3, 7);
    Tensor4<double> y;
    conv2d_forward<double>(x, k, b, 3, 3, pad, y);
    const auto r = randn(y.size(), 8);
    std::vector<double> dk(k.size(), 0.0), db(3, 0.0);
    Tensor4<double> dy = y;
    dy.data = r;
    Tensor4<double> dx;
    conv2d_backward<double>(x, k, 3, 3, pad, dy, dk, db, &dx);
    auto loss = [&]() {
      Tensor4<double> yy;
      conv2d_forward<double>(x, k, b, 3, 3, pad, yy);
      return project(yy, r);
    };
    const double h = 1e-4;
    auto fd = [&](double& slot) {
      const double o = slot;
      slot = o + h;
      const double lp = loss();
      slot = o - h;
      const double lm = loss();
      slot = o;
      return (lp - lm) / (2 * h);
    };
    for (std::size_t i = 0; i < k.size(); ++i) CHECK(gradcheck::rel_error(dk[i], fd(k[i])) < 1e-6);
    for (std::size_t i = 0; i < b.size(); ++i) CHECK(gradcheck::rel_error(db[i], fd(b[i])) < 1e-6);
    for (std::size_t i = 0; i < x.data.size(); ++i) CHECK(gradcheck::rel_error(dx.data[i], fd(x.data[i])) < 1e-6);
  }
}

TEST_CASE("batch-norm gradients match finite differences") {
  auto x = random_tensor(3, 4, 3, 2, 9);
  auto g = randn(2, 10);
  auto be = randn(2, 11);
  Tensor4<double> y;
  BatchNormCache<double> cache;
  std::vector<double> mean, var;
  batchnorm_forward_train<double>(x, g, be, 1e-3, y, cache, mean, var);
  const auto r = randn(y.size(), 12);
  Tensor4<double> dy = y;
  dy.data = r;
  Tensor4<double> dx;
  std::vector<double> dg(2, 0.0), db(2, 0.0);
  batchnorm_backward<double>(dy, g, cache, dx, dg, db);
  auto loss = [&]() {
    Tensor4<double> yy;
    BatchNormCache<double> cc;
    std::vector<double> m, v;
    batchnorm_forward_train<double>(x, g, be, 1e-3, yy, cc, m, v);
    return project(yy, r);
  };
  const double h = 1e-4;
  auto fd = [&](double& slot) {
    const double o = slot;
    slot = o + h;
    const double lp = loss();
    slot = o - h;
    const double lm = loss();
    slot = o;
    return (lp - lm) / (2 * h);
  };
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(gradcheck::rel_error(dg[i], fd(g[i])) < 1e-6);
    CHECK(gradcheck::rel_error(db[i], fd(be[i])) < 1e-6);
  }
  for (std::size_t i = 0; i < x.data.size(); ++i) CHECK(gradcheck::rel_error(dx.data[i], fd(x.data[i])) < 1e-5);
}

TEST_CASE("batch-norm inference uses running statistics") {
  Tensor4<double> x(1, 1, 2, 1);
  x.data = {1.0, 3.0};
  std::vector<double> g{2.0}, b{0.5}, rm{1.0}, rv{4.0};
  Tensor4<double> y;
  batchnorm_forward_infer<double>(x, g, b, rm, rv, 0.0, y);
  CHECK(y.data[0] == doctest::Approx(0.5));
  CHECK(y.data[1] == doctest::Approx(2.5));
}

TEST_CASE("max-pool and relu gradients route to the winners") {
  Tensor4<double> x(1, 2, 4, 1);
  x.data = {1, 5, -2, 0, 3, 2, -1, -3};
  Tensor4<double> y;
  std::vector<int> am;
  maxpool2_forward(x, y, am);
  CHECK(y.data == std::vector<double>{5, 0});
  Tensor4<double> dy = y;
  dy.data = {1.5, -2.0};
  Tensor4<double> dx;
  maxpool2_backward(dy, am, 2, 4, dx);
  CHECK(dx.data == std::vector<double>{0, 1.5, 0, -2.0, 0, 0, 0, 0});

  Tensor4<double> r;
  relu_forward(x, r);
  Tensor4<double> dr;
  Tensor4<double> ones = x;
  std::fill(ones.data.begin(), ones.data.end(), 1.0);
  relu_backward(r, ones, dr);
  CHECK(dr.data == std::vector<double>{1, 1, 0, 0, 1, 1, 0, 0});

  Tensor4<double> tiny(1, 1, 4, 1);
  CHECK_THROWS_AS(maxpool2_forward(tiny, y, am), std::invalid_argument);
}

TEST_CASE("dense gradients match finite differences") {
  auto x = randn(3 * 4, 1);
  auto w = randn(2 * 4, 2);
  auto b = randn(2, 3);
  const auto r = randn(3 * 2, 4);
  std::vector<double> dw(w.size(), 0.0), db(2, 0.0), dx(x.size());
  dense_backward<double>(x, 3, 4, w, 2, r, dw, db, dx);
  auto loss = [&]() {
    std::vector<double> y(6);
    dense_forward<double>(x, 3, 4, w, b, 2, y);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += r[i] * y[i];
    return s;
  };
  const double h = 1e-4;
  auto fd = [&](double& slot) {
    const double o = slot;
    slot = o + h;
    const double lp = loss();
    slot = o - h;
    const double lm = loss();
    slot = o;
    return (lp - lm) / (2 * h);
  };
  for (std::size_t i = 0; i < w.size(); ++i) CHECK(gradcheck::rel_error(dw[i], fd(w[i])) < 1e-7);
  for (std::size_t i = 0; i < b.size(); ++i) CHECK(gradcheck::rel_error(db[i], fd(b[i])) < 1e-7);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(gradcheck::rel_error(dx[i], fd(x[i])) < 1e-7);
}

TEST_CASE("cross-entropy and softmax") {
  ClassProbs p{0, 0, 1, 0, 0};
  CHECK(xent_loss(2, p) == 0.0);
  ClassProbs u{0.2, 0.2, 0.2, 0.2, 0.2};
  CHECK(xent_loss(0, u) == doctest::Approx(std::log(5.0)).epsilon(1e-12));
  ClassProbs h{0.5, 0.5, 0, 0, 0};
  CHECK(xent_loss(1, h) == doctest::Approx(0.6931471805599453));
  CHECK(xent_loss(3, h) == doctest::Approx(-std::log(1e-12)));
  CHECK(xent_loss(ClassProbs{0, 1, 0, 0, 0}, h) == doctest::Approx(std::log(2.0)));
  std::vector<double> z{3, 3, 3, 3, 3};
  for (double v : softmax(z)) CHECK(v == doctest::Approx(0.2));
  std::vector<double> big{1000, 0, -1000, 5, 1};
  const auto s = softmax(big);
  CHECK(std::isfinite(s[0]));
  CHECK(s[0] == doctest::Approx(1.0));
}

TEST_CASE("Adam: analytic first step, zero gradient, non-finite guard") {
  ParamStore<double> ps;
  const auto i = ps.add("w", {1});
  ps.value(i)[0] = 1.0;
  ps.grad(i)[0] = 0.5;
  adam_step(ps, AdamConfig{});
  CHECK(ps.value(i)[0] == doctest::Approx(1.0 - 1e-3).epsilon(1e-9));

  ParamStore<double> z;
  const auto j = z.add("w", {3});
  z.value(j)[1] = 0.25;
  for (int s = 0; s < 50; ++s) adam_step(z, AdamConfig{});
  CHECK(z.values == std::vector<double>{0.0, 0.25, 0.0});

  ParamStore<float> bad;
  const auto k = bad.add("w", {2});
  bad.value(k)[0] = 3.0f;
  bad.grad(k)[1] = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(adam_step(bad, AdamConfig{}), usonic::NumericalError);
  CHECK(bad.value(k)[0] == 3.0f);
}

TEST_CASE("single conv layer parameter count") {
  ParamStore<float> ps;
  ps.add("conv.kernel", {4, 1, 3, 3});
  ps.add("conv.bias", {4});
  ps.add("bn.running_mean", {4}, false);
  CHECK(ps.trainable_count() == 40);
  CHECK(ps.grads.size() == ps.values.size());
  CHECK(ps.adam_m.size() == ps.values.size());
}
