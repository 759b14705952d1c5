#include <doctest.h>

#include <cmath>
#include <limits>

#include "convreuse/tensor.hpp"
#include "oracles.hpp"

using namespace convreuse;

namespace {

template <typename T>
FeatureMap<T> random_map(int c, int rows, int cols, Rng& rng) {
  FeatureMap<T> m(c, rows, cols);
  for (auto& v : m.data()) v = static_cast<T>(rng.uniform(-1, 1));
  return m;
}

}  // namespace

TEST_CASE_TEMPLATE("conv2d agrees with a direct loop", T, float, double) {
  Rng rng(21);
  const double tol = std::is_same_v<T, float> ? 1e-5 : 1e-12;
  for (int trial = 0; trial < 60; ++trial) {
    const int k = 1 + 2 * rng.below(3);
    const int s = 1 + rng.below(2);
    const int p = rng.below(k);
    const int in_c = 1 + rng.below(3), out_c = 1 + rng.below(4);
    const int rows = k + rng.below(10), cols = k + rng.below(10);
    const ConvGeometry g(k, s, p, rows, cols);
    const auto in = random_map<T>(in_c, rows, cols, rng);
    const auto w = random_conv_weights<T>(out_c, in_c, k, rng);
    const auto out = conv2d(in, w, g);
    REQUIRE(out.channels() == out_c);
    REQUIRE(out.dims() == g.out_dims());
    const auto ref = oracle::naive_conv(in, w, s, p, g.out_rows(), g.out_cols());
    for (std::size_t i = 0; i < ref.size(); ++i) {
      CHECK(std::abs(double(out.data()[i]) - double(ref[i])) <= tol * (1 + std::abs(double(ref[i]))));
    }
  }
}

TEST_CASE("hand-computed 3x3 convolution") {
  FeatureMap<double> in(1, 3, 3);
  for (int i = 0; i < 9; ++i) in.data()[i] = i + 1;  // 1..9
  ConvWeights<double> w(1, 1, 3);
  for (auto& v : w.weights) v = 1;
  w.bias[0] = 0.5;
  const auto out = conv2d(in, w, ConvGeometry::same(3, 3, 3));
  CHECK(out.at(0, 1, 1) == 45.5);
  CHECK(out.at(0, 0, 0) == 1 + 2 + 4 + 5 + 0.5);
  CHECK(out.at(0, 2, 2) == 5 + 6 + 8 + 9 + 0.5);
}

TEST_CASE_TEMPLATE("region conv is bitwise equal to the full slice", T, float, double) {
  Rng rng(22);
  for (int trial = 0; trial < 200; ++trial) {
    const int k = 1 + 2 * rng.below(3);
    const int s = 1 + rng.below(2);
    const int p = rng.below(k);
    const int in_c = 1 + rng.below(3), out_c = 1 + rng.below(4);
    const int rows = k + rng.below(14), cols = k + rng.below(14);
    const ConvGeometry g(k, s, p, rows, cols);
    const auto in = random_map<T>(in_c, rows, cols, rng);
    const auto w = random_conv_weights<T>(out_c, in_c, k, rng);
    const auto full = conv2d(in, w, g);
    const int y0 = rng.below(g.out_rows()), x0 = rng.below(g.out_cols());
    const Rect r{y0, x0, y0 + rng.below(g.out_rows() - y0), x0 + rng.below(g.out_cols() - x0)};

    const auto patch = conv2d_region(in, w, g, r);
    REQUIRE(patch.dims() == Dims{r.height(), r.width()});
    bool same = true;
    for (int c = 0; c < out_c; ++c) {
      for (int y = r.row0; y <= r.row1; ++y) {
        same = same && std::memcmp(patch.row_ptr(c, y - r.row0), &full.at(c, y, r.col0), sizeof(T) * r.width()) == 0;
      }
    }
    CHECK(same);

    FeatureMap<T> into(out_c, g.out_rows(), g.out_cols(), T(7));
    conv2d_region_into(in, w, g, r, into);
    for (int c = 0; c < out_c; ++c) {
      for (int y = 0; y < g.out_rows(); ++y) {
        for (int x = 0; x < g.out_cols(); ++x) {
          const T expect = r.contains(y, x) ? full.at(c, y, x) : T(7);
          if (std::memcmp(&into.at(c, y, x), &expect, sizeof(T)) != 0) same = false;
        }
      }
    }
    CHECK(same);
  }
}

TEST_CASE("conv shape checks") {
  const FeatureMap<float> in(2, 5, 5);
  const ConvWeights<float> w(3, 1, 3);
  CHECK_THROWS_AS(conv2d(in, w, ConvGeometry::same(3, 5, 5)), ShapeError);
  const ConvWeights<float> w2(3, 2, 3);
  CHECK_THROWS_AS(conv2d(in, w2, ConvGeometry::same(3, 6, 5)), ShapeError);
  CHECK_THROWS_AS(conv2d_region(in, w2, ConvGeometry::same(3, 5, 5), Rect{0, 0, 5, 0}), BoundsError);
}

TEST_CASE("relu") {
  FeatureMap<float> m(1, 2, 3);
  const float vals[] = {-1.f, 0.f, 2.f, -0.f, 3.5f, -7.f};
  std::copy(std::begin(vals), std::end(vals), m.data().begin());
  const auto r = relu(m);
  const float expect[] = {0.f, 0.f, 2.f, 0.f, 3.5f, 0.f};
  for (int i = 0; i < 6; ++i) CHECK(r.data()[i] == expect[i]);
  CHECK_FALSE(std::signbit(r.data()[3]));

  FeatureMap<float> part = m;
  relu_region(part, Rect{0, 0, 0, 1});
  CHECK(part.data()[0] == 0.f);
  CHECK(part.data()[5] == -7.f);
}

TEST_CASE_TEMPLATE("dense agrees with a direct loop", T, float, double) {
  Rng rng(23);
  const auto w = random_dense_weights<T>(37, 5, rng);
  std::vector<T> x(37);
  for (auto& v : x) v = static_cast<T>(rng.uniform(-2, 2));
  const auto y = dense<T>(x, w);
  REQUIRE(y.size() == 5);
  for (int o = 0; o < 5; ++o) {
    long double acc = w.bias[o];
    for (int i = 0; i < 37; ++i) acc += static_cast<long double>(w.w(o, i)) * x[i];
    CHECK(std::abs(double(y[o]) - double(acc)) <= 1e-5);
  }
  CHECK_THROWS_AS(dense<T>(std::span<const T>(x).first(36), w), ShapeError);
}

TEST_CASE("softmax") {
  const std::vector<double> l{1.0, 2.0, 3.0};
  const auto p = softmax<double>(l);
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  CHECK(p[0] == doctest::Approx(std::exp(1.0) / z).epsilon(1e-14));
  CHECK(p[2] == doctest::Approx(std::exp(3.0) / z).epsilon(1e-14));
  CHECK(p[0] + p[1] + p[2] == doctest::Approx(1.0).epsilon(1e-15));

  const std::vector<float> big{1000.f, 1000.f, -1000.f};
  const auto q = softmax<float>(big);
  CHECK(q[0] == doctest::Approx(0.5));
  CHECK(q[1] == doctest::Approx(0.5));
  CHECK(q[2] == 0.f);
  for (float v : q) CHECK(std::isfinite(v));
}

TEST_CASE("weight init stays inside the fan-in bound and is seed-reproducible") {
  Rng a(5), b(5);
  const auto w1 = random_conv_weights<float>(4, 3, 5, a);
  const auto w2 = random_conv_weights<float>(4, 3, 5, b);
  CHECK(bitwise_equal<float>(w1.weights, w2.weights));
  const double bound = 1.0 / std::sqrt(3.0 * 25);
  for (float v : w1.weights) CHECK(std::abs(v) <= bound);
  for (float v : w1.bias) CHECK(std::abs(v) <= bound);

  Rng c(5);
  const auto wd = random_conv_weights<double>(4, 3, 5, c);
  for (std::size_t i = 0; i < wd.weights.size(); ++i) CHECK(float(wd.weights[i]) == w1.weights[i]);
}
