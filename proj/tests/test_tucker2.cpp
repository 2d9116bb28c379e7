#include <cmath>

#include "doctest.h"
#include "elrt/tucker2.hpp"
#include "oracles.hpp"

using namespace elrt;

namespace {

template <typename T>
Tucker2Conv<T> random_layer(const ConvGeometry& g, std::size_t r1, std::size_t r2, std::uint64_t seed) {
  return Tucker2Conv<T>{"t", g, oracle::random_tensor<T>(Shape{r1, g.c_in}, seed),
                        oracle::random_tensor<T>(Shape{r1, r2, g.k, g.k}, seed + 1),
                        oracle::random_tensor<T>(Shape{r2, g.c_out}, seed + 2)};
}

template <typename T>
BasicTensor<T> dense_reference(const Tucker2Conv<T>& layer, const BasicTensor<T>& x) {
  const BasicTensor<T> w = reconstruct_kernel(layer);
  const std::size_t n = x.dim(0);
  const ConvGeometry& g = layer.geom;
  BasicTensor<T> y(Shape{n, g.c_out, g.h_out(), g.w_out()});
  const std::size_t per_in = g.c_in * g.h_in * g.w_in, per_out = g.c_out * g.h_out() * g.w_out();
  for (std::size_t s = 0; s < n; ++s) {
    const BasicTensor<T> xs(Shape{g.c_in, g.h_in, g.w_in},
                            std::vector<T>(x.raw() + s * per_in, x.raw() + (s + 1) * per_in));
    const BasicTensor<T> ys = conv2d_direct(xs, w, g);
    std::copy(ys.raw(), ys.raw() + per_out, y.raw() + s * per_out);
  }
  return y;
}

}  // namespace

TEST_CASE("identity factors reduce to a plain convolution") {
  const ConvGeometry g{3, 4, 3, 1, 1, 6, 6};
  const Tensor64 core = oracle::random_tensor(Shape{3, 4, 3, 3}, 1);
  Tucker2Conv<double> layer{"id", g, Tensor64::identity(3), core, Tensor64::identity(4)};
  CHECK(reconstruct_kernel(layer) == core);
  const Tensor64 x = oracle::random_tensor(Shape{1, 3, 6, 6}, 2);
  const Tensor64 ref = conv2d_direct(x.reshaped({3, 6, 6}), core, g);
  CHECK(oracle::max_abs_diff(forward(layer, x).reshaped(ref.shape()), ref) <= 1e-12);
}

TEST_CASE("rank-1 reconstruction places the core slice") {
  const ConvGeometry g{3, 2, 3, 1, 1, 4, 4};
  Tensor64 u1(Shape{1, 3}), u2(Shape{1, 2});
  u1[0] = 1;
  u2[0] = 1;
  const Tensor64 core = oracle::random_tensor(Shape{1, 1, 3, 3}, 3);
  const Tensor64 w = reconstruct_kernel(Tucker2Conv<double>{"r1", g, u1, core, u2});
  for (std::size_t p = 0; p < 3; ++p)
    for (std::size_t q = 0; q < 2; ++q)
      for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) CHECK(w(p, q, i, j) == (p == 0 && q == 0 ? core(0, 0, i, j) : 0.0));
}

TEST_CASE("reconstruction matches the quadruple-loop oracle") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const ConvGeometry g{4, 5, 3, 1, 1, 5, 5};
    const auto layer = random_layer<double>(g, 3, 2, seed * 10);
    CHECK(oracle::max_abs_diff(reconstruct_kernel(layer), oracle::naive_tucker(layer.u1, layer.core, layer.u2)) <=
          1e-13);
  }
}

TEST_CASE("factorized forward equals dense convolution of the reconstructed kernel") {
  const ConvGeometry g{3, 4, 3, 1, 1, 7, 7};
  const auto layer = random_layer<double>(g, 2, 2, 5);
  const Tensor64 x = oracle::random_tensor(Shape{2, 3, 7, 7}, 6);
  CHECK(oracle::max_abs_diff(forward(layer, x), dense_reference(layer, x)) <= 1e-10);
  const auto lf = random_layer<float>(g, 2, 2, 5);
  const Tensor xf = x.cast<float>();
  CHECK(oracle::max_abs_diff(forward(lf, xf), dense_reference(lf, xf)) <= 1e-4);
}

TEST_CASE("zero core gives zero output") {
  const ConvGeometry g{3, 4, 3, 2, 1, 6, 6};
  auto layer = random_layer<double>(g, 2, 3, 7);
  layer.core.fill(0.0);
  const Tensor64 y = forward(layer, oracle::random_tensor(Shape{2, 3, 6, 6}, 8));
  for (double v : y.data()) CHECK(v == 0.0);
}

TEST_CASE("forward is linear in its input") {
  const ConvGeometry g{3, 5, 3, 2, 1, 8, 8};
  const auto layer = random_layer<double>(g, 2, 3, 9);
  const Tensor64 x1 = oracle::random_tensor(Shape{2, 3, 8, 8}, 10);
  const Tensor64 x2 = oracle::random_tensor(Shape{2, 3, 8, 8}, 11);
  const double alpha = 0.7, beta = -1.3;
  Tensor64 mix = x1;
  for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = alpha * x1[i] + beta * x2[i];
  const Tensor64 y1 = forward(layer, x1), y2 = forward(layer, x2), ym = forward(layer, mix);
  double err = 0;
  for (std::size_t i = 0; i < ym.size(); ++i) err = std::max(err, std::abs(ym[i] - alpha * y1[i] - beta * y2[i]));
  CHECK(err <= 1e-10);
}

TEST_CASE("channel mismatch is rejected") {
  const ConvGeometry g{3, 4, 3, 1, 1, 6, 6};
  const auto layer = random_layer<double>(g, 2, 2, 12);
  CHECK_THROWS_AS(forward(layer, Tensor64(Shape{1, 2, 6, 6})), ShapeError);
}

TEST_CASE("init") {
  const ConvGeometry g{4, 6, 3, 1, 1, 8, 8};
  const auto a = init_tucker2<float>("l", g, 4, 3, 99);
  const auto b = init_tucker2<float>("l", g, 4, 3, 99);
  CHECK(a.u1 == b.u1);
  CHECK(a.core == b.core);
  CHECK(a.u2 == b.u2);
  const float bound = std::sqrt(6.0f / 8.0f);
  for (float v : a.u1.data()) CHECK(std::abs(v) <= bound);
  CHECK(a.u1.shape() == Shape{4, 4});
  CHECK(a.core.shape() == Shape{4, 3, 3, 3});
  CHECK(a.u2.shape() == Shape{3, 6});
  CHECK(a.parameter_count() == a.u1.size() + a.core.size() + a.u2.size());
  CHECK(a.parameter_count() == tucker2_parameter_count(4, 6, 3, 4, 3));
  CHECK(tucker2_parameter_count(4, 6, 3, 4, 3) == 4 * 4 + 4 * 3 * 9 + 3 * 6);

  const Tensor y = forward(a, Tensor(Shape{1, 4, 8, 8}, 1.0f));
  for (float v : y.data()) CHECK(std::isfinite(v));

  CHECK_THROWS_AS(init_tucker2<float>("l", g, 0, 3, 1), std::invalid_argument);
  CHECK_THROWS_AS(init_tucker2<float>("l", g, 37, 3, 1), std::invalid_argument);
  CHECK_THROWS_AS(init_tucker2<float>("l", g, 36, 7, 1), std::invalid_argument);
  CHECK_NOTHROW(init_tucker2<float>("l", g, 36, 6, 1));
}

TEST_CASE("factorized forward agrees with dense reference over fuzzed shapes") {
  std::mt19937_64 rng(17);
  auto pick = [&](std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  };
  for (int c = 0; c < 50; ++c) {
    ConvGeometry g{pick(1, 5), pick(1, 5), pick(1, 3), pick(1, 2), pick(0, 1), pick(3, 8), pick(3, 8)};
    const auto layer = random_layer<double>(g, pick(1, g.c_in * g.k * g.k), pick(1, g.c_out), 300 + c);
    const Tensor64 x = oracle::random_tensor(Shape{2, g.c_in, g.h_in, g.w_in}, 400 + c);
    CHECK(oracle::max_abs_diff(forward(layer, x), dense_reference(layer, x)) <= 1e-10);
  }
}
