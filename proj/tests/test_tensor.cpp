#include <cmath>

#include "doctest.h"
#include "elrt/tensor.hpp"
#include "oracles.hpp"

using namespace elrt;

TEST_CASE("tensor construction and indexing") {
  Tensor t(Shape{2, 3, 4});
  CHECK(t.size() == 24);
  t(1, 2, 3) = 5.0f;
  CHECK(t[1 * 12 + 2 * 4 + 3] == 5.0f);
  CHECK_THROWS_AS(Tensor(Shape{}), ShapeError);
  CHECK_THROWS_AS(Tensor(Shape{2, 0}), ShapeError);
  CHECK_THROWS_AS(Tensor(Shape{2, 2}, std::vector<float>(3)), ShapeError);
  CHECK_THROWS_AS(t.dim(3), ShapeError);
  CHECK_THROWS_AS(t(0, 0), ShapeError);
  CHECK(t.reshaped({4, 6}).shape() == Shape{4, 6});
  CHECK_THROWS_AS(t.reshaped({5, 5}), ShapeError);
}

TEST_CASE("conv2d_direct small cases") {
  const ConvGeometry g1{1, 1, 1, 1, 0, 1, 1};
  const Tensor y1 = conv2d_direct(Tensor(Shape{1, 1, 1}, 2.0f), Tensor(Shape{1, 1, 1, 1}, 3.0f), g1);
  CHECK(y1[0] == 6.0f);

  const ConvGeometry g2{1, 1, 3, 1, 1, 3, 3};
  const Tensor y2 = conv2d_direct(Tensor(Shape{1, 3, 3}, 1.0f), Tensor(Shape{1, 1, 3, 3}, 1.0f), g2);
  CHECK(y2(0, 1, 1) == 9.0f);
  CHECK(y2(0, 0, 0) == 4.0f);
  CHECK(y2(0, 2, 2) == 4.0f);
  CHECK(y2(0, 0, 2) == 4.0f);
}

TEST_CASE("conv2d_direct names the offending axis") {
  const ConvGeometry g{3, 4, 3, 1, 1, 8, 8};
  try {
    conv2d_direct(Tensor(Shape{2, 8, 8}), Tensor(Shape{3, 4, 3, 3}), g);
    FAIL("expected a shape error");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("input channel axis") != std::string::npos);
  }
  CHECK_THROWS_AS(conv2d_direct(Tensor(Shape{3, 8, 8}), Tensor(Shape{3, 5, 3, 3}), g), ShapeError);
}

TEST_CASE("conv2d_direct random case matches naive oracle") {
  const Tensor64 x = oracle::random_tensor(Shape{3, 8, 8}, 11);
  const Tensor64 w = oracle::random_tensor(Shape{3, 4, 3, 3}, 12);
  const ConvGeometry g{3, 4, 3, 2, 1, 8, 8};
  CHECK(conv2d_direct(x, w, g) == oracle::naive_conv(x, w, 2, 1));
}

TEST_CASE("conv kernels agree with the naive oracle over fuzzed shapes") {
  std::mt19937_64 rng(7);
  auto pick = [&](std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  };
  int cases = 0;
  while (cases < 300) {
    ConvGeometry g{pick(1, 4), pick(1, 4), pick(1, 3), pick(1, 2), pick(0, 1), pick(1, 8), pick(1, 8)};
    if (g.h_in + 2 * g.padding < g.k || g.w_in + 2 * g.padding < g.k) continue;
    ++cases;
    const std::uint64_t seed = 100 + cases;
    const Tensor64 x = oracle::random_tensor(Shape{g.c_in, g.h_in, g.w_in}, seed);
    const Tensor64 w = oracle::random_tensor(Shape{g.c_in, g.c_out, g.k, g.k}, seed + 1000);
    const Tensor64 ref = oracle::naive_conv(x, w, g.stride, g.padding);
    const Tensor64 direct = conv2d_direct(x, w, g);
    REQUIRE(direct == ref);
    CHECK(direct.dim(1) == g.h_out());
    CHECK(direct.dim(2) == g.w_out());

    const Tensor64 batched = conv2d(x.reshaped({1, g.c_in, g.h_in, g.w_in}), w, g.stride, g.padding);
    CHECK(oracle::max_abs_diff(batched.reshaped(ref.shape()), ref) <= 1e-12);

    const Tensor xf = x.cast<float>(), wf = w.cast<float>();
    CHECK(oracle::max_abs_diff(conv2d_direct(xf, wf, g).cast<double>(), ref) <= 1e-4);
  }
}

TEST_CASE("wide convolutions agree with the naive oracle per image") {
  // C_in * C_out above the narrow-layer threshold exercises the im2col + GEMM path
  std::mt19937_64 rng(11);
  auto pick = [&](std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  };
  for (int c = 0; c < 40; ++c) {
    const std::size_t n = pick(1, 3), c_in = pick(17, 24), c_out = pick(17, 24), k = pick(1, 3);
    const std::size_t stride = pick(1, 2), pad = pick(0, 1), h = pick(3, 9), w = pick(3, 9);
    const Tensor64 x = oracle::random_tensor(Shape{n, c_in, h, w}, 500 + c);
    const Tensor64 kern = oracle::random_tensor(Shape{c_in, c_out, k, k}, 900 + c);
    const Tensor64 y = conv2d(x, kern, stride, pad);
    const std::size_t per_in = c_in * h * w, per_out = y.size() / n;
    for (std::size_t i = 0; i < n; ++i) {
      const Tensor64 xi(Shape{c_in, h, w}, std::vector<double>(x.raw() + i * per_in, x.raw() + (i + 1) * per_in));
      const Tensor64 ref = oracle::naive_conv(xi, kern, stride, pad);
      const Tensor64 yi(ref.shape(), std::vector<double>(y.raw() + i * per_out, y.raw() + (i + 1) * per_out));
      CHECK(oracle::max_abs_diff(yi, ref) <= 1e-11);
    }
  }
}

TEST_CASE("conv2d gradients are adjoint to the forward map") {
  // <conv(x), dy> == <x, grad_input(dy)> == <w, grad_weight(dy)>
  struct Case {
    Shape x, w;
    std::size_t stride, pad;
  };
  const Case cases[] = {
      {{2, 3, 7, 6}, {3, 5, 3, 3}, 2, 1},    // narrow, strided
      {{3, 4, 6, 6}, {4, 3, 3, 3}, 1, 1},    // narrow
      {{2, 4, 5, 5}, {4, 6, 1, 1}, 1, 0},    // narrow pointwise
      {{2, 20, 7, 6}, {20, 18, 3, 3}, 2, 1}, // wide, strided
      {{2, 20, 5, 5}, {20, 18, 1, 1}, 1, 0}, // wide pointwise
  };
  std::uint64_t seed = 1;
  for (const Case& c : cases) {
    CAPTURE(to_string(c.w));
    const Tensor64 x = oracle::random_tensor(c.x, seed++);
    const Tensor64 w = oracle::random_tensor(c.w, seed++);
    const Tensor64 y = conv2d(x, w, c.stride, c.pad);
    const Tensor64 dy = oracle::random_tensor(y.shape(), seed++);
    double lhs = 0, rx = 0, rw = 0;
    for (std::size_t i = 0; i < y.size(); ++i) lhs += y[i] * dy[i];
    const Tensor64 gx = conv2d_grad_input(dy, w, x.shape(), c.stride, c.pad);
    const Tensor64 gw = conv2d_grad_weight(dy, x, w.shape(), c.stride, c.pad);
    for (std::size_t i = 0; i < x.size(); ++i) rx += x[i] * gx[i];
    for (std::size_t i = 0; i < w.size(); ++i) rw += w[i] * gw[i];
    CHECK(rx == doctest::Approx(lhs).epsilon(1e-12));
    CHECK(rw == doctest::Approx(lhs).epsilon(1e-12));
  }
  const Tensor64 w = oracle::random_tensor(Shape{3, 5, 3, 3}, 1);
  CHECK_THROWS_AS(conv2d_grad_input(Tensor64(Shape{2, 5, 4, 4}), w, Shape{2, 3, 7, 6}, 2, 1), ShapeError);
}

TEST_CASE("matricize_kernel") {
  CHECK(matricize_kernel(Tensor(Shape{1, 1, 1, 1}, 5.0f)) == Tensor(Shape{1, 1}, 5.0f));
  Tensor w(Shape{2, 2, 1, 1}, std::vector<float>{1, 2, 3, 4});
  const Tensor m = matricize_kernel(w);
  for (std::size_t p = 0; p < 2; ++p)
    for (std::size_t q = 0; q < 2; ++q) CHECK(m(q, p) == w(p, q, 0, 0));
  const Tensor64 r = oracle::random_tensor(Shape{3, 4, 3, 3}, 5);
  const Tensor64 rm = matricize_kernel(r);
  CHECK(rm.shape() == Shape{4, 27});
  CHECK(dematricize_kernel(rm, 3, 3) == r);
  CHECK_THROWS_AS(matricize_kernel(Tensor(Shape{2, 2})), ShapeError);
  CHECK_THROWS_AS(dematricize_kernel(rm, 2, 3), ShapeError);
}

TEST_CASE("mse") {
  const Tensor a(Shape{2}, std::vector<float>{1, 1});
  const Tensor b(Shape{2}, std::vector<float>{0, 2});
  CHECK(mse(a, a) == 0.0);
  CHECK(mse(a, b) == 1.0);
  CHECK(mse(b, a) == mse(a, b));
  CHECK_THROWS_AS(mse(a, Tensor(Shape{3})), ShapeError);
  const Tensor64 x = oracle::random_tensor(Shape{4, 5, 6}, 21);
  const Tensor64 y = oracle::random_tensor(Shape{4, 5, 6}, 22);
  CHECK(std::abs(mse(x, y) - oracle::naive_mse(x, y)) <= 1e-12);
  CHECK(mse(x, y) == mse(y, x));
}

TEST_CASE("matmul and transpose") {
  const Tensor64 a = oracle::random_tensor(Shape{3, 4}, 1);
  const Tensor64 b = oracle::random_tensor(Shape{4, 2}, 2);
  const Tensor64 c = matmul(a, b);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 2; ++j) {
      double acc = 0;
      for (std::size_t k = 0; k < 4; ++k) acc += a(i, k) * b(k, j);
      CHECK(c(i, j) == doctest::Approx(acc).epsilon(1e-14));
    }
  CHECK(transpose(transpose(a)) == a);
  CHECK(transpose(a)(2, 1) == a(1, 2));
  CHECK_THROWS_AS(matmul(a, a), ShapeError);
}

TEST_CASE("xavier_uniform") {
  const Tensor t = xavier_uniform<float>(Shape{100000}, 3, 3, 42);
  double sum = 0, sq = 0;
  for (float v : t.data()) {
    REQUIRE(v >= -1.0f);
    REQUIRE(v <= 1.0f);
    sum += v;
    sq += double(v) * v;
  }
  const double n = double(t.size());
  const double var = sq / n - (sum / n) * (sum / n);
  CHECK(std::abs(var - 1.0 / 3.0) <= 0.05 / 3.0);
  CHECK(xavier_uniform<float>(Shape{7, 3}, 3, 3, 42) == xavier_uniform<float>(Shape{7, 3}, 3, 3, 42));
  CHECK(xavier_uniform<float>(Shape{7, 3}, 3, 3, 42) != xavier_uniform<float>(Shape{7, 3}, 3, 3, 43));
  CHECK_THROWS(xavier_uniform<float>(Shape{2}, 0, 3, 1));
  CHECK_THROWS(xavier_uniform<float>(Shape{2}, 3, 0, 1));
}

TEST_CASE("geometry") {
  CHECK(conv_output_extent(32, 3, 1, 1) == 32);
  CHECK(conv_output_extent(32, 3, 2, 1) == 16);
  CHECK(conv_output_extent(4, 2, 1, 0) == 3);
  CHECK_THROWS_AS(conv_output_extent(1, 3, 1, 0), ShapeError);
  CHECK_THROWS_AS(conv_output_extent(4, 3, 0, 0), ShapeError);
}
