#include <cmath>

#include "doctest.h"
#include "elrt/autodiff.hpp"
#include "elrt/ortho_reg.hpp"
#include "elrt/tucker2.hpp"
#include "oracles.hpp"

using namespace elrt;
using ad::Tape;
using ad::Var;

namespace {

ad::GradCheckReport check(const ad::ScalarFn& f, const std::vector<Tensor64>& params, double tol,
                          std::uint64_t seed = 0) {
  return ad::grad_check(f, params, 1e-5, tol, seed);
}

// <y, c> for a fixed random c, turning any op output into a scalar with generic upstream.
Var weighted_sum(Tape<double>& t, Var y, std::uint64_t seed) {
  const Tensor64 c = oracle::random_tensor(t.shape(y), seed + 1000);
  const std::size_t n = c.size();
  return ad::matmul(t, ad::reshape(t, y, {1, n}), t.constant(c.reshaped({n, 1})));
}

}  // namespace

TEST_CASE("basic derivatives") {
  Tape<double> t;
  const Var x = t.parameter(ad::ParamId{0}, Tensor64::scalar(3.0));
  const auto g = t.backward(ad::sum(t, ad::square(t, x)));
  CHECK((*g.find(ad::ParamId{0}))[0] == 6.0);

  Tape<double> t2;
  const Var a = t2.parameter(ad::ParamId{0}, Tensor64::identity(2));
  const auto g2 = t2.backward(ad::frobenius_sq(t2, a));
  Tensor64 two_i = Tensor64::identity(2);
  for (auto& v : two_i.data()) v *= 2;
  CHECK(*g2.find(ad::ParamId{0}) == two_i);
}

TEST_CASE("backward requires a scalar loss") {
  Tape<double> t;
  const Var a = t.parameter(ad::ParamId{0}, Tensor64(Shape{2, 2}, 1.0));
  CHECK_THROWS_AS(t.backward(a), ShapeError);
}

TEST_CASE("unreachable parameters have no gradient") {
  Tape<double> t;
  const Var a = t.parameter(ad::ParamId{0}, Tensor64(Shape{2}, 1.0));
  t.parameter(ad::ParamId{1}, Tensor64(Shape{2}, 1.0));
  const auto g = t.backward(ad::sum(t, a));
  CHECK(g.find(ad::ParamId{0}) != nullptr);
  CHECK(g.find(ad::ParamId{1}) == nullptr);
  CHECK(g.get_or_zero(ad::ParamId{1}, Shape{2}) == Tensor64(Shape{2}));
}

TEST_CASE("linear function has an exact gradient") {
  const auto f = [](Tape<double>& t, std::span<const Var> p) {
    return ad::sum(t, ad::scale(t, p[0], 3.5));
  };
  const auto r = check(f, {oracle::random_tensor(Shape{3, 4}, 1)}, 1e-10);
  CHECK(r.pass);
  CHECK(r.max_rel_error <= 1e-10);
}

TEST_CASE("primitive ops pass finite-difference checks") {
  const double tol = 1e-4;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    CAPTURE(seed);
    const Tensor64 a = oracle::random_tensor(Shape{3, 4}, seed);
    const Tensor64 b = oracle::random_tensor(Shape{3, 4}, seed + 50);
    const Tensor64 m = oracle::random_tensor(Shape{4, 2}, seed + 60);

    CHECK(check([&](auto& t, auto p) { return weighted_sum(t, ad::add(t, p[0], p[1]), seed); }, {a, b}, tol).pass);
    CHECK(check([&](auto& t, auto p) { return weighted_sum(t, ad::sub(t, p[0], p[1]), seed); }, {a, b}, tol).pass);
    CHECK(check([&](auto& t, auto p) { return weighted_sum(t, ad::square(t, p[0]), seed); }, {a}, tol).pass);
    CHECK(check([&](auto& t, auto p) { return weighted_sum(t, ad::relu(t, p[0]), seed); }, {a}, tol).pass);
    CHECK(check([&](auto& t, auto p) { return weighted_sum(t, ad::matmul(t, p[0], p[1]), seed); }, {a, m}, tol).pass);
    CHECK(check([&](auto& t, auto p) { return weighted_sum(t, ad::transpose(t, p[0]), seed); }, {a}, tol).pass);
    CHECK(check([&](auto& t, auto p) { return weighted_sum(t, ad::reshape(t, p[0], {2, 6}), seed); }, {a}, tol).pass);
    CHECK(check([&](auto& t, auto p) { return ad::mean(t, ad::square(t, p[0])); }, {a}, tol).pass);
    CHECK(check([&](auto& t, auto p) { return ad::frobenius_sq(t, p[0]); }, {a}, tol).pass);

    const Tensor64 x = oracle::random_tensor(Shape{2, 3, 5, 6}, seed + 70);
    const Tensor64 w = oracle::random_tensor(Shape{3, 4, 3, 3}, seed + 80);
    for (std::size_t stride : {1, 2})
      for (std::size_t pad : {0, 1}) {
        CHECK(check([&](auto& t, auto p) { return weighted_sum(t, ad::conv2d(t, p[0], p[1], stride, pad), seed); },
                    {x, w}, tol).pass);
      }

    CHECK(check([&](auto& t, auto p) { return weighted_sum(t, ad::global_avg_pool(t, p[0]), seed); }, {x}, tol).pass);
    CHECK(check([&](auto& t, auto p) { return weighted_sum(t, ad::shortcut_pad(t, p[0], 7, 2), seed); }, {x}, tol).pass);

    const Tensor64 feat = oracle::random_tensor(Shape{5, 4}, seed + 90);
    const Tensor64 lw = oracle::random_tensor(Shape{3, 4}, seed + 91);
    const Tensor64 lb = oracle::random_tensor(Shape{3}, seed + 92);
    CHECK(check([&](auto& t, auto p) { return weighted_sum(t, ad::linear(t, p[0], p[1], p[2]), seed); },
                {feat, lw, lb}, tol).pass);

    const std::vector<int> labels{0, 2, 1, 1, 0};
    const Tensor64 logits = oracle::random_tensor(Shape{5, 3}, seed + 93, -3, 3);
    CHECK(check([&](auto& t, auto p) { return ad::cross_entropy(t, p[0], labels); }, {logits}, tol).pass);
  }
}

TEST_CASE("batch norm gradients in training and eval mode") {
  const Tensor64 x = oracle::random_tensor(Shape{4, 3, 3, 3}, 5, -2, 2);
  const Tensor64 gamma = oracle::random_tensor(Shape{3}, 6, 0.5, 1.5);
  const Tensor64 beta = oracle::random_tensor(Shape{3}, 7);
  for (bool training : {true, false}) {
    CAPTURE(training);
    Tensor64 rm = oracle::random_tensor(Shape{3}, 8);
    Tensor64 rv = oracle::random_tensor(Shape{3}, 9, 0.5, 2.0);
    const auto f = [&](Tape<double>& t, std::span<const Var> p) {
      Tensor64 m = rm, v = rv;  // running stats stay fixed across evaluations
      return weighted_sum(t, ad::batch_norm(t, p[0], p[1], p[2], {&m, &v, 0.1, 1e-5}, training), 3);
    };
    CHECK(check(f, {x, gamma, beta}, 1e-4).pass);
  }
}

TEST_CASE("batch norm forward and running statistics") {
  Tensor64 x(Shape{2, 1, 1, 2}, std::vector<double>{1, 2, 3, 6});
  Tensor64 rm(Shape{1}, 0.0), rv(Shape{1}, 1.0);
  Tape<double> t;
  const Var y = ad::batch_norm(t, t.constant(x), t.constant(Tensor64(Shape{1}, 1.0)),
                               t.constant(Tensor64(Shape{1}, 0.0)), {&rm, &rv, 0.1, 0.0}, true);
  // mean 3, biased var 3.5, unbiased 14/3
  CHECK(t.value(y)[0] == doctest::Approx(-2.0 / std::sqrt(3.5)));
  CHECK(rm[0] == doctest::Approx(0.3));
  CHECK(rv[0] == doctest::Approx(0.9 + 0.1 * 14.0 / 3.0));
}

TEST_CASE("cross entropy") {
  Tape<double> t;
  const Var logits = t.constant(Tensor64(Shape{4, 10}, 0.25));
  const std::vector<int> labels{0, 3, 9, 5};
  CHECK(t.value(ad::cross_entropy(t, logits, labels))[0] == doctest::Approx(std::log(10.0)).epsilon(1e-15));
  const std::vector<int> bad{0, 3, 10, 5};
  CHECK_THROWS_AS(ad::cross_entropy(t, logits, bad), std::out_of_range);
  const std::vector<int> short_labels{0};
  CHECK_THROWS(ad::cross_entropy(t, logits, short_labels));
}

TEST_CASE("parameter used twice accumulates both contributions") {
  const Tensor64 a = oracle::random_tensor(Shape{3, 3}, 31);
  // Oracle: f(a) = sum(a) * 2 + sum(a^2), df/da = 2 + 2a, via two parameter nodes sharing one id.
  Tape<double> t;
  const Var p1 = t.parameter(ad::ParamId{0}, a);
  const Var p2 = t.parameter(ad::ParamId{0}, a);
  const Var loss = ad::add(t, ad::scale(t, ad::sum(t, p1), 2.0), ad::sum(t, ad::square(t, p2)));
  const auto g = t.backward(loss);
  const Tensor64& ga = *g.find(ad::ParamId{0});
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(ga[i] == doctest::Approx(2.0 + 2.0 * a[i]).epsilon(1e-14));

  Tape<double> t2;
  const Var q = t2.parameter(ad::ParamId{0}, a);
  const auto g2 = t2.backward(ad::sum(t2, ad::add(t2, q, q)));
  for (double v : g2.find(ad::ParamId{0})->data()) CHECK(v == 2.0);
}

TEST_CASE("zero upstream gradient gives exactly zero parameter gradients") {
  const Tensor64 x = oracle::random_tensor(Shape{2, 3, 5, 5}, 41);
  Tape<double> t;
  const Var w = t.parameter(ad::ParamId{0}, oracle::random_tensor(Shape{3, 2, 3, 3}, 42));
  const Var y = ad::relu(t, ad::conv2d(t, t.constant(x), w, 1, 1));
  const auto g = t.backward(ad::scale(t, ad::sum(t, ad::square(t, y)), 0.0));
  for (double v : g.find(ad::ParamId{0})->data()) CHECK(v == 0.0);
}

TEST_CASE("composite Tucker-2 layer with cross entropy") {
  const Tensor64 x = oracle::random_tensor(Shape{4, 3, 6, 6}, 51);
  const std::vector<int> labels{0, 1, 1, 0};
  const std::vector<Tensor64> params{
      oracle::random_tensor(Shape{2, 3}, 52), oracle::random_tensor(Shape{2, 2, 3, 3}, 53),
      oracle::random_tensor(Shape{2, 4}, 54), oracle::random_tensor(Shape{4}, 55, 0.5, 1.5),
      oracle::random_tensor(Shape{4}, 56),    oracle::random_tensor(Shape{2, 4}, 57),
      oracle::random_tensor(Shape{2}, 58)};
  const auto f = [&](Tape<double>& t, std::span<const Var> p) {
    Tensor64 rm(Shape{4}), rv(Shape{4}, 1.0);
    Var h = ad::tucker2_conv(t, t.constant(x), p[0], p[1], p[2], 2, 1);
    h = ad::relu(t, ad::batch_norm(t, h, p[3], p[4], {&rm, &rv, 0.1, 1e-5}, true));
    const Var logits = ad::linear(t, ad::global_avg_pool(t, h), p[5], p[6]);
    return ad::cross_entropy(t, logits, labels);
  };
  const auto r = check(f, params, 1e-4);
  for (const auto& pc : r.params) {
    CAPTURE(pc.param);
    CHECK(pc.max_rel_error <= 1e-4);
  }
  CHECK(r.pass);
}

TEST_CASE("regularizer gradients") {
  const Tensor64 a = oracle::random_tensor(Shape{4, 6}, 61);
  RegConfig srip_cfg{RegKind::SRIP, 1.0, 200, 1e-14, 0};
  CHECK(check([](auto& t, auto p) { return ad::dso(t, p[0], 1.0); }, {a}, 1e-4).pass);
  CHECK(check([](auto& t, auto p) { return ad::so(t, p[0], 1.0); }, {a}, 1e-4).pass);
  CHECK(check([&](auto& t, auto p) { return ad::regularizer(t, p[0], srip_cfg); }, {a}, 1e-3).pass);
  CHECK(check([](auto& t, auto p) { return ad::mc(t, p[0], 1.0); }, {a}, 1e-3).pass);
}
