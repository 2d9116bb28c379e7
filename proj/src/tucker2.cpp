#include "elrt/tucker2.hpp"

#include <stdexcept>

namespace elrt {

namespace {

void expect_shape(const std::string& layer, const char* what, const Shape& got, const Shape& want) {
  if (got != want) {
    throw ShapeError("tucker2 layer '" + layer + "': " + what + " has shape " + to_string(got) +
                     ", expected " + to_string(want));
  }
}

void expect_input_channels(const char* op, const Shape& x, std::size_t c_in) {
  if (x.size() != 4) throw ShapeError(std::string(op) + ": input must be N x C x H x W, got " + to_string(x));
  if (x[1] != c_in) {
    throw ShapeError(std::string(op) + ": input channel axis (dim 1) is " + std::to_string(x[1]) +
                     ", layer expects " + std::to_string(c_in));
  }
}

}  // namespace

void check_tucker_ranks(const ConvGeometry& geom, std::size_t rank1, std::size_t rank2) {
  const std::size_t max1 = geom.c_in * geom.k * geom.k;
  if (rank1 < 1 || rank1 > max1) {
    throw std::invalid_argument("tucker2: rank1 " + std::to_string(rank1) + " outside [1, " +
                                std::to_string(max1) + "]");
  }
  if (rank2 < 1 || rank2 > geom.c_out) {
    throw std::invalid_argument("tucker2: rank2 " + std::to_string(rank2) + " outside [1, " +
                                std::to_string(geom.c_out) + "]");
  }
}

std::size_t tucker2_parameter_count(std::size_t c_in, std::size_t c_out, std::size_t k,
                                    std::size_t rank1, std::size_t rank2) {
  return rank1 * c_in + rank1 * rank2 * k * k + rank2 * c_out;
}

template <typename T>
void Tucker2Conv<T>::validate() const {
  check_tucker_ranks(geom, u1.dim(0), u2.dim(0));
  expect_shape(name, "u1", u1.shape(), {rank1(), geom.c_in});
  expect_shape(name, "u2", u2.shape(), {rank2(), geom.c_out});
  expect_shape(name, "core", core.shape(), {rank1(), rank2(), geom.k, geom.k});
}

template <typename T>
DenseConv<T> init_dense_conv(std::string name, const ConvGeometry& geom, std::uint64_t seed) {
  geom.validate();
  auto w = kaiming_normal<T>({geom.c_in, geom.c_out, geom.k, geom.k}, geom.c_in * geom.k * geom.k, seed);
  return DenseConv<T>{std::move(name), geom, std::move(w)};
}

template <typename T>
Tucker2Conv<T> init_tucker2(std::string name, const ConvGeometry& geom, std::size_t rank1,
                            std::size_t rank2, std::uint64_t seed) {
  geom.validate();
  check_tucker_ranks(geom, rank1, rank2);
  const std::size_t kk = geom.k * geom.k;
  Tucker2Conv<T> layer{std::move(name), geom,
                       xavier_uniform<T>({rank1, geom.c_in}, geom.c_in, rank1, mix_seed(seed, 1)),
                       xavier_uniform<T>({rank1, rank2, geom.k, geom.k}, rank1 * kk, rank2 * kk,
                                         mix_seed(seed, 2)),
                       xavier_uniform<T>({rank2, geom.c_out}, rank2, geom.c_out, mix_seed(seed, 3))};
  return layer;
}

template <typename T>
BasicTensor<T> reconstruct_kernel(const Tucker2Conv<T>& layer) {
  layer.validate();
  const std::size_t c_in = layer.geom.c_in, c_out = layer.geom.c_out, kk = layer.geom.k * layer.geom.k;
  const std::size_t r1 = layer.rank1(), r2 = layer.rank2();
  // mid[r1, q, ij] = sum_r2 core[r1, r2, ij] * u2[r2, q]
  BasicTensor<T> mid(Shape{r1, c_out, kk});
  for (std::size_t a = 0; a < r1; ++a)
    for (std::size_t b = 0; b < r2; ++b)
      for (std::size_t q = 0; q < c_out; ++q) {
        const T u = layer.u2[b * c_out + q];
        const T* src = layer.core.raw() + (a * r2 + b) * kk;
        T* dst = mid.raw() + (a * c_out + q) * kk;
        for (std::size_t ij = 0; ij < kk; ++ij) dst[ij] += src[ij] * u;
      }
  BasicTensor<T> w(Shape{c_in, c_out, layer.geom.k, layer.geom.k});
  for (std::size_t p = 0; p < c_in; ++p)
    for (std::size_t a = 0; a < r1; ++a) {
      const T u = layer.u1[a * c_in + p];
      const T* src = mid.raw() + a * c_out * kk;
      T* dst = w.raw() + p * c_out * kk;
      for (std::size_t e = 0; e < c_out * kk; ++e) dst[e] += src[e] * u;
    }
  return w;
}

template <typename T>
BasicTensor<T> forward(const Tucker2Conv<T>& layer, const BasicTensor<T>& x) {
  layer.validate();
  expect_input_channels("tucker2 forward", x.shape(), layer.geom.c_in);
  const auto w1 = transpose(layer.u1).reshaped({layer.geom.c_in, layer.rank1(), 1, 1});
  const auto w3 = layer.u2.reshaped({layer.rank2(), layer.geom.c_out, 1, 1});
  const auto t1 = conv2d(x, w1, 1, 0);
  const auto t2 = conv2d(t1, layer.core, layer.geom.stride, layer.geom.padding);
  return conv2d(t2, w3, 1, 0);
}

template <typename T>
BasicTensor<T> forward(const DenseConv<T>& layer, const BasicTensor<T>& x) {
  expect_input_channels("dense conv forward", x.shape(), layer.geom.c_in);
  return conv2d(x, layer.w, layer.geom.stride, layer.geom.padding);
}

namespace ad {

template <typename T>
Var tucker2_conv(Tape<T>& t, Var x, Var u1, Var core, Var u2, std::size_t stride,
                 std::size_t padding) {
  const Shape s1 = t.shape(u1);
  const Shape s2 = t.shape(u2);
  if (s1.size() != 2 || s2.size() != 2) throw ShapeError("tucker2_conv: factors must be matrices");
  const Var w1 = reshape(t, transpose(t, u1), {s1[1], s1[0], 1, 1});
  const Var w3 = reshape(t, u2, {s2[0], s2[1], 1, 1});
  const Var t1 = conv2d(t, x, w1, 1, 0);
  const Var t2 = conv2d(t, t1, core, stride, padding);
  return conv2d(t, t2, w3, 1, 0);
}

}  // namespace ad

#define ELRT_INSTANTIATE(T)                                                                      \
  template struct Tucker2Conv<T>;                                                                \
  template DenseConv<T> init_dense_conv(std::string, const ConvGeometry&, std::uint64_t);         \
  template Tucker2Conv<T> init_tucker2(std::string, const ConvGeometry&, std::size_t,             \
                                       std::size_t, std::uint64_t);                               \
  template BasicTensor<T> reconstruct_kernel(const Tucker2Conv<T>&);                             \
  template BasicTensor<T> forward(const Tucker2Conv<T>&, const BasicTensor<T>&);                 \
  template BasicTensor<T> forward(const DenseConv<T>&, const BasicTensor<T>&);                   \
  template ad::Var ad::tucker2_conv(ad::Tape<T>&, ad::Var, ad::Var, ad::Var, ad::Var,            \
                                    std::size_t, std::size_t);

ELRT_INSTANTIATE(float)
ELRT_INSTANTIATE(double)
#undef ELRT_INSTANTIATE

}  // namespace elrt
