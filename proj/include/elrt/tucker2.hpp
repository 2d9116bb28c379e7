#pragma once

#include <cstdint>
#include <string>

#include "elrt/autodiff.hpp"
#include "elrt/tensor.hpp"

namespace elrt {

/// Ordinary convolution with kernel w[C_in, C_out, K, K]. No bias.
template <typename T>
struct DenseConv {
  std::string name;
  ConvGeometry geom;
  BasicTensor<T> w;

  std::size_t parameter_count() const { return geom.c_in * geom.c_out * geom.k * geom.k; }
};

/// Convolution stored in Tucker-2 form:
///   W[p,q,i,j] = sum_{r1,r2} core[r1,r2,i,j] * u1[r1,p] * u2[r2,q]
/// with u1[rank1, C_in], core[rank1, rank2, K, K], u2[rank2, C_out].
/// Stride and padding belong to the middle K x K stage.
template <typename T>
struct Tucker2Conv {
  std::string name;
  ConvGeometry geom;
  BasicTensor<T> u1;
  BasicTensor<T> core;
  BasicTensor<T> u2;

  std::size_t rank1() const { return u1.dim(0); }
  std::size_t rank2() const { return u2.dim(0); }
  std::size_t parameter_count() const { return u1.size() + core.size() + u2.size(); }

  /// Checks that the three tensors agree with geom and with each other.
  void validate() const;
};

/// 1 <= rank1 <= C_in*K*K and 1 <= rank2 <= C_out, else std::invalid_argument.
void check_tucker_ranks(const ConvGeometry& geom, std::size_t rank1, std::size_t rank2);

std::size_t tucker2_parameter_count(std::size_t c_in, std::size_t c_out, std::size_t k,
                                    std::size_t rank1, std::size_t rank2);

/// Kaiming-normal dense kernel.
template <typename T>
DenseConv<T> init_dense_conv(std::string name, const ConvGeometry& geom, std::uint64_t seed);

/// Xavier-uniform factors: u1 with fans (C_in, rank1), u2 with (rank2, C_out),
/// core with (rank1*K*K, rank2*K*K).
template <typename T>
Tucker2Conv<T> init_tucker2(std::string name, const ConvGeometry& geom, std::size_t rank1,
                            std::size_t rank2, std::uint64_t seed);

/// Dense kernel [C_in, C_out, K, K] equal to the layer's Tucker-2 product.
template <typename T>
BasicTensor<T> reconstruct_kernel(const Tucker2Conv<T>& layer);

/// Three-stage factorized convolution of x[N, C_in, H, W]: 1x1 with u1, K x K
/// with the core, 1x1 with u2. Nothing in between.
template <typename T>
BasicTensor<T> forward(const Tucker2Conv<T>& layer, const BasicTensor<T>& x);

template <typename T>
BasicTensor<T> forward(const DenseConv<T>& layer, const BasicTensor<T>& x);

namespace ad {

/// Tape version of the three-stage forward pass.
template <typename T>
Var tucker2_conv(Tape<T>& t, Var x, Var u1, Var core, Var u2, std::size_t stride,
                 std::size_t padding);

}  // namespace ad
}  // namespace elrt
