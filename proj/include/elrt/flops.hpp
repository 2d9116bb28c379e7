#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace elrt {

/// Geometry of one convolution (or of a classifier viewed as a 1x1 convolution
/// on a 1x1 map). Ranks are present for Tucker-2 layers only.
struct LayerGeometry {
  std::string name;
  std::size_t d = 1;  // kernel size
  std::size_t s = 1;  // input channels
  std::size_t t = 1;  // output channels
  std::size_t h_out = 1;
  std::size_t w_out = 1;
  std::optional<std::size_t> r1;
  std::optional<std::size_t> r2;

  bool factorized() const { return r1.has_value(); }
  void validate() const;
};

/// Multiply-add counts.
struct LayerFlops {
  std::uint64_t dense = 0;       // D^2 S T H' W'
  std::uint64_t factorized = 0;  // S R1 H'W' + D^2 R1 R2 H'W' + T R2 H'W', or dense without ranks
};

LayerFlops layer_flops(const LayerGeometry& g);

/// D^2 S T versus S R1 + D^2 R1 R2 + T R2.
std::uint64_t layer_dense_params(const LayerGeometry& g);
std::uint64_t layer_params(const LayerGeometry& g);

struct FlopsRow {
  LayerGeometry geom;
  LayerFlops flops;
  std::uint64_t dense_params = 0;
  std::uint64_t params = 0;
};

struct FlopsReport {
  std::vector<FlopsRow> layers;
  std::uint64_t dense_total = 0;
  std::uint64_t factorized_total = 0;
  std::uint64_t dense_params = 0;
  std::uint64_t params = 0;
  double inference_reduction = 1.0;  // dense_total / factorized_total
  double param_reduction = 1.0;
  std::string training_method = "elrt";
  double training_reduction = 1.0;

  std::string to_json() const;
  std::string to_table() const;
};

/// Aggregates all layers; training_reduction is filled for the ELRT method.
FlopsReport model_reduction(std::span<const LayerGeometry> layers);

enum class TrainingMethod { Dense, Pruning, LowRankCompression, GrowEfficient, SparseBackward, ELRT };

/// dense|pruning|lowrank-comp|growefficient|backsparse|elrt
TrainingMethod parse_training_method(std::string_view text);
std::string_view to_string(TrainingMethod m);

/// Training-cost reduction with the backward pass costed at twice the forward.
///   dense          3fD / 3fD
///   pruning        3fD T / (3fD T + 3fS K)
///   lowrank-comp   3fD T / (3fD T + 3fL K)
///   growefficient  3fD / (fS + 2fD)
///   backsparse     3fD / (4fS)
///   elrt           fD / fL
/// f_reduced is fS or fL. Pruning and low-rank compression need both epoch counts.
double training_reduction(TrainingMethod method, double f_dense, double f_reduced,
                          std::optional<double> pretrain_epochs = std::nullopt,
                          std::optional<double> finetune_epochs = std::nullopt);

}  // namespace elrt
