#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <variant>
#include <vector>

#include "elrt/autodiff.hpp"
#include "elrt/flops.hpp"
#include "elrt/tucker2.hpp"

namespace elrt {

// ---------------------------------------------------------------------------
// Rank configuration: `name = r1,r2` or `name = N/A`, `#` comments.

struct RankEntry {
  std::string name;
  std::optional<std::pair<std::size_t, std::size_t>> ranks;  // empty keeps the layer dense
  bool operator==(const RankEntry&) const = default;
};

struct RankConfig {
  std::vector<RankEntry> entries;  // file order

  const RankEntry* find(std::string_view name) const;
  bool empty() const { return entries.empty(); }
  bool operator==(const RankConfig&) const = default;
};

class RankConfigError : public std::invalid_argument {
 public:
  RankConfigError(std::size_t line, const std::string& what);
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

RankConfig parse_rank_config(std::string_view text);
std::string serialize_rank_config(const RankConfig& cfg);
RankConfig load_rank_config(const std::string& path);

// ---------------------------------------------------------------------------
// Models

struct ModelSpec {
  std::string arch = "resnet";  // resnet | cnn
  std::size_t depth = 20;
  double width = 1.0;
  std::size_t classes = 10;
  std::size_t in_channels = 3;
  std::size_t in_h = 32;
  std::size_t in_w = 32;

  void validate() const;
  bool operator==(const ModelSpec&) const = default;
};

/// max(1, round(base * width))
std::size_t scaled_channels(std::size_t base, double width);

template <typename T>
using ConvLayer = std::variant<DenseConv<T>, Tucker2Conv<T>>;

template <typename T>
struct BatchNorm {
  std::string name;
  BasicTensor<T> gamma, beta, running_mean, running_var;
};

template <typename T>
struct ConvBN {
  ConvLayer<T> conv;
  BatchNorm<T> bn;

  const std::string& name() const;
  const ConvGeometry& geom() const;
  bool factorized() const { return std::holds_alternative<Tucker2Conv<T>>(conv); }
};

/// Basic residual block: relu(bn2(conv2(relu(bn1(conv1(x))))) + shortcut(x)).
/// Shortcuts are parameter-free: stride subsampling plus zero channel padding.
template <typename T>
struct ResidualBlock {
  std::string name;  // layer<stage>.<block>
  ConvBN<T> c1, c2;
  std::size_t in_channels = 0, out_channels = 0, stride = 1;
};

template <typename T>
struct Linear {
  std::string name;
  BasicTensor<T> w;  // [classes, features]
  BasicTensor<T> b;  // [classes]
};

enum class TensorRole { DenseKernel, Factor, Core, BatchNormAffine, Classifier };

template <typename T>
struct NamedTensor {
  std::string name;
  BasicTensor<T>* tensor = nullptr;
  TensorRole role = TensorRole::DenseKernel;
};

/// Parameter nodes registered on a tape, keyed by tensor address.
template <typename T>
using Binding = std::unordered_map<const BasicTensor<T>*, ad::Var>;

template <typename T>
class Model {
 public:
  ModelSpec spec;
  ConvBN<T> stem;                // "conv1" / "bn1"
  std::vector<ConvBN<T>> plain;  // non-residual convolutions after the stem
  std::vector<ResidualBlock<T>> blocks;
  Linear<T> fc;

  /// Trainable tensors in a fixed order: stem, plain convs, blocks, classifier.
  std::vector<NamedTensor<T>> parameters();
  /// Batch-norm running statistics, same order.
  std::vector<NamedTensor<T>> buffers();
  /// parameters() followed by buffers().
  std::vector<NamedTensor<T>> state();

  std::size_t parameter_count();

  /// Every convolution, in forward order.
  std::vector<ConvBN<T>*> convs();
  std::vector<const ConvBN<T>*> convs() const;

  /// u1 and u2 of every Tucker-2 layer as (name, matrix).
  std::vector<std::pair<std::string, const BasicTensor<T>*>> factor_matrices() const;

  /// Every parameter as a tape parameter with ParamId equal to its index in parameters().
  Binding<T> bind(ad::Tape<T>& t);

  /// Logits [N, classes] for x [N, C, H, W]. Parameters missing from the binding enter the
  /// tape as constants. Training mode normalizes with batch statistics and updates the
  /// running estimates.
  ad::Var forward(ad::Tape<T>& t, ad::Var x, bool training, const Binding<T>& binding);

  /// Value-only inference.
  BasicTensor<T> predict(const BasicTensor<T>& x);

  /// Per-layer geometry for FLOPs accounting: every convolution plus the classifier as a
  /// 1x1 convolution on a 1x1 map.
  std::vector<LayerGeometry> flops_geometry() const;

  /// Names accepted by apply_rank_config.
  std::vector<std::string> conv_names() const;
};

/// CIFAR-style ResNet: 3x3 stem at 16*width channels, three stages of (depth-2)/6 basic
/// blocks at 16/32/64*width channels, stride 2 at stage entry, global pooling, linear head.
template <typename T>
Model<T> build_resnet_cifar(std::size_t depth, double width, std::size_t classes, std::uint64_t seed,
                            std::size_t in_channels = 3, std::size_t in_h = 32, std::size_t in_w = 32);

/// Two convolutions ("conv1" stride 1, "layer1.0.conv1" stride 2) and a linear head.
template <typename T>
Model<T> build_cnn(double width, std::size_t classes, std::uint64_t seed, std::size_t in_channels = 1,
                   std::size_t in_h = 28, std::size_t in_w = 28);

template <typename T>
Model<T> build_model(const ModelSpec& spec, std::uint64_t seed);

/// Replaces each named convolution by a freshly initialized Tucker-2 layer (or a fresh dense
/// layer for N/A). Per-layer seeds are mix_seed(seed, fnv1a(name)).
template <typename T>
void apply_rank_config(Model<T>& model, const RankConfig& cfg, std::uint64_t seed);

}  // namespace elrt
