#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "elrt/autodiff.hpp"
#include "elrt/data.hpp"
#include "elrt/model.hpp"
#include "elrt/ortho_reg.hpp"

namespace elrt {

struct TrainConfig {
  std::size_t batch_size = 128;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double base_lr = 0.1;
  std::size_t epochs = 30;
  double lambda_d = 1e-3;
  RegConfig reg;
  std::uint64_t seed = 0;
  bool augment = false;          // pad-4 crop + flip
  bool bn_weight_decay = true;   // weight decay on batch-norm affine parameters

  void validate() const;
  /// Canonical one-line rendering of every field; stable across runs.
  std::string describe() const;
  /// 16 hex digits of fnv1a(describe()).
  std::string digest() const;
};

/// Raised when a gradient is NaN or infinite; the message names the tensor.
class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double lr = 0.0;
  double train_loss = 0.0;   // mean total loss over the epoch's batches
  double reg_loss = 0.0;     // mean lambda_d-weighted regularizer term
  double test_acc = 0.0;
  double residual = 0.0;         // mean ||a^T a - I||_F / rows over factor matrices
  double excess_residual = 0.0;  // mean excess_orthogonality_residual
  bool operator==(const EpochRecord&) const = default;
};

struct Metrics {
  double initial_residual = 0.0;
  double initial_excess_residual = 0.0;
  std::vector<EpochRecord> epochs;

  /// Header: epoch,lr,train_loss,reg_loss,test_acc,mean_residual,excess_residual
  std::string to_csv() const;
  /// One JSON object per epoch, same keys.
  std::string to_jsonl() const;
  bool operator==(const Metrics&) const = default;
};

/// Momentum buffers keyed by parameter name.
template <typename T>
struct OptimizerState {
  std::map<std::string, BasicTensor<T>> velocity;
};

struct LossTerms {
  ad::Var total, ce, reg;
};

/// Mean cross-entropy plus lambda_d * sum over Tucker-2 layers of R(u1) + R(u2). Factors
/// missing from the binding enter as constants. With lambda_d = 0 or reg = none, total is
/// the cross-entropy node itself and reg is a constant zero.
template <typename T>
LossTerms total_loss(ad::Tape<T>& t, Model<T>& model, const Binding<T>& binding, ad::Var x,
                     std::span<const int> labels, const TrainConfig& cfg, bool training = true);

/// v <- momentum * v + g + wd * theta; theta <- theta - lr * v. Gradients are keyed by the
/// index into params. Every gradient is checked for finiteness before anything is updated.
template <typename T>
void sgd_step(const std::vector<NamedTensor<T>>& params, const ad::GradientSet<T>& grads,
              OptimizerState<T>& state, double lr, const TrainConfig& cfg);

/// base * 0.5 * (1 + cos(pi * t / T)) for 0 <= t < T.
double cosine_lr(std::size_t t, std::size_t total, double base);

/// Epoch-e sample order: Fisher-Yates on mt19937_64(mix_seed(seed, e)).
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch);

/// Means over every factor matrix (0 when the model has none).
template <typename T>
double mean_residual(const Model<T>& model);
template <typename T>
double mean_excess_residual(const Model<T>& model);

/// Row-wise argmax, lowest index on ties.
template <typename T>
std::vector<int> argmax_rows(const BasicTensor<T>& logits);

/// Top-1 accuracy in eval mode.
double evaluate(Model<float>& model, const Dataset& data, std::size_t batch_size = 256);

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Runs epochs [first_epoch, cfg.epochs). The model keeps its structure throughout.
Metrics train(Model<float>& model, const Dataset& train_set, const Dataset& test_set, const TrainConfig& cfg,
              OptimizerState<float>& state, std::size_t first_epoch = 0, const EpochCallback& on_epoch = {});

struct AblationRun {
  RegKind kind = RegKind::None;
  std::uint64_t seed = 0;
  Metrics metrics;
  double final_accuracy() const;
  double final_excess_residual() const;
};

/// One run per (kind, seed): a fresh model built with that seed, ranks applied, trained with
/// cfg except for reg.kind and seed.
std::vector<AblationRun> run_ablation(const ModelSpec& spec, const RankConfig& ranks, const TrainConfig& cfg,
                                      std::span<const RegKind> kinds, std::span<const std::uint64_t> seeds,
                                      const Dataset& train_set, const Dataset& test_set,
                                      const std::function<void(const AblationRun&)>& on_run = {});

}  // namespace elrt
