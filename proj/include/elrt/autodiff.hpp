#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "elrt/tensor.hpp"

namespace elrt::ad {

/// Handle to a node recorded on a Tape.
struct Var {
  std::size_t index = 0;
  bool operator==(const Var&) const = default;
};

/// Identifies a trainable tensor that lives outside the tape.
enum class ParamId : std::size_t {};

/// d(loss)/d(param) for every parameter reached by backward. A missing entry
/// means the gradient is zero.
template <typename T>
class GradientSet {
 public:
  const BasicTensor<T>* find(ParamId id) const {
    auto it = grads_.find(id);
    return it == grads_.end() ? nullptr : &it->second;
  }
  BasicTensor<T> get_or_zero(ParamId id, const Shape& shape) const {
    const BasicTensor<T>* g = find(id);
    return g ? *g : BasicTensor<T>(shape);
  }
  void accumulate(ParamId id, const BasicTensor<T>& grad);

  std::size_t size() const noexcept { return grads_.size(); }
  auto begin() const { return grads_.begin(); }
  auto end() const { return grads_.end(); }

 private:
  std::map<ParamId, BasicTensor<T>> grads_;
};

/// Reverse-mode tape. Nodes are appended in evaluation order, so the node list
/// is already a topological order of the DAG. One tape per training step.
template <typename T>
class Tape {
 public:
  using TensorT = BasicTensor<T>;
  /// Accumulates input gradients (`grad_in[i] += ...`) given the output
  /// gradient. Entries of grad_in are null for inputs that need no gradient.
  using BackwardFn = std::function<void(const TensorT& grad_out, std::span<TensorT* const> grad_in)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(TensorT value);
  Var parameter(ParamId id, TensorT value);

  /// Appends an op node. Backward rules may refer back to this tape, which is
  /// why tapes are neither copyable nor movable.
  Var record(std::string_view op, std::vector<Var> inputs, TensorT value, BackwardFn backward);

  const TensorT& value(Var v) const { return node(v).value; }
  const Shape& shape(Var v) const { return node(v).value.shape(); }
  bool requires_grad(Var v) const { return node(v).requires_grad; }
  std::string_view op_name(Var v) const { return node(v).op; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Gradients of a scalar node with respect to every parameter leaf.
  GradientSet<T> backward(Var loss) const;

  /// Gradients with respect to arbitrary nodes (test hook for per-op checks).
  std::vector<std::optional<TensorT>> backward_all(Var loss) const;

 private:
  struct Node {
    std::string op;
    std::vector<Var> inputs;
    TensorT value;
    BackwardFn backward;
    std::optional<ParamId> param;
    bool requires_grad = false;
  };

  const Node& node(Var v) const;

  std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Op set. Every op validates shapes and records a backward rule.

template <typename T> Var add(Tape<T>& t, Var a, Var b);
template <typename T> Var sub(Tape<T>& t, Var a, Var b);
template <typename T> Var scale(Tape<T>& t, Var a, double factor);
/// a + c for a constant tensor c of the same shape.
template <typename T> Var add_constant(Tape<T>& t, Var a, const BasicTensor<T>& c);
template <typename T> Var square(Tape<T>& t, Var a);
template <typename T> Var relu(Tape<T>& t, Var a);
template <typename T> Var matmul(Tape<T>& t, Var a, Var b);
template <typename T> Var transpose(Tape<T>& t, Var a);
template <typename T> Var reshape(Tape<T>& t, Var a, Shape shape);
template <typename T> Var sum(Tape<T>& t, Var a);
template <typename T> Var mean(Tape<T>& t, Var a);
template <typename T> Var frobenius_sq(Tape<T>& t, Var a);

/// x[N,C_in,H,W] (*) w[C_in,C_out,K,K], zero padding.
template <typename T> Var conv2d(Tape<T>& t, Var x, Var w, std::size_t stride, std::size_t padding);

/// Running statistics owned by a batch-norm layer; updated in training mode.
template <typename T>
struct BatchNormStats {
  BasicTensor<T>* running_mean = nullptr;
  BasicTensor<T>* running_var = nullptr;
  double momentum = 0.1;
  double eps = 1e-5;
};

/// Per-channel normalization of x[N,C,H,W]. Training mode uses batch
/// statistics (biased variance) and updates the running estimates with the
/// unbiased variance; eval mode uses the running estimates.
template <typename T>
Var batch_norm(Tape<T>& t, Var x, Var gamma, Var beta, const BatchNormStats<T>& stats,
               bool training);

/// x[N,C,H,W] -> [N,C]
template <typename T> Var global_avg_pool(Tape<T>& t, Var x);

/// x[N,F], w[O,F], b[O] -> x w^T + b
template <typename T> Var linear(Tape<T>& t, Var x, Var w, Var b);

/// Parameter-free residual shortcut: spatial subsampling by `stride` and
/// symmetric zero channel padding up to out_channels.
template <typename T>
Var shortcut_pad(Tape<T>& t, Var x, std::size_t out_channels, std::size_t stride);

/// Mean softmax cross-entropy of logits[N,C] against integer labels.
template <typename T>
Var cross_entropy(Tape<T>& t, Var logits, std::span<const int> labels);

// ---------------------------------------------------------------------------
// Finite-difference gradient check (64-bit).

struct ParamCheck {
  std::size_t param = 0;
  std::size_t checked = 0;
  double max_rel_error = 0.0;
  bool pass = true;
};

struct GradCheckReport {
  std::vector<ParamCheck> params;
  double max_rel_error = 0.0;
  bool pass = true;
};

using ScalarFn = std::function<Var(Tape<double>&, std::span<const Var>)>;

/// Compares tape gradients against (f(θ+h) - f(θ-h)) / 2h element by element.
/// Tensors with more than `max_elements` entries are checked on a seeded random
/// subsample of `max_elements` entries (at least 100). Relative error uses the
/// denominator max(|analytic|, |numeric|, 1e-8).
GradCheckReport grad_check(const ScalarFn& f, const std::vector<Tensor64>& params, double step,
                           double tol, std::uint64_t seed = 0, std::size_t max_elements = 128);

}  // namespace elrt::ad
