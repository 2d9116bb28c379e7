#include "elrt/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "gemm.hpp"

namespace elrt::ad {

namespace {

template <typename T>
void add_into(BasicTensor<T>* dst, const BasicTensor<T>& src) {
  if (dst == nullptr) return;
  T* d = dst->raw();
  const T* s = src.raw();
  for (std::size_t i = 0, n = src.size(); i < n; ++i) d[i] += s[i];
}

void require_same_shape(const char* op, const Shape& a, const Shape& b) {
  if (a != b) {
    throw ShapeError(std::string(op) + ": shapes differ, " + to_string(a) + " vs " + to_string(b));
  }
}

void require_rank(const char* op, const Shape& s, std::size_t rank) {
  if (s.size() != rank) {
    throw ShapeError(std::string(op) + ": expected " + std::to_string(rank) + " dims, got " +
                     to_string(s));
  }
}

}  // namespace

template <typename T>
void GradientSet<T>::accumulate(ParamId id, const BasicTensor<T>& grad) {
  auto [it, inserted] = grads_.try_emplace(id, grad);
  if (!inserted) {
    require_same_shape("gradient", it->second.shape(), grad.shape());
    add_into(&it->second, grad);
  }
}

template <typename T>
const typename Tape<T>::Node& Tape<T>::node(Var v) const {
  if (v.index >= nodes_.size()) {
    throw std::out_of_range("tape: node " + std::to_string(v.index) + " does not exist (tape has " +
                            std::to_string(nodes_.size()) + " nodes)");
  }
  return nodes_[v.index];
}

template <typename T>
Var Tape<T>::constant(TensorT value) {
  nodes_.push_back(Node{"constant", {}, std::move(value), nullptr, std::nullopt, false});
  return Var{nodes_.size() - 1};
}

template <typename T>
Var Tape<T>::parameter(ParamId id, TensorT value) {
  nodes_.push_back(Node{"parameter", {}, std::move(value), nullptr, id, true});
  return Var{nodes_.size() - 1};
}

template <typename T>
Var Tape<T>::record(std::string_view op, std::vector<Var> inputs, TensorT value,
                    BackwardFn backward) {
  bool needs = false;
  for (const Var in : inputs) {
    // Inputs must already exist, which keeps the recorded graph acyclic.
    needs = node(in).requires_grad || needs;
  }
  nodes_.push_back(Node{std::string(op), std::move(inputs), std::move(value),
                        needs ? std::move(backward) : nullptr, std::nullopt, needs});
  return Var{nodes_.size() - 1};
}

template <typename T>
std::vector<std::optional<BasicTensor<T>>> Tape<T>::backward_all(Var loss) const {
  const Node& root = node(loss);
  if (root.value.size() != 1) {
    throw ShapeError("backward: loss must be a scalar, got shape " + to_string(root.value.shape()));
  }
  std::vector<std::optional<TensorT>> grads(nodes_.size());
  grads[loss.index] = TensorT(root.value.shape(), T(1));
  std::vector<TensorT*> slots;
  for (std::size_t i = loss.index + 1; i-- > 0;) {
    const Node& n = nodes_[i];
    if (!grads[i] || !n.backward) continue;
    slots.assign(n.inputs.size(), nullptr);
    for (std::size_t k = 0; k < n.inputs.size(); ++k) {
      const std::size_t j = n.inputs[k].index;
      if (j >= i) throw std::logic_error("backward: node " + std::to_string(i) + " has a forward edge");
      if (!nodes_[j].requires_grad) continue;
      if (!grads[j]) grads[j].emplace(nodes_[j].value.shape());
      slots[k] = &*grads[j];
    }
    n.backward(*grads[i], slots);
  }
  return grads;
}

template <typename T>
GradientSet<T> Tape<T>::backward(Var loss) const {
  auto grads = backward_all(loss);
  GradientSet<T> out;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].param && grads[i]) out.accumulate(*nodes_[i].param, *grads[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Elementwise and shape ops

template <typename T>
Var add(Tape<T>& t, Var a, Var b) {
  require_same_shape("add", t.shape(a), t.shape(b));
  BasicTensor<T> y = t.value(a);
  add_into(&y, t.value(b));
  return t.record("add", {a, b}, std::move(y), [](const BasicTensor<T>& g, auto in) {
    add_into(in[0], g);
    add_into(in[1], g);
  });
}

template <typename T>
Var sub(Tape<T>& t, Var a, Var b) {
  require_same_shape("sub", t.shape(a), t.shape(b));
  BasicTensor<T> y = t.value(a);
  const BasicTensor<T>& bv = t.value(b);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= bv[i];
  return t.record("sub", {a, b}, std::move(y), [](const BasicTensor<T>& g, auto in) {
    add_into(in[0], g);
    if (in[1]) {
      for (std::size_t i = 0; i < g.size(); ++i) (*in[1])[i] -= g[i];
    }
  });
}

template <typename T>
Var scale(Tape<T>& t, Var a, double factor) {
  const T s = static_cast<T>(factor);
  BasicTensor<T> y = t.value(a);
  for (T& v : y.data()) v *= s;
  return t.record("scale", {a}, std::move(y), [s](const BasicTensor<T>& g, auto in) {
    for (std::size_t i = 0; i < g.size(); ++i) (*in[0])[i] += s * g[i];
  });
}

template <typename T>
Var add_constant(Tape<T>& t, Var a, const BasicTensor<T>& c) {
  require_same_shape("add_constant", t.shape(a), c.shape());
  BasicTensor<T> y = t.value(a);
  add_into(&y, c);
  return t.record("add_constant", {a}, std::move(y),
                  [](const BasicTensor<T>& g, auto in) { add_into(in[0], g); });
}

template <typename T>
Var square(Tape<T>& t, Var a) {
  BasicTensor<T> y = t.value(a);
  for (T& v : y.data()) v *= v;
  return t.record("square", {a}, std::move(y), [&t, a](const BasicTensor<T>& g, auto in) {
    const BasicTensor<T>& x = t.value(a);
    for (std::size_t i = 0; i < g.size(); ++i) (*in[0])[i] += T(2) * x[i] * g[i];
  });
}

template <typename T>
Var relu(Tape<T>& t, Var a) {
  BasicTensor<T> y = t.value(a);
  for (T& v : y.data()) v = v > T(0) ? v : T(0);
  return t.record("relu", {a}, std::move(y), [&t, a](const BasicTensor<T>& g, auto in) {
    const BasicTensor<T>& x = t.value(a);
    T* d = in[0]->raw();
    for (std::size_t i = 0; i < g.size(); ++i) d[i] += x[i] > T(0) ? g[i] : T(0);
  });
}

template <typename T>
Var matmul(Tape<T>& t, Var a, Var b) {
  BasicTensor<T> y = elrt::matmul(t.value(a), t.value(b));
  return t.record("matmul", {a, b}, std::move(y), [&t, a, b](const BasicTensor<T>& g, auto in) {
    const BasicTensor<T>& av = t.value(a);
    const BasicTensor<T>& bv = t.value(b);
    const auto m = static_cast<std::ptrdiff_t>(av.dim(0));
    const auto k = static_cast<std::ptrdiff_t>(av.dim(1));
    const auto n = static_cast<std::ptrdiff_t>(bv.dim(1));
    const auto gm = detail::as_matrix(g.raw(), m, n);
    if (in[0]) {
      detail::as_matrix(in[0]->raw(), m, k).noalias() +=
          gm * detail::as_matrix(bv.raw(), k, n).transpose();
    }
    if (in[1]) {
      detail::as_matrix(in[1]->raw(), k, n).noalias() +=
          detail::as_matrix(av.raw(), m, k).transpose() * gm;
    }
  });
}

template <typename T>
Var transpose(Tape<T>& t, Var a) {
  BasicTensor<T> y = elrt::transpose(t.value(a));
  return t.record("transpose", {a}, std::move(y), [](const BasicTensor<T>& g, auto in) {
    add_into(in[0], elrt::transpose(g));
  });
}

template <typename T>
Var reshape(Tape<T>& t, Var a, Shape shape) {
  BasicTensor<T> y = t.value(a).reshaped(std::move(shape));
  return t.record("reshape", {a}, std::move(y), [](const BasicTensor<T>& g, auto in) {
    T* d = in[0]->raw();
    for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
  });
}

template <typename T>
Var sum(Tape<T>& t, Var a) {
  const BasicTensor<T>& x = t.value(a);
  T acc = 0;
  for (const T v : x.data()) acc += v;
  return t.record("sum", {a}, BasicTensor<T>::scalar(acc), [](const BasicTensor<T>& g, auto in) {
    for (T& v : in[0]->data()) v += g[0];
  });
}

template <typename T>
Var mean(Tape<T>& t, Var a) {
  const BasicTensor<T>& x = t.value(a);
  T acc = 0;
  for (const T v : x.data()) acc += v;
  const T inv = T(1) / static_cast<T>(x.size());
  return t.record("mean", {a}, BasicTensor<T>::scalar(acc * inv),
                  [inv](const BasicTensor<T>& g, auto in) {
                    for (T& v : in[0]->data()) v += g[0] * inv;
                  });
}

template <typename T>
Var frobenius_sq(Tape<T>& t, Var a) {
  const BasicTensor<T>& x = t.value(a);
  T acc = 0;
  for (const T v : x.data()) acc += v * v;
  return t.record("frobenius_sq", {a}, BasicTensor<T>::scalar(acc),
                  [&t, a](const BasicTensor<T>& g, auto in) {
                    const BasicTensor<T>& xv = t.value(a);
                    for (std::size_t i = 0; i < xv.size(); ++i) (*in[0])[i] += T(2) * xv[i] * g[0];
                  });
}

// ---------------------------------------------------------------------------
// Network ops

template <typename T>
Var conv2d(Tape<T>& t, Var x, Var w, std::size_t stride, std::size_t padding) {
  BasicTensor<T> y = elrt::conv2d(t.value(x), t.value(w), stride, padding);
  return t.record("conv2d", {x, w}, std::move(y),
                  [&t, x, w, stride, padding](const BasicTensor<T>& g, auto in) {
                    const BasicTensor<T>& xv = t.value(x);
                    const BasicTensor<T>& wv = t.value(w);
                    if (in[0]) add_into(in[0], conv2d_grad_input(g, wv, xv.shape(), stride, padding));
                    if (in[1]) add_into(in[1], conv2d_grad_weight(g, xv, wv.shape(), stride, padding));
                  });
}

template <typename T>
Var batch_norm(Tape<T>& t, Var x, Var gamma, Var beta, const BatchNormStats<T>& stats,
               bool training) {
  const BasicTensor<T>& xv = t.value(x);
  require_rank("batch_norm", xv.shape(), 4);
  const std::size_t n = xv.dim(0), c = xv.dim(1), hw = xv.dim(2) * xv.dim(3);
  if (t.value(gamma).size() != c || t.value(beta).size() != c) {
    throw ShapeError("batch_norm: affine parameters must have " + std::to_string(c) + " entries");
  }
  const std::size_t count = n * hw;
  std::vector<T> mu(c), inv_std(c);
  if (training) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      double s = 0.0;
      for (std::size_t b = 0; b < n; ++b) {
        const T* p = xv.raw() + (b * c + ch) * hw;
        for (std::size_t i = 0; i < hw; ++i) s += p[i];
      }
      const double m = s / static_cast<double>(count);
      double ss = 0.0;
      for (std::size_t b = 0; b < n; ++b) {
        const T* p = xv.raw() + (b * c + ch) * hw;
        for (std::size_t i = 0; i < hw; ++i) ss += (p[i] - m) * (p[i] - m);
      }
      const double var = ss / static_cast<double>(count);
      mu[ch] = static_cast<T>(m);
      inv_std[ch] = static_cast<T>(1.0 / std::sqrt(var + stats.eps));
      if (stats.running_mean && stats.running_var) {
        const double unbiased = count > 1 ? ss / static_cast<double>(count - 1) : var;
        T& rm = (*stats.running_mean)[ch];
        T& rv = (*stats.running_var)[ch];
        rm = static_cast<T>((1.0 - stats.momentum) * rm + stats.momentum * m);
        rv = static_cast<T>((1.0 - stats.momentum) * rv + stats.momentum * unbiased);
      }
    }
  } else {
    if (!stats.running_mean || !stats.running_var) {
      throw std::invalid_argument("batch_norm: eval mode needs running statistics");
    }
    for (std::size_t ch = 0; ch < c; ++ch) {
      mu[ch] = (*stats.running_mean)[ch];
      inv_std[ch] = static_cast<T>(1.0 / std::sqrt(static_cast<double>((*stats.running_var)[ch]) + stats.eps));
    }
  }
  const BasicTensor<T>& gv = t.value(gamma);
  const BasicTensor<T>& bv = t.value(beta);
  BasicTensor<T> y(xv.shape());
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const T* p = xv.raw() + (b * c + ch) * hw;
      T* q = y.raw() + (b * c + ch) * hw;
      const T sc = gv[ch] * inv_std[ch];
      const T sh = bv[ch] - mu[ch] * sc;
      for (std::size_t i = 0; i < hw; ++i) q[i] = p[i] * sc + sh;
    }
  }
  return t.record(
      "batch_norm", {x, gamma, beta}, std::move(y),
      [&t, x, gamma, mu = std::move(mu), inv_std = std::move(inv_std), training, n, c, hw,
       count](const BasicTensor<T>& g, auto in) {
        const BasicTensor<T>& xv = t.value(x);
        const BasicTensor<T>& gv = t.value(gamma);
        for (std::size_t ch = 0; ch < c; ++ch) {
          // sum of g and of g * xhat over the channel
          T sg = 0, sgx = 0;
          for (std::size_t b = 0; b < n; ++b) {
            const T* p = xv.raw() + (b * c + ch) * hw;
            const T* gp = g.raw() + (b * c + ch) * hw;
            for (std::size_t i = 0; i < hw; ++i) {
              sg += gp[i];
              sgx += gp[i] * (p[i] - mu[ch]) * inv_std[ch];
            }
          }
          if (in[1]) (*in[1])[ch] += sgx;
          if (in[2]) (*in[2])[ch] += sg;
          if (!in[0]) continue;
          const T scale_g = gv[ch] * inv_std[ch];
          const T inv_count = T(1) / static_cast<T>(count);
          for (std::size_t b = 0; b < n; ++b) {
            const T* p = xv.raw() + (b * c + ch) * hw;
            const T* gp = g.raw() + (b * c + ch) * hw;
            T* dp = in[0]->raw() + (b * c + ch) * hw;
            for (std::size_t i = 0; i < hw; ++i) {
              if (training) {
                const T xhat = (p[i] - mu[ch]) * inv_std[ch];
                dp[i] += scale_g * (gp[i] - inv_count * sg - xhat * inv_count * sgx);
              } else {
                dp[i] += scale_g * gp[i];
              }
            }
          }
        }
      });
}

template <typename T>
Var global_avg_pool(Tape<T>& t, Var x) {
  const BasicTensor<T>& xv = t.value(x);
  require_rank("global_avg_pool", xv.shape(), 4);
  const std::size_t n = xv.dim(0), c = xv.dim(1), hw = xv.dim(2) * xv.dim(3);
  BasicTensor<T> y(Shape{n, c});
  const T inv = T(1) / static_cast<T>(hw);
  for (std::size_t i = 0; i < n * c; ++i) {
    T acc = 0;
    const T* p = xv.raw() + i * hw;
    for (std::size_t k = 0; k < hw; ++k) acc += p[k];
    y[i] = acc * inv;
  }
  return t.record("global_avg_pool", {x}, std::move(y), [n, c, hw, inv](const BasicTensor<T>& g, auto in) {
    for (std::size_t i = 0; i < n * c; ++i) {
      T* d = in[0]->raw() + i * hw;
      const T v = g[i] * inv;
      for (std::size_t k = 0; k < hw; ++k) d[k] += v;
    }
  });
}

template <typename T>
Var linear(Tape<T>& t, Var x, Var w, Var b) {
  const BasicTensor<T>& xv = t.value(x);
  const BasicTensor<T>& wv = t.value(w);
  const BasicTensor<T>& bv = t.value(b);
  require_rank("linear", xv.shape(), 2);
  require_rank("linear", wv.shape(), 2);
  if (wv.dim(1) != xv.dim(1)) {
    throw ShapeError("linear: feature axis is " + std::to_string(xv.dim(1)) + ", weight expects " +
                     std::to_string(wv.dim(1)));
  }
  if (bv.size() != wv.dim(0)) throw ShapeError("linear: bias length must equal output features");
  const auto n = static_cast<std::ptrdiff_t>(xv.dim(0));
  const auto f = static_cast<std::ptrdiff_t>(xv.dim(1));
  const auto o = static_cast<std::ptrdiff_t>(wv.dim(0));
  BasicTensor<T> y(Shape{xv.dim(0), wv.dim(0)});
  auto ym = detail::as_matrix(y.raw(), n, o);
  ym.noalias() = detail::as_matrix(xv.raw(), n, f) * detail::as_matrix(wv.raw(), o, f).transpose();
  for (std::ptrdiff_t r = 0; r < n; ++r)
    for (std::ptrdiff_t k = 0; k < o; ++k) ym(r, k) += bv[static_cast<std::size_t>(k)];
  return t.record("linear", {x, w, b}, std::move(y), [&t, x, w, n, f, o](const BasicTensor<T>& g, auto in) {
    const auto gm = detail::as_matrix(g.raw(), n, o);
    if (in[0]) {
      detail::as_matrix(in[0]->raw(), n, f).noalias() +=
          gm * detail::as_matrix(t.value(w).raw(), o, f);
    }
    if (in[1]) {
      detail::as_matrix(in[1]->raw(), o, f).noalias() +=
          gm.transpose() * detail::as_matrix(t.value(x).raw(), n, f);
    }
    if (in[2]) {
      for (std::ptrdiff_t r = 0; r < n; ++r)
        for (std::ptrdiff_t k = 0; k < o; ++k) (*in[2])[static_cast<std::size_t>(k)] += gm(r, k);
    }
  });
}

template <typename T>
Var shortcut_pad(Tape<T>& t, Var x, std::size_t out_channels, std::size_t stride) {
  const BasicTensor<T>& xv = t.value(x);
  require_rank("shortcut_pad", xv.shape(), 4);
  const std::size_t n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  if (out_channels < c || (out_channels - c) % 2 != 0 || stride == 0) {
    throw ShapeError("shortcut_pad: cannot pad " + std::to_string(c) + " channels to " +
                     std::to_string(out_channels));
  }
  const std::size_t front = (out_channels - c) / 2;
  const std::size_t ho = (h + stride - 1) / stride, wo = (w + stride - 1) / stride;
  BasicTensor<T> y(Shape{n, out_channels, ho, wo});
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t i = 0; i < ho; ++i)
        for (std::size_t j = 0; j < wo; ++j) y(b, ch + front, i, j) = xv(b, ch, i * stride, j * stride);
  return t.record("shortcut_pad", {x}, std::move(y),
                  [n, c, ho, wo, front, stride](const BasicTensor<T>& g, auto in) {
                    for (std::size_t b = 0; b < n; ++b)
                      for (std::size_t ch = 0; ch < c; ++ch)
                        for (std::size_t i = 0; i < ho; ++i)
                          for (std::size_t j = 0; j < wo; ++j)
                            (*in[0])(b, ch, i * stride, j * stride) += g(b, ch + front, i, j);
                  });
}

template <typename T>
Var cross_entropy(Tape<T>& t, Var logits, std::span<const int> labels) {
  const BasicTensor<T>& z = t.value(logits);
  require_rank("cross_entropy", z.shape(), 2);
  const std::size_t n = z.dim(0), k = z.dim(1);
  if (labels.size() != n) {
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for batch of " +
                     std::to_string(n));
  }
  BasicTensor<T> probs(z.shape());
  double loss = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= k) {
      throw std::out_of_range("cross_entropy: label " + std::to_string(labels[r]) +
                              " outside [0, " + std::to_string(k) + ")");
    }
    const T* row = z.raw() + r * k;
    const T mx = *std::max_element(row, row + k);
    double denom = 0.0;
    for (std::size_t j = 0; j < k; ++j) denom += std::exp(static_cast<double>(row[j] - mx));
    for (std::size_t j = 0; j < k; ++j)
      probs[r * k + j] = static_cast<T>(std::exp(static_cast<double>(row[j] - mx)) / denom);
    loss += std::log(denom) - static_cast<double>(row[labels[r]] - mx);
  }
  std::vector<int> y(labels.begin(), labels.end());
  return t.record("cross_entropy", {logits},
                  BasicTensor<T>::scalar(static_cast<T>(loss / static_cast<double>(n))),
                  [probs = std::move(probs), y = std::move(y), n, k](const BasicTensor<T>& g, auto in) {
                    const T s = g[0] / static_cast<T>(n);
                    for (std::size_t r = 0; r < n; ++r) {
                      for (std::size_t j = 0; j < k; ++j) {
                        const T target = static_cast<int>(j) == y[r] ? T(1) : T(0);
                        (*in[0])[r * k + j] += s * (probs[r * k + j] - target);
                      }
                    }
                  });
}

// ---------------------------------------------------------------------------

GradCheckReport grad_check(const ScalarFn& f, const std::vector<Tensor64>& params, double step,
                           double tol, std::uint64_t seed, std::size_t max_elements) {
  std::vector<Tensor64> theta = params;
  auto evaluate = [&](GradientSet<double>* grads) {
    Tape<double> tape;
    std::vector<Var> vars;
    for (std::size_t i = 0; i < theta.size(); ++i) vars.push_back(tape.parameter(ParamId{i}, theta[i]));
    const Var out = f(tape, vars);
    if (grads) *grads = tape.backward(out);
    return tape.value(out)[0];
  };

  GradientSet<double> analytic;
  evaluate(&analytic);

  GradCheckReport report;
  std::mt19937_64 rng(seed);
  const std::size_t budget = std::max<std::size_t>(max_elements, 100);
  for (std::size_t p = 0; p < theta.size(); ++p) {
    const Tensor64 grad = analytic.get_or_zero(ParamId{p}, theta[p].shape());
    std::vector<std::size_t> idx(theta[p].size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (idx.size() > budget) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(budget);
    }
    ParamCheck check{p, idx.size(), 0.0, true};
    for (const std::size_t i : idx) {
      const double orig = theta[p][i];
      theta[p][i] = orig + step;
      const double up = evaluate(nullptr);
      theta[p][i] = orig - step;
      const double down = evaluate(nullptr);
      theta[p][i] = orig;
      const double numeric = (up - down) / (2.0 * step);
      const double denom = std::max({std::abs(grad[i]), std::abs(numeric), 1e-8});
      check.max_rel_error = std::max(check.max_rel_error, std::abs(grad[i] - numeric) / denom);
    }
    check.pass = check.max_rel_error <= tol;
    report.max_rel_error = std::max(report.max_rel_error, check.max_rel_error);
    report.pass = report.pass && check.pass;
    report.params.push_back(check);
  }
  return report;
}

#define ELRT_INSTANTIATE(T)                                                                  \
  template class GradientSet<T>;                                                             \
  template class Tape<T>;                                                                    \
  template Var add(Tape<T>&, Var, Var);                                                      \
  template Var sub(Tape<T>&, Var, Var);                                                      \
  template Var scale(Tape<T>&, Var, double);                                                 \
  template Var add_constant(Tape<T>&, Var, const BasicTensor<T>&);                           \
  template Var square(Tape<T>&, Var);                                                        \
  template Var relu(Tape<T>&, Var);                                                          \
  template Var matmul(Tape<T>&, Var, Var);                                                   \
  template Var transpose(Tape<T>&, Var);                                                     \
  template Var reshape(Tape<T>&, Var, Shape);                                                \
  template Var sum(Tape<T>&, Var);                                                           \
  template Var mean(Tape<T>&, Var);                                                          \
  template Var frobenius_sq(Tape<T>&, Var);                                                  \
  template Var conv2d(Tape<T>&, Var, Var, std::size_t, std::size_t);                         \
  template Var batch_norm(Tape<T>&, Var, Var, Var, const BatchNormStats<T>&, bool);          \
  template Var global_avg_pool(Tape<T>&, Var);                                               \
  template Var linear(Tape<T>&, Var, Var, Var);                                              \
  template Var shortcut_pad(Tape<T>&, Var, std::size_t, std::size_t);                        \
  template Var cross_entropy(Tape<T>&, Var, std::span<const int>);

ELRT_INSTANTIATE(float)
ELRT_INSTANTIATE(double)
#undef ELRT_INSTANTIATE

}  // namespace elrt::ad
