#include "elrt/decomposition.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

namespace elrt {

namespace {

void require_square(const char* op, const Tensor64& s) {
  if (s.rank() != 2 || s.dim(0) != s.dim(1)) {
    throw ShapeError(std::string(op) + ": expected a square matrix, got " + to_string(s.shape()));
  }
}

std::vector<std::size_t> descending_order(const std::vector<double>& values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });
  return order;
}

// Rows of the result are the leading `rank` left singular vectors of m.
Tensor64 leading_left_vectors(const Tensor64& m, std::size_t rank) {
  const SymmetricEigen eig = jacobi_eigen(matmul(m, transpose(m)));
  const std::size_t n = m.dim(0);
  Tensor64 u(Shape{rank, n});
  std::copy(eig.vectors.raw(), eig.vectors.raw() + rank * n, u.raw());
  return u;
}

// w[p, q, ij] -> rows indexed by p (mode 1) or q (mode 2)
Tensor64 unfold(const Tensor64& w, int mode) {
  const std::size_t c_in = w.dim(0), c_out = w.dim(1), kk = w.dim(2) * w.dim(3);
  if (mode == 1) return w.reshaped({c_in, c_out * kk});
  Tensor64 m(Shape{c_out, c_in * kk});
  for (std::size_t p = 0; p < c_in; ++p)
    for (std::size_t q = 0; q < c_out; ++q)
      std::copy(w.raw() + (p * c_out + q) * kk, w.raw() + (p * c_out + q + 1) * kk,
                m.raw() + q * c_in * kk + p * kk);
  return m;
}

// w ×1 u1 (if given) ×2 u2 (if given); factors are [rank, mode size].
Tensor64 project(const Tensor64& w, const Tensor64* u1, const Tensor64* u2) {
  const std::size_t kk = w.dim(2) * w.dim(3);
  Tensor64 cur = w;
  if (u1) {
    const std::size_t r1 = u1->dim(0), c_in = cur.dim(0), rest = cur.dim(1) * kk;
    const Tensor64 m = matmul(*u1, cur.reshaped({c_in, rest}));
    cur = m.reshaped({r1, cur.dim(1), w.dim(2), w.dim(3)});
  }
  if (u2) {
    const std::size_t r2 = u2->dim(0), a = cur.dim(0), c_out = cur.dim(1);
    Tensor64 out(Shape{a, r2, w.dim(2), w.dim(3)});
    for (std::size_t p = 0; p < a; ++p)
      for (std::size_t r = 0; r < r2; ++r)
        for (std::size_t q = 0; q < c_out; ++q) {
          const double f = (*u2)[r * c_out + q];
          const double* src = cur.raw() + (p * c_out + q) * kk;
          double* dst = out.raw() + (p * r2 + r) * kk;
          for (std::size_t e = 0; e < kk; ++e) dst[e] += f * src[e];
        }
    cur = std::move(out);
  }
  return cur;
}

}  // namespace

SymmetricEigen jacobi_eigen(const Tensor64& s, double tol, int max_sweeps) {
  require_square("jacobi_eigen", s);
  const std::size_t n = s.dim(0);
  Tensor64 a = s;
  Tensor64 v = Tensor64::identity(n);  // columns are eigenvectors while iterating
  const double total = std::sqrt(frobenius_norm_sq(s));
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) off += a(i, j) * a(i, j);
    if (std::sqrt(off) <= tol * std::max(total, 1e-300)) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = std::copysign(1.0, theta) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double sn = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - sn * akq;
          a(k, q) = sn * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - sn * aqk;
          a(q, k) = sn * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - sn * vkq;
          v(k, q) = sn * vkp + c * vkq;
        }
      }
    }
  }
  std::vector<double> diag(n);
  for (std::size_t i = 0; i < n; ++i) diag[i] = a(i, i);
  SymmetricEigen out;
  out.vectors = Tensor64(Shape{n, n});
  for (const std::size_t idx : descending_order(diag)) {
    const std::size_t row = out.values.size();
    out.values.push_back(diag[idx]);
    for (std::size_t k = 0; k < n; ++k) out.vectors(row, k) = v(k, idx);
  }
  return out;
}

ThinSvd jacobi_svd(const Tensor64& m, double tol, int max_sweeps) {
  if (m.rank() != 2) throw ShapeError("jacobi_svd: expected a matrix, got " + to_string(m.shape()));
  const bool flipped = m.dim(0) < m.dim(1);
  // Work on columns of a tall matrix a[rows, cols].
  Tensor64 a = flipped ? transpose(m) : m;
  const std::size_t rows = a.dim(0), cols = a.dim(1);
  Tensor64 v = Tensor64::identity(cols);
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p < cols; ++p) {
      for (std::size_t q = p + 1; q < cols; ++q) {
        double alpha = 0, beta = 0, gamma = 0;
        for (std::size_t k = 0; k < rows; ++k) {
          alpha += a(k, p) * a(k, p);
          beta += a(k, q) * a(k, q);
          gamma += a(k, p) * a(k, q);
        }
        if (std::abs(gamma) <= tol * std::sqrt(alpha * beta) || gamma == 0.0) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t k = 0; k < rows; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < cols; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
    if (!rotated) break;
  }
  std::vector<double> sigma(cols);
  for (std::size_t j = 0; j < cols; ++j) {
    double acc = 0;
    for (std::size_t k = 0; k < rows; ++k) acc += a(k, j) * a(k, j);
    sigma[j] = std::sqrt(acc);
  }
  ThinSvd out;
  out.u = Tensor64(Shape{rows, cols});
  out.v = Tensor64(Shape{cols, cols});
  std::size_t col = 0;
  for (const std::size_t j : descending_order(sigma)) {
    out.s.push_back(sigma[j]);
    for (std::size_t k = 0; k < rows; ++k) out.u(k, col) = sigma[j] > 0 ? a(k, j) / sigma[j] : 0.0;
    for (std::size_t k = 0; k < cols; ++k) out.v(k, col) = v(k, j);
    ++col;
  }
  if (flipped) std::swap(out.u, out.v);
  return out;
}

template <typename T>
BasicTensor<T> truncated_svd_approx(const BasicTensor<T>& m, std::size_t r) {
  if (m.rank() != 2) throw ShapeError("truncated_svd_approx: expected a matrix");
  const std::size_t a = m.dim(0), b = m.dim(1);
  if (r < 1 || r > std::min(a, b)) {
    throw std::invalid_argument("truncated_svd_approx: rank " + std::to_string(r) + " outside [1, " +
                                std::to_string(std::min(a, b)) + "]");
  }
  const ThinSvd svd = jacobi_svd(m.template cast<double>());
  Tensor64 out(Shape{a, b});
  for (std::size_t k = 0; k < r; ++k)
    for (std::size_t i = 0; i < a; ++i) {
      const double ui = svd.u(i, k) * svd.s[k];
      for (std::size_t j = 0; j < b; ++j) out(i, j) += ui * svd.v(j, k);
    }
  return out.template cast<T>();
}

template <typename T>
HooiResult<T> hooi_tucker2(const BasicTensor<T>& w, std::size_t rank1, std::size_t rank2,
                           int max_iters, double tol, std::optional<ConvGeometry> geom) {
  if (w.rank() != 4 || w.dim(2) != w.dim(3)) {
    throw ShapeError("hooi_tucker2: kernel must be C_in x C_out x K x K, got " + to_string(w.shape()));
  }
  const std::size_t c_in = w.dim(0), c_out = w.dim(1), k = w.dim(2);
  if (rank1 < 1 || rank1 > c_in || rank2 < 1 || rank2 > c_out) {
    throw std::invalid_argument("hooi_tucker2: ranks (" + std::to_string(rank1) + ", " +
                                std::to_string(rank2) + ") outside [1, " + std::to_string(c_in) +
                                "] x [1, " + std::to_string(c_out) + "]");
  }
  const ConvGeometry g = geom.value_or(ConvGeometry{c_in, c_out, k, 1, k / 2, k, k});
  if (g.c_in != c_in || g.c_out != c_out || g.k != k) {
    throw ShapeError("hooi_tucker2: geometry does not match the kernel");
  }

  const Tensor64 wd = w.template cast<double>();
  const double norm_w = std::sqrt(frobenius_norm_sq(wd));
  auto fit_of = [&](const Tensor64& core) {
    return norm_w > 0 ? std::sqrt(frobenius_norm_sq(core)) / norm_w : 1.0;
  };

  Tensor64 u1 = leading_left_vectors(unfold(wd, 1), rank1);
  Tensor64 u2 = leading_left_vectors(unfold(wd, 2), rank2);
  Tensor64 core = project(wd, &u1, &u2);
  std::vector<double> trace{fit_of(core)};
  for (int it = 0; it < max_iters; ++it) {
    u1 = leading_left_vectors(unfold(project(wd, nullptr, &u2), 1), rank1);
    u2 = leading_left_vectors(unfold(project(wd, &u1, nullptr), 2), rank2);
    core = project(wd, &u1, &u2);
    const double fit = fit_of(core);
    const double prev = trace.back();
    trace.push_back(fit);
    if (fit - prev < tol * std::max(prev, 1e-300)) break;
  }
  HooiResult<T> out{Tucker2Conv<T>{"hooi", g, u1.template cast<T>(), core.template cast<T>(),
                                   u2.template cast<T>()},
                    std::move(trace)};
  return out;
}

BudgetMatch match_budget(std::size_t c_in, std::size_t c_out, std::size_t k, std::size_t budget) {
  BudgetMatch m;
  m.budget = budget;
  const std::size_t patch = c_in * k * k;
  m.matrix_rank = std::min({budget / (c_out + patch), c_out, patch});
  // Relative ranks are compared exactly by scaling with c_in * c_out.
  struct Key {
    std::size_t min_rel, sum, imbalance, r1;
  };
  std::optional<Key> best;
  for (std::size_t r1 = 1; r1 <= c_in; ++r1) {
    for (std::size_t r2 = 1; r2 <= c_out; ++r2) {
      if (tucker2_parameter_count(c_in, c_out, k, r1, r2) > budget) break;
      const std::size_t rel1 = r1 * c_out, rel2 = r2 * c_in;
      const Key key{std::min(rel1, rel2), r1 + r2, rel1 > rel2 ? rel1 - rel2 : rel2 - rel1, r1};
      const bool better =
          !best || key.min_rel > best->min_rel ||
          (key.min_rel == best->min_rel &&
           (key.sum > best->sum ||
            (key.sum == best->sum &&
             (key.imbalance < best->imbalance || (key.imbalance == best->imbalance && key.r1 < best->r1)))));
      if (better) {
        best = key;
        m.tucker_r1 = r1;
        m.tucker_r2 = r2;
      }
    }
  }
  m.feasible = m.matrix_rank >= 1 && best.has_value();
  return m;
}

template <typename T>
std::vector<StudyRow> approx_error_study(const BasicTensor<T>& w, std::span<const std::size_t> budgets) {
  if (budgets.empty()) throw std::invalid_argument("approx_error_study: no budgets given");
  if (w.rank() != 4) throw ShapeError("approx_error_study: kernel must be 4-D");
  const std::size_t c_in = w.dim(0), c_out = w.dim(1), k = w.dim(2);
  const BasicTensor<T> mat = matricize_kernel(w);
  std::vector<StudyRow> rows;
  for (const std::size_t budget : budgets) {
    StudyRow row;
    row.match = match_budget(c_in, c_out, k, budget);
    if (!row.match.feasible) {
      row.warning = "budget " + std::to_string(budget) + " is below the smallest rank-1 cost";
      rows.push_back(row);
      continue;
    }
    const BasicTensor<T> approx = dematricize_kernel(truncated_svd_approx(mat, row.match.matrix_rank), c_in, k);
    row.matrix_mse = mse(approx, w);
    const HooiResult<T> tucker = hooi_tucker2(w, row.match.tucker_r1, row.match.tucker_r2);
    row.tucker_mse = mse(reconstruct_kernel(tucker.layer), w);
    rows.push_back(row);
  }
  return rows;
}

std::string study_csv(std::span<const StudyRow> rows) {
  std::ostringstream out;
  out.precision(10);
  out << "budget,matrix_rank,tucker_r1,tucker_r2,matrix_mse,tucker_mse\n";
  for (const StudyRow& r : rows) {
    if (!r.warning.empty()) {
      out << "# skipped: " << r.warning << '\n';
      continue;
    }
    out << r.match.budget << ',' << r.match.matrix_rank << ',' << r.match.tucker_r1 << ','
        << r.match.tucker_r2 << ',' << r.matrix_mse << ',' << r.tucker_mse << '\n';
  }
  return out.str();
}

template <typename T>
BasicTensor<T> planted_tucker_kernel(std::size_t c_in, std::size_t c_out, std::size_t k, std::size_t rank1,
                                     std::size_t rank2, double noise, std::uint64_t seed) {
  if (!(noise >= 0.0)) throw std::invalid_argument("planted_tucker_kernel: noise must be >= 0");
  const ConvGeometry geom{c_in, c_out, k, 1, k / 2, k, k};
  check_tucker_ranks(geom, rank1, rank2);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto draw = [&](Shape shape) {
    BasicTensor<T> t(std::move(shape));
    for (T& v : t.data()) v = T(gauss(rng));
    return t;
  };
  Tucker2Conv<T> planted{"planted", geom, draw({rank1, c_in}), draw({rank1, rank2, k, k}), draw({rank2, c_out})};
  BasicTensor<T> w = reconstruct_kernel(planted);
  const double rms = std::sqrt(frobenius_norm_sq(w) / double(w.size()));
  for (T& v : w.data()) v = T(double(v) / rms + noise * gauss(rng));
  return w;
}

#define ELRT_INSTANTIATE(T)                                                                   \
  template BasicTensor<T> planted_tucker_kernel(std::size_t, std::size_t, std::size_t, std::size_t, \
                                                std::size_t, double, std::uint64_t);          \
  template BasicTensor<T> truncated_svd_approx(const BasicTensor<T>&, std::size_t);           \
  template HooiResult<T> hooi_tucker2(const BasicTensor<T>&, std::size_t, std::size_t, int,   \
                                      double, std::optional<ConvGeometry>);                   \
  template std::vector<StudyRow> approx_error_study(const BasicTensor<T>&,                     \
                                                    std::span<const std::size_t>);

ELRT_INSTANTIATE(float)
ELRT_INSTANTIATE(double)
#undef ELRT_INSTANTIATE

}  // namespace elrt
