#include "elrt/ortho_reg.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

namespace elrt {

std::string_view to_string(RegKind kind) {
  switch (kind) {
    case RegKind::None: return "none";
    case RegKind::SO: return "so";
    case RegKind::DSO: return "dso";
    case RegKind::MC: return "mc";
    case RegKind::SRIP: return "srip";
  }
  return "none";
}

RegKind parse_reg_kind(std::string_view text) {
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  for (RegKind k : {RegKind::None, RegKind::SO, RegKind::DSO, RegKind::MC, RegKind::SRIP}) {
    if (lower == to_string(k)) return k;
  }
  throw std::invalid_argument("unknown regularizer '" + std::string(text) +
                              "' (expected none, so, dso, mc or srip)");
}

void RegConfig::validate() const {
  if (!(rho >= 0.0)) throw std::invalid_argument("regularizer: rho must be non-negative");
  if (power_iters < 1) throw std::invalid_argument("regularizer: power_iters must be at least 1");
  if (!(power_tol >= 0.0)) throw std::invalid_argument("regularizer: power_tol must be non-negative");
}

namespace {

void require_matrix(const char* op, const Shape& s) {
  if (s.size() != 2) throw ShapeError(std::string(op) + ": expected a 2-D matrix, got " + to_string(s));
}

template <typename T>
BasicTensor<T> gram_minus_identity(const BasicTensor<T>& a, bool outer) {
  const BasicTensor<T> at = transpose(a);
  BasicTensor<T> g = outer ? matmul(a, at) : matmul(at, a);
  const std::size_t n = g.dim(0);
  for (std::size_t i = 0; i < n; ++i) g[i * n + i] -= T(1);
  return g;
}

double max_abs_row_sum_value(const Tensor64& r) {
  const std::size_t rows = r.dim(0), cols = r.dim(1);
  double best = 0.0;
  for (std::size_t i = 0; i < rows; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < cols; ++j) s += std::abs(r[i * cols + j]);
    best = std::max(best, s);
  }
  return best;
}

// Power iteration record: v[k] are the unit iterates, norms[k] = ||S v[k]||,
// and the estimate is the Rayleigh quotient of the last iterate.
template <typename T>
struct PowerTrace {
  std::vector<std::vector<T>> v;
  std::vector<T> norms;
  T rayleigh = 0;
};

template <typename T>
std::vector<T> matvec(const BasicTensor<T>& s, const std::vector<T>& v) {
  const std::size_t n = v.size();
  std::vector<T> w(n, T(0));
  for (std::size_t i = 0; i < n; ++i) {
    T acc = 0;
    for (std::size_t j = 0; j < n; ++j) acc += s[i * n + j] * v[j];
    w[i] = acc;
  }
  return w;
}

template <typename T>
T dot(const std::vector<T>& a, const std::vector<T>& b) {
  T acc = 0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

template <typename T>
PowerTrace<T> power_iterate(const BasicTensor<T>& s, int iters, double tol, std::uint64_t seed) {
  require_matrix("spectral_norm_power", s.shape());
  const std::size_t n = s.dim(0);
  if (s.dim(1) != n) throw ShapeError("spectral_norm_power: matrix must be square, got " + to_string(s.shape()));
  if (iters < 1) throw std::invalid_argument("spectral_norm_power: iters must be at least 1");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> start(n);
  double norm0 = 0.0;
  for (double& x : start) {
    x = normal(rng);
    norm0 += x * x;
  }
  norm0 = std::sqrt(norm0);
  PowerTrace<T> trace;
  trace.v.emplace_back(n);
  for (std::size_t i = 0; i < n; ++i) trace.v[0][i] = static_cast<T>(start[i] / norm0);

  T previous = 0;
  for (int k = 0; k < iters; ++k) {
    const std::vector<T>& v = trace.v.back();
    std::vector<T> w = matvec(s, v);
    const T rq = dot(v, w);
    trace.rayleigh = rq;
    if (k > 0 && std::abs(static_cast<double>(rq - previous)) <= tol) break;
    previous = rq;
    if (k + 1 == iters) break;
    const T nrm = std::sqrt(dot(w, w));
    if (nrm == T(0)) break;
    for (T& x : w) x /= nrm;
    trace.norms.push_back(nrm);
    trace.v.push_back(std::move(w));
  }
  return trace;
}

}  // namespace

template <typename T>
BasicTensor<T> residual(const BasicTensor<T>& a) {
  require_matrix("residual", a.shape());
  return gram_minus_identity(a, false);
}

template <typename T>
double so(const BasicTensor<T>& a, double rho) {
  require_matrix("so", a.shape());
  const auto ad = a.template cast<double>();
  const double phi = static_cast<double>(a.dim(0));
  return rho / (phi * phi) * frobenius_norm_sq(gram_minus_identity(ad, false));
}

template <typename T>
double dso(const BasicTensor<T>& a, double rho) {
  require_matrix("dso", a.shape());
  const auto ad = a.template cast<double>();
  const double phi = static_cast<double>(a.dim(0));
  return rho / (phi * phi) *
         (frobenius_norm_sq(gram_minus_identity(ad, false)) + frobenius_norm_sq(gram_minus_identity(ad, true)));
}

template <typename T>
double mc(const BasicTensor<T>& a, double rho) {
  require_matrix("mc", a.shape());
  return rho * max_abs_row_sum_value(gram_minus_identity(a.template cast<double>(), false));
}

template <typename T>
double spectral_norm_power(const BasicTensor<T>& s, int iters, double tol, std::uint64_t seed) {
  const Tensor64 sd = s.template cast<double>();
  require_matrix("spectral_norm_power", sd.shape());
  const std::size_t n = sd.dim(0);
  if (sd.dim(1) != n) throw ShapeError("spectral_norm_power: matrix must be square");
  double scale = 1.0;
  for (const double x : sd.data()) scale = std::max(scale, std::abs(x));
  const double sym_tol = std::is_same_v<T, float> ? 1e-5 : 1e-8;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (std::abs(sd[i * n + j] - sd[j * n + i]) > sym_tol * scale) {
        throw std::invalid_argument("spectral_norm_power: matrix is not symmetric");
      }
  return std::abs(power_iterate(sd, iters, tol, seed).rayleigh);
}

template <typename T>
double srip(const BasicTensor<T>& a, double rho, int iters, double tol, std::uint64_t seed) {
  require_matrix("srip", a.shape());
  return rho * spectral_norm_power(gram_minus_identity(a.template cast<double>(), false), iters, tol, seed);
}

template <typename T>
double regularizer(const BasicTensor<T>& a, const RegConfig& cfg) {
  switch (cfg.kind) {
    case RegKind::None: return 0.0;
    case RegKind::SO: return so(a, cfg.rho);
    case RegKind::DSO: return dso(a, cfg.rho);
    case RegKind::MC: return mc(a, cfg.rho);
    case RegKind::SRIP: return srip(a, cfg.rho, cfg.power_iters, cfg.power_tol, cfg.power_seed);
  }
  return 0.0;
}

template <typename T>
double orthogonality_residual(const BasicTensor<T>& a) {
  require_matrix("orthogonality_residual", a.shape());
  return std::sqrt(frobenius_norm_sq(gram_minus_identity(a.template cast<double>(), false))) /
         static_cast<double>(a.dim(0));
}

template <typename T>
double excess_orthogonality_residual(const BasicTensor<T>& a) {
  require_matrix("excess_orthogonality_residual", a.shape());
  const bool outer = a.dim(0) <= a.dim(1);
  return std::sqrt(frobenius_norm_sq(gram_minus_identity(a.template cast<double>(), outer))) /
         static_cast<double>(a.dim(0));
}

namespace ad {

template <typename T>
Var max_abs_row_sum(Tape<T>& t, Var x) {
  const BasicTensor<T>& r = t.value(x);
  require_matrix("max_abs_row_sum", r.shape());
  const std::size_t rows = r.dim(0), cols = r.dim(1);
  std::size_t arg = 0;
  T best = -1;
  for (std::size_t i = 0; i < rows; ++i) {
    T s = 0;
    for (std::size_t j = 0; j < cols; ++j) s += std::abs(r[i * cols + j]);
    if (s > best) {
      best = s;
      arg = i;
    }
  }
  return t.record("max_abs_row_sum", {x}, BasicTensor<T>::scalar(best),
                  [&t, x, arg, cols](const BasicTensor<T>& g, auto in) {
                    const BasicTensor<T>& rv = t.value(x);
                    for (std::size_t j = 0; j < cols; ++j) {
                      const T v = rv[arg * cols + j];
                      const T sign = v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0));
                      (*in[0])[arg * cols + j] += g[0] * sign;
                    }
                  });
}

template <typename T>
Var spectral_norm(Tape<T>& t, Var s, int iters, double tol, std::uint64_t seed) {
  PowerTrace<T> trace = power_iterate(t.value(s), iters, tol, seed);
  const T value = std::abs(trace.rayleigh);
  const T sign = trace.rayleigh < T(0) ? T(-1) : T(1);
  return t.record(
      "spectral_norm", {s}, BasicTensor<T>::scalar(value),
      [&t, s, trace = std::move(trace), sign](const BasicTensor<T>& g, auto in) {
        const BasicTensor<T>& sv = t.value(s);
        const std::size_t n = sv.dim(0);
        BasicTensor<T>& ds = *in[0];
        const T grho = g[0] * sign;
        const std::vector<T>& vk = trace.v.back();
        // rho = v^T S v: dS += grho v v^T, dv = grho (S + S^T) v
        std::vector<T> gv(n, T(0));
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < n; ++j) {
            ds[i * n + j] += grho * vk[i] * vk[j];
            gv[i] += grho * (sv[i * n + j] + sv[j * n + i]) * vk[j];
          }
        // v[k+1] = S v[k] / ||S v[k]||
        for (std::size_t k = trace.norms.size(); k-- > 0;) {
          const std::vector<T>& next = trace.v[k + 1];
          const std::vector<T>& cur = trace.v[k];
          const T proj = dot(next, gv);
          std::vector<T> gw(n);
          for (std::size_t i = 0; i < n; ++i) gw[i] = (gv[i] - next[i] * proj) / trace.norms[k];
          std::fill(gv.begin(), gv.end(), T(0));
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
              ds[i * n + j] += gw[i] * cur[j];
              gv[j] += sv[i * n + j] * gw[i];
            }
        }
      });
}

namespace {

template <typename T>
Var gram_residual(Tape<T>& t, Var a, bool outer) {
  const Var at = transpose(t, a);
  const Var g = outer ? matmul(t, a, at) : matmul(t, at, a);
  const std::size_t n = t.shape(g)[0];
  BasicTensor<T> neg_eye(Shape{n, n});
  for (std::size_t i = 0; i < n; ++i) neg_eye[i * n + i] = T(-1);
  return add_constant(t, g, neg_eye);
}

double rank_scale(const Shape& s) {
  const double phi = static_cast<double>(s.at(0));
  return 1.0 / (phi * phi);
}

}  // namespace

template <typename T>
Var so(Tape<T>& t, Var a, double rho) {
  require_matrix("so", t.shape(a));
  return scale(t, frobenius_sq(t, gram_residual(t, a, false)), rho * rank_scale(t.shape(a)));
}

template <typename T>
Var dso(Tape<T>& t, Var a, double rho) {
  require_matrix("dso", t.shape(a));
  const Var both = add(t, frobenius_sq(t, gram_residual(t, a, false)),
                       frobenius_sq(t, gram_residual(t, a, true)));
  return scale(t, both, rho * rank_scale(t.shape(a)));
}

template <typename T>
Var mc(Tape<T>& t, Var a, double rho) {
  require_matrix("mc", t.shape(a));
  return scale(t, max_abs_row_sum(t, gram_residual(t, a, false)), rho);
}

template <typename T>
Var srip(Tape<T>& t, Var a, double rho, int iters, double tol, std::uint64_t seed) {
  require_matrix("srip", t.shape(a));
  return scale(t, spectral_norm(t, gram_residual(t, a, false), iters, tol, seed), rho);
}

template <typename T>
Var regularizer(Tape<T>& t, Var a, const RegConfig& cfg) {
  switch (cfg.kind) {
    case RegKind::SO: return so(t, a, cfg.rho);
    case RegKind::DSO: return dso(t, a, cfg.rho);
    case RegKind::MC: return mc(t, a, cfg.rho);
    case RegKind::SRIP: return srip(t, a, cfg.rho, cfg.power_iters, cfg.power_tol, cfg.power_seed);
    case RegKind::None: break;
  }
  return t.constant(BasicTensor<T>::scalar(T(0)));
}

}  // namespace ad

#define ELRT_INSTANTIATE(T)                                                                     \
  template BasicTensor<T> residual(const BasicTensor<T>&);                                      \
  template double so(const BasicTensor<T>&, double);                                            \
  template double dso(const BasicTensor<T>&, double);                                           \
  template double mc(const BasicTensor<T>&, double);                                            \
  template double spectral_norm_power(const BasicTensor<T>&, int, double, std::uint64_t);       \
  template double srip(const BasicTensor<T>&, double, int, double, std::uint64_t);              \
  template double regularizer(const BasicTensor<T>&, const RegConfig&);                         \
  template double orthogonality_residual(const BasicTensor<T>&);                                \
  template double excess_orthogonality_residual(const BasicTensor<T>&);                         \
  template ad::Var ad::max_abs_row_sum(ad::Tape<T>&, ad::Var);                                  \
  template ad::Var ad::spectral_norm(ad::Tape<T>&, ad::Var, int, double, std::uint64_t);        \
  template ad::Var ad::so(ad::Tape<T>&, ad::Var, double);                                       \
  template ad::Var ad::dso(ad::Tape<T>&, ad::Var, double);                                      \
  template ad::Var ad::mc(ad::Tape<T>&, ad::Var, double);                                       \
  template ad::Var ad::srip(ad::Tape<T>&, ad::Var, double, int, double, std::uint64_t);         \
  template ad::Var ad::regularizer(ad::Tape<T>&, ad::Var, const RegConfig&);

ELRT_INSTANTIATE(float)
ELRT_INSTANTIATE(double)
#undef ELRT_INSTANTIATE

}  // namespace elrt
