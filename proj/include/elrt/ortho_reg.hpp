#pragma once

#include <cstdint>
#include <string_view>

#include "elrt/autodiff.hpp"
#include "elrt/tensor.hpp"

namespace elrt {

enum class RegKind { None, SO, DSO, MC, SRIP };

std::string_view to_string(RegKind kind);
/// Accepts none|so|dso|mc|srip (case-insensitive).
RegKind parse_reg_kind(std::string_view text);

struct RegConfig {
  RegKind kind = RegKind::DSO;
  double rho = 1.0;
  int power_iters = 20;
  double power_tol = 1e-6;
  std::uint64_t power_seed = 0;

  void validate() const;
};

/// a^T a - I for a 2-D matrix a.
template <typename T>
BasicTensor<T> residual(const BasicTensor<T>& a);

/// (rho / rows^2) * ||a^T a - I||_F^2
template <typename T>
double so(const BasicTensor<T>& a, double rho);

/// (rho / rows^2) * (||a^T a - I||_F^2 + ||a a^T - I||_F^2)
template <typename T>
double dso(const BasicTensor<T>& a, double rho);

/// rho * max_r sum_c |(a^T a - I)[r, c]|, the l-inf induced norm.
template <typename T>
double mc(const BasicTensor<T>& a, double rho);

/// Largest |eigenvalue| of a symmetric matrix by power iteration from a seeded
/// unit vector. Stops after `iters` steps or when consecutive Rayleigh
/// quotients differ by at most `tol`.
template <typename T>
double spectral_norm_power(const BasicTensor<T>& s, int iters, double tol, std::uint64_t seed = 0);

/// rho * spectral_norm_power(a^T a - I)
template <typename T>
double srip(const BasicTensor<T>& a, double rho, int iters, double tol, std::uint64_t seed = 0);

/// Dispatches on cfg.kind; RegKind::None gives 0.
template <typename T>
double regularizer(const BasicTensor<T>& a, const RegConfig& cfg);

/// ||a^T a - I||_F / rows.
template <typename T>
double orthogonality_residual(const BasicTensor<T>& a);

/// Residual of the smaller Gram matrix, ||G - I||_F / rows with G = a a^T when
/// rows <= cols and a^T a otherwise. For rows < cols this equals
/// sqrt(||a^T a - I||_F^2 - (cols - rows)) / rows: the rank-deficient Gram
/// a^T a carries a constant floor of cols - rows that no parameter value can
/// remove, and this quantity is what is left after taking it out.
template <typename T>
double excess_orthogonality_residual(const BasicTensor<T>& a);

namespace ad {

/// max_r sum_c |x[r, c]|. Subgradient flows through the first maximizing row.
template <typename T>
Var max_abs_row_sum(Tape<T>& t, Var x);

/// |v^T S v| after power iteration on S; the backward pass differentiates
/// through every recorded iteration.
template <typename T>
Var spectral_norm(Tape<T>& t, Var s, int iters, double tol, std::uint64_t seed = 0);

template <typename T> Var so(Tape<T>& t, Var a, double rho);
template <typename T> Var dso(Tape<T>& t, Var a, double rho);
template <typename T> Var mc(Tape<T>& t, Var a, double rho);
template <typename T> Var srip(Tape<T>& t, Var a, double rho, int iters, double tol,
                               std::uint64_t seed = 0);
/// RegKind::None records a constant zero.
template <typename T> Var regularizer(Tape<T>& t, Var a, const RegConfig& cfg);

}  // namespace ad
}  // namespace elrt
