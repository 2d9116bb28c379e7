#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "elrt/tensor.hpp"
#include "elrt/tucker2.hpp"

namespace elrt {

/// Eigenpairs of a symmetric matrix, eigenvalues in descending order.
/// vectors[i, :] is the unit eigenvector for values[i].
struct SymmetricEigen {
  std::vector<double> values;
  Tensor64 vectors;
};

/// Cyclic Jacobi rotations until the off-diagonal mass is below tol * ||S||_F.
SymmetricEigen jacobi_eigen(const Tensor64& s, double tol = 1e-15, int max_sweeps = 100);

/// Thin SVD m = U diag(s) V^T with U[a, p], V[b, p], p = min(a, b), singular
/// values descending. One-sided (Hestenes) Jacobi.
struct ThinSvd {
  Tensor64 u;
  std::vector<double> s;
  Tensor64 v;
};
ThinSvd jacobi_svd(const Tensor64& m, double tol = 1e-15, int max_sweeps = 100);

/// Best rank-r approximation of m in Frobenius norm.
template <typename T>
BasicTensor<T> truncated_svd_approx(const BasicTensor<T>& m, std::size_t r);

template <typename T>
struct HooiResult {
  Tucker2Conv<T> layer;
  /// ||core||_F / ||w||_F after the HOSVD start (entry 0) and after every sweep.
  std::vector<double> fit_trace;
};

/// Tucker-2 approximation of w[C_in, C_out, K, K] by higher-order orthogonal
/// iteration over the two channel modes. Factors come back with orthonormal rows.
template <typename T>
HooiResult<T> hooi_tucker2(const BasicTensor<T>& w, std::size_t rank1, std::size_t rank2,
                           int max_iters = 50, double tol = 1e-8,
                           std::optional<ConvGeometry> geom = std::nullopt);

/// Largest ranks representable within a parameter budget.
struct BudgetMatch {
  std::size_t budget = 0;
  std::size_t matrix_rank = 0;
  std::size_t tucker_r1 = 0;
  std::size_t tucker_r2 = 0;
  bool feasible = false;
};

/// Matrix rank: largest r <= min(C_out, C_in*K*K) with r*(C_out + C_in*K*K) <= budget.
/// Tucker ranks (rank1 <= C_in, rank2 <= C_out): maximize min(rank1/C_in, rank2/C_out),
/// then rank1 + rank2, then minimize |rank1/C_in - rank2/C_out|, then prefer the
/// smaller rank1.
BudgetMatch match_budget(std::size_t c_in, std::size_t c_out, std::size_t k, std::size_t budget);

struct StudyRow {
  BudgetMatch match;
  double matrix_mse = 0.0;
  double tucker_mse = 0.0;
  std::string warning;  // non-empty when the budget was skipped
};

/// Matrix-SVD versus Tucker-2 reconstruction error at matched parameter budgets.
template <typename T>
std::vector<StudyRow> approx_error_study(const BasicTensor<T>& w, std::span<const std::size_t> budgets);

/// Kernel [C_in, C_out, K, K] with exact Tucker-2 ranks (rank1, rank2) from Gaussian factors,
/// scaled to unit RMS, plus i.i.d. N(0, noise^2) entries.
template <typename T>
BasicTensor<T> planted_tucker_kernel(std::size_t c_in, std::size_t c_out, std::size_t k, std::size_t rank1,
                                     std::size_t rank2, double noise, std::uint64_t seed);

/// budget,matrix_rank,tucker_r1,tucker_r2,matrix_mse,tucker_mse
std::string study_csv(std::span<const StudyRow> rows);

}  // namespace elrt
