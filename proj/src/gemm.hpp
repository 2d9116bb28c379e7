#pragma once

#include <Eigen/Core>

namespace elrt::detail {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

template <typename T>
MatrixMap<T> as_matrix(T* data, std::ptrdiff_t rows, std::ptrdiff_t cols) {
  return MatrixMap<T>(data, rows, cols);
}
template <typename T>
ConstMatrixMap<T> as_matrix(const T* data, std::ptrdiff_t rows, std::ptrdiff_t cols) {
  return ConstMatrixMap<T>(data, rows, cols);
}

}  // namespace elrt::detail
