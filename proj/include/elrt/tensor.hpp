#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace elrt {

using Shape = std::vector<std::size_t>;

/// Raised when tensor extents disagree with what an operation requires.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

std::string to_string(const Shape& shape);

/// Product of extents. Throws ShapeError for an empty shape or a zero extent.
std::size_t element_count(const Shape& shape);

/// Dense row-major N-d array. Value semantics; copying copies the buffer.
///
/// Training runs on BasicTensor<float>; gradient and oracle tests instantiate
/// the same kernels on BasicTensor<double> ("verification mode").
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() : BasicTensor(Shape{1}) {}
  explicit BasicTensor(Shape shape, T fill = T(0))
      : shape_(std::move(shape)), data_(element_count(shape_), fill) {}
  BasicTensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (element_count(shape_) != data_.size()) {
      throw ShapeError("tensor: shape " + to_string(shape_) + " needs " +
                       std::to_string(element_count(shape_)) + " elements, got " +
                       std::to_string(data_.size()));
    }
  }

  static BasicTensor scalar(T value) { return BasicTensor(Shape{1}, value); }
  static BasicTensor identity(std::size_t n) {
    BasicTensor eye(Shape{n, n});
    for (std::size_t i = 0; i < n; ++i) eye.data_[i * n + i] = T(1);
    return eye;
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const {
    if (axis >= shape_.size()) {
      throw ShapeError("tensor: axis " + std::to_string(axis) + " out of range for shape " +
                       to_string(shape_));
    }
    return shape_[axis];
  }
  std::size_t size() const noexcept { return data_.size(); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  T* raw() noexcept { return data_.data(); }
  const T* raw() const noexcept { return data_.data(); }

  T& operator[](std::size_t flat) { return data_[flat]; }
  const T& operator[](std::size_t flat) const { return data_[flat]; }

  template <typename... Index>
  T& operator()(Index... index) {
    return data_[offset_of(index...)];
  }
  template <typename... Index>
  const T& operator()(Index... index) const {
    return data_[offset_of(index...)];
  }

  BasicTensor reshaped(Shape shape) const& { return BasicTensor(std::move(shape), data_); }
  BasicTensor reshaped(Shape shape) && { return BasicTensor(std::move(shape), std::move(data_)); }

  template <typename U>
  BasicTensor<U> cast() const {
    return BasicTensor<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
  }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  bool operator==(const BasicTensor&) const = default;

 private:
  template <typename... Index>
  std::size_t offset_of(Index... index) const {
    static_assert(sizeof...(Index) > 0);
    const std::size_t idx[] = {static_cast<std::size_t>(index)...};
    if (sizeof...(Index) != shape_.size()) {
      throw ShapeError("tensor: " + std::to_string(sizeof...(Index)) + " indices for rank-" +
                       std::to_string(shape_.size()) + " tensor");
    }
    std::size_t off = 0;
    for (std::size_t a = 0; a < sizeof...(Index); ++a) off = off * shape_[a] + idx[a];
    return off;
  }

  Shape shape_;
  std::vector<T> data_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

/// floor((in + 2*padding - k) / stride) + 1; throws if the window never fits.
std::size_t conv_output_extent(std::size_t in, std::size_t k, std::size_t stride,
                               std::size_t padding);

struct ConvGeometry {
  std::size_t c_in = 1;
  std::size_t c_out = 1;
  std::size_t k = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t h_in = 1;
  std::size_t w_in = 1;

  std::size_t h_out() const { return conv_output_extent(h_in, k, stride, padding); }
  std::size_t w_out() const { return conv_output_extent(w_in, k, stride, padding); }

  /// Throws ShapeError on a zero extent or a kernel larger than the padded input.
  void validate() const;

  bool operator==(const ConvGeometry&) const = default;
};

// ---------------------------------------------------------------------------
// Kernels. Weights are laid out (C_in, C_out, K, K); activations (N, C, H, W).

/// Reference convolution of a single image x[C_in,H,W], sequential loops with
/// a fixed accumulation order. Zero padding.
template <typename T>
BasicTensor<T> conv2d_direct(const BasicTensor<T>& x, const BasicTensor<T>& w,
                             const ConvGeometry& geom);

/// Batched convolution x[N,C_in,H,W] -> y[N,C_out,H',W'] through im2col + GEMM.
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& w, std::size_t stride,
                      std::size_t padding);

/// d(loss)/dx for conv2d given dy.
template <typename T>
BasicTensor<T> conv2d_grad_input(const BasicTensor<T>& dy, const BasicTensor<T>& w,
                                 const Shape& x_shape, std::size_t stride, std::size_t padding);

/// d(loss)/dw for conv2d given dy.
template <typename T>
BasicTensor<T> conv2d_grad_weight(const BasicTensor<T>& dy, const BasicTensor<T>& x,
                                  const Shape& w_shape, std::size_t stride, std::size_t padding);

/// (C_in, C_out, K, K) -> (C_out, C_in*K*K); row q is the flattening of w[:, q, :, :].
template <typename T>
BasicTensor<T> matricize_kernel(const BasicTensor<T>& w);

/// Inverse of matricize_kernel.
template <typename T>
BasicTensor<T> dematricize_kernel(const BasicTensor<T>& m, std::size_t c_in, std::size_t k);

template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b);

template <typename T>
BasicTensor<T> transpose(const BasicTensor<T>& a);

/// Mean of squared differences, accumulated in double.
template <typename T>
double mse(const BasicTensor<T>& a, const BasicTensor<T>& b);

template <typename T>
double frobenius_norm_sq(const BasicTensor<T>& a);

/// i.i.d. U[-a, a] with a = sqrt(6 / (fan_in + fan_out)).
template <typename T>
BasicTensor<T> xavier_uniform(const Shape& shape, std::size_t fan_in, std::size_t fan_out,
                              std::uint64_t seed);

/// i.i.d. N(0, 2 / fan_in).
template <typename T>
BasicTensor<T> kaiming_normal(const Shape& shape, std::size_t fan_in, std::uint64_t seed);

/// Stable 64-bit FNV-1a hash; used to derive per-layer seeds from names.
std::uint64_t fnv1a(std::string_view text, std::uint64_t basis = 0xcbf29ce484222325ULL);

/// Mixes two seeds into one (splitmix64 finalizer).
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace elrt
