#include "elrt/tensor.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "gemm.hpp"

namespace elrt {

std::string to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) out << (i ? "x" : "") << shape[i];
  out << ']';
  return out.str();
}

std::size_t element_count(const Shape& shape) {
  if (shape.empty()) throw ShapeError("tensor: rank must be at least 1");
  std::size_t n = 1;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (shape[i] == 0) {
      throw ShapeError("tensor: extent of axis " + std::to_string(i) + " is zero in " +
                       to_string(shape));
    }
    n *= shape[i];
  }
  return n;
}

std::size_t conv_output_extent(std::size_t in, std::size_t k, std::size_t stride,
                               std::size_t padding) {
  if (stride == 0) throw ShapeError("conv: stride must be positive");
  if (k == 0) throw ShapeError("conv: kernel size must be positive");
  if (in + 2 * padding < k) {
    throw ShapeError("conv: kernel " + std::to_string(k) + " exceeds padded input " +
                     std::to_string(in + 2 * padding));
  }
  return (in + 2 * padding - k) / stride + 1;
}

void ConvGeometry::validate() const {
  if (c_in == 0 || c_out == 0 || h_in == 0 || w_in == 0) {
    throw ShapeError("conv: channel and spatial extents must be positive");
  }
  (void)h_out();
  (void)w_out();
}

namespace {

void expect_rank(const char* op, const Shape& shape, std::size_t rank, const char* what) {
  if (shape.size() != rank) {
    throw ShapeError(std::string(op) + ": " + what + " must have " + std::to_string(rank) +
                     " dims, got " + to_string(shape));
  }
}

void expect_axis(const char* op, const char* axis_name, std::size_t got, std::size_t want) {
  if (got != want) {
    throw ShapeError(std::string(op) + ": " + axis_name + " is " + std::to_string(got) +
                     ", expected " + std::to_string(want));
  }
}

struct ConvDims {
  std::size_t n, c_in, h, w, c_out, k, h_out, w_out;
  std::size_t patch() const { return c_in * k * k; }
  std::size_t pixels_in() const { return h * w; }
  std::size_t pixels_out() const { return h_out * w_out; }
};

ConvDims conv_dims(const Shape& x, const Shape& w, std::size_t stride, std::size_t padding) {
  expect_rank("conv2d", x, 4, "input");
  expect_rank("conv2d", w, 4, "kernel");
  expect_axis("conv2d", "input channel axis (dim 1)", x[1], w[0]);
  expect_axis("conv2d", "kernel width axis (dim 3)", w[3], w[2]);
  ConvDims d{x[0], x[1], x[2], x[3], w[1], w[2], 0, 0};
  d.h_out = conv_output_extent(d.h, d.k, stride, padding);
  d.w_out = conv_output_extent(d.w, d.k, stride, padding);
  return d;
}

bool is_pointwise(const ConvDims& d, std::size_t stride, std::size_t padding) {
  return d.k == 1 && stride == 1 && padding == 0;
}

// cols[(p*K + i)*K + j, b*H'W' + oh*W' + ow] = x[n0 + b, p, oh*s + i - pad, ow*s + j - pad]
// for the images n0 <= n0 + b < n0 + nb. Row length is nb*H'W'.
template <typename T>
void im2col(const T* x, const ConvDims& d, std::size_t stride, std::size_t padding, std::size_t n0,
            std::size_t nb, T* cols) {
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(padding);
  const std::ptrdiff_t w = static_cast<std::ptrdiff_t>(d.w);
  const std::size_t row_len = nb * d.pixels_out();
  std::fill(cols, cols + d.patch() * row_len, T(0));  // padding taps stay zero
  for (std::size_t p = 0; p < d.c_in; ++p) {
    for (std::size_t i = 0; i < d.k; ++i) {
      for (std::size_t j = 0; j < d.k; ++j) {
        T* row = cols + ((p * d.k + i) * d.k + j) * row_len;
        // output columns whose input column lands inside the image
        const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(j) - pad;
        std::size_t lo = 0, hi = d.w_out;
        while (lo < d.w_out && static_cast<std::ptrdiff_t>(lo * stride) + off < 0) ++lo;
        while (hi > lo && static_cast<std::ptrdiff_t>((hi - 1) * stride) + off >= w) --hi;
        if (lo >= hi) continue;
        for (std::size_t b = 0; b < nb; ++b) {
          const T* plane = x + ((n0 + b) * d.c_in + p) * d.pixels_in();
          T* img = row + b * d.pixels_out();
          for (std::size_t oh = 0; oh < d.h_out; ++oh) {
            const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * stride + i) - pad;
            if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(d.h)) continue;
            const T* in = plane + static_cast<std::size_t>(ih) * d.w;
            T* out = img + oh * d.w_out;
            if (stride == 1) {
              std::copy(in + (static_cast<std::ptrdiff_t>(lo) + off), in + (static_cast<std::ptrdiff_t>(hi) + off), out + lo);
            } else {
              for (std::size_t ow = lo; ow < hi; ++ow) out[ow] = in[static_cast<std::ptrdiff_t>(ow * stride) + off];
            }
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, const ConvDims& d, std::size_t stride, std::size_t padding, std::size_t n0,
                std::size_t nb, T* x) {
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(padding);
  const std::ptrdiff_t w = static_cast<std::ptrdiff_t>(d.w);
  const std::size_t row_len = nb * d.pixels_out();
  for (std::size_t b = 0; b < nb; ++b) {
    for (std::size_t p = 0; p < d.c_in; ++p) {
      T* plane = x + ((n0 + b) * d.c_in + p) * d.pixels_in();
      for (std::size_t i = 0; i < d.k; ++i) {
        for (std::size_t j = 0; j < d.k; ++j) {
          const T* row = cols + ((p * d.k + i) * d.k + j) * row_len + b * d.pixels_out();
          const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(j) - pad;
          std::size_t lo = 0, hi = d.w_out;
          while (lo < d.w_out && static_cast<std::ptrdiff_t>(lo * stride) + off < 0) ++lo;
          while (hi > lo && static_cast<std::ptrdiff_t>((hi - 1) * stride) + off >= w) --hi;
          for (std::size_t oh = 0; oh < d.h_out; ++oh) {
            const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * stride + i) - pad;
            if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(d.h)) continue;
            T* out = plane + static_cast<std::size_t>(ih) * d.w;
            const T* in = row + oh * d.w_out;
            if (stride == 1) {
              T* dst = out + off;
              for (std::size_t ow = lo; ow < hi; ++ow) dst[ow] += in[ow];
            } else {
              for (std::size_t ow = lo; ow < hi; ++ow) out[static_cast<std::ptrdiff_t>(ow * stride) + off] += in[ow];
            }
          }
        }
      }
    }
  }
}

// [N, C, P] images n0..n0+nb  <->  [C, nb*P]
template <typename T>
void to_channel_major(const T* src, std::size_t c, std::size_t pixels, std::size_t n0, std::size_t nb, T* dst) {
  for (std::size_t b = 0; b < nb; ++b)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const T* s = src + ((n0 + b) * c + ch) * pixels;
      std::copy(s, s + pixels, dst + (ch * nb + b) * pixels);
    }
}

template <typename T>
void from_channel_major(const T* src, std::size_t c, std::size_t pixels, std::size_t n0, std::size_t nb, T* dst) {
  for (std::size_t b = 0; b < nb; ++b)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const T* s = src + (ch * nb + b) * pixels;
      std::copy(s, s + pixels, dst + ((n0 + b) * c + ch) * pixels);
    }
}

// Direct axpy kernels for narrow pointwise layers, where the GEMM path is dominated by layout
// copies. Each image's planes stay cache resident.
bool use_direct(const ConvDims& d, std::size_t stride, std::size_t padding) {
  return is_pointwise(d, stride, padding) && d.c_in * d.c_out <= 256;
}

// y[n, q] += w[p, q] * x[n, p] over whole planes.
template <typename T>
void pointwise_forward(const T* x, const T* w, const ConvDims& d, T* y) {
  const std::size_t pix = d.pixels_in();
  for (std::size_t n = 0; n < d.n; ++n) {
    for (std::size_t q = 0; q < d.c_out; ++q) {
      T* yq = y + (n * d.c_out + q) * pix;
      for (std::size_t p = 0; p < d.c_in; ++p) {
        const T* xp = x + (n * d.c_in + p) * pix;
        const T wv = w[p * d.c_out + q];
        for (std::size_t i = 0; i < pix; ++i) yq[i] += wv * xp[i];
      }
    }
  }
}

// dx[n, p] += w[p, q] * dy[n, q] over whole planes.
template <typename T>
void pointwise_grad_input(const T* dy, const T* w, const ConvDims& d, T* dx) {
  const std::size_t pix = d.pixels_in();
  for (std::size_t n = 0; n < d.n; ++n) {
    for (std::size_t p = 0; p < d.c_in; ++p) {
      T* xp = dx + (n * d.c_in + p) * pix;
      for (std::size_t q = 0; q < d.c_out; ++q) {
        const T* gq = dy + (n * d.c_out + q) * pix;
        const T wv = w[p * d.c_out + q];
        for (std::size_t i = 0; i < pix; ++i) xp[i] += wv * gq[i];
      }
    }
  }
}

// Images per chunk so that the column buffer stays around 256K elements (L2 resident).
std::size_t chunk_images(const ConvDims& d) {
  const std::size_t per = std::max<std::size_t>(1, std::max(d.patch(), d.c_out) * d.pixels_out());
  return std::clamp<std::size_t>((std::size_t(1) << 18) / per, 1, d.n);
}

}  // namespace

template <typename T>
BasicTensor<T> conv2d_direct(const BasicTensor<T>& x, const BasicTensor<T>& w,
                             const ConvGeometry& geom) {
  geom.validate();
  expect_rank("conv2d_direct", x.shape(), 3, "input");
  expect_rank("conv2d_direct", w.shape(), 4, "kernel");
  expect_axis("conv2d_direct", "input channel axis (dim 0)", x.dim(0), geom.c_in);
  expect_axis("conv2d_direct", "input height axis (dim 1)", x.dim(1), geom.h_in);
  expect_axis("conv2d_direct", "input width axis (dim 2)", x.dim(2), geom.w_in);
  expect_axis("conv2d_direct", "kernel input-channel axis (dim 0)", w.dim(0), geom.c_in);
  expect_axis("conv2d_direct", "kernel output-channel axis (dim 1)", w.dim(1), geom.c_out);
  expect_axis("conv2d_direct", "kernel height axis (dim 2)", w.dim(2), geom.k);
  expect_axis("conv2d_direct", "kernel width axis (dim 3)", w.dim(3), geom.k);

  const std::size_t ho = geom.h_out(), wo = geom.w_out();
  const auto h = static_cast<std::ptrdiff_t>(geom.h_in);
  const auto wd = static_cast<std::ptrdiff_t>(geom.w_in);
  const auto pad = static_cast<std::ptrdiff_t>(geom.padding);
  BasicTensor<T> y(Shape{geom.c_out, ho, wo});
  for (std::size_t q = 0; q < geom.c_out; ++q) {
    for (std::size_t oh = 0; oh < ho; ++oh) {
      for (std::size_t ow = 0; ow < wo; ++ow) {
        T acc = 0;
        for (std::size_t p = 0; p < geom.c_in; ++p) {
          for (std::size_t i = 0; i < geom.k; ++i) {
            const auto ih = static_cast<std::ptrdiff_t>(geom.stride * oh + i) - pad;
            if (ih < 0 || ih >= h) continue;
            for (std::size_t j = 0; j < geom.k; ++j) {
              const auto iw = static_cast<std::ptrdiff_t>(geom.stride * ow + j) - pad;
              if (iw < 0 || iw >= wd) continue;
              acc += w(p, q, i, j) * x(p, static_cast<std::size_t>(ih), static_cast<std::size_t>(iw));
            }
          }
        }
        y(q, oh, ow) = acc;
      }
    }
  }
  return y;
}

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& w, std::size_t stride,
                      std::size_t padding) {
  const ConvDims d = conv_dims(x.shape(), w.shape(), stride, padding);
  BasicTensor<T> y(Shape{d.n, d.c_out, d.h_out, d.w_out});
  if (use_direct(d, stride, padding)) {
    pointwise_forward(x.raw(), w.raw(), d, y.raw());
    return y;
  }
  const BasicTensor<T> wm = matricize_kernel(w);
  const auto weights = detail::as_matrix(wm.raw(), d.c_out, d.patch());
  const std::size_t chunk = chunk_images(d);
  std::vector<T> cols(d.patch() * chunk * d.pixels_out());
  std::vector<T> out(d.c_out * chunk * d.pixels_out());
  for (std::size_t n0 = 0; n0 < d.n; n0 += chunk) {
    const std::size_t nb = std::min(chunk, d.n - n0);
    const std::ptrdiff_t len = static_cast<std::ptrdiff_t>(nb * d.pixels_out());
    if (is_pointwise(d, stride, padding)) {
      to_channel_major(x.raw(), d.c_in, d.pixels_in(), n0, nb, cols.data());
    } else {
      im2col(x.raw(), d, stride, padding, n0, nb, cols.data());
    }
    detail::as_matrix(out.data(), d.c_out, len).noalias() =
        weights * detail::as_matrix(cols.data(), d.patch(), len);
    from_channel_major(out.data(), d.c_out, d.pixels_out(), n0, nb, y.raw());
  }
  return y;
}

template <typename T>
BasicTensor<T> conv2d_grad_input(const BasicTensor<T>& dy, const BasicTensor<T>& w,
                                 const Shape& x_shape, std::size_t stride, std::size_t padding) {
  const ConvDims d = conv_dims(x_shape, w.shape(), stride, padding);
  expect_rank("conv2d_grad_input", dy.shape(), 4, "output gradient");
  expect_axis("conv2d_grad_input", "gradient channel axis (dim 1)", dy.dim(1), d.c_out);
  expect_axis("conv2d_grad_input", "gradient batch axis (dim 0)", dy.dim(0), d.n);
  expect_axis("conv2d_grad_input", "gradient height axis (dim 2)", dy.dim(2), d.h_out);
  expect_axis("conv2d_grad_input", "gradient width axis (dim 3)", dy.dim(3), d.w_out);
  BasicTensor<T> dx(x_shape);
  if (use_direct(d, stride, padding)) {
    pointwise_grad_input(dy.raw(), w.raw(), d, dx.raw());
    return dx;
  }
  const BasicTensor<T> wm = matricize_kernel(w);
  const auto weights = detail::as_matrix(wm.raw(), d.c_out, d.patch());
  const std::size_t chunk = chunk_images(d);
  std::vector<T> cols(d.patch() * chunk * d.pixels_out());
  std::vector<T> g(d.c_out * chunk * d.pixels_out());
  for (std::size_t n0 = 0; n0 < d.n; n0 += chunk) {
    const std::size_t nb = std::min(chunk, d.n - n0);
    const std::ptrdiff_t len = static_cast<std::ptrdiff_t>(nb * d.pixels_out());
    to_channel_major(dy.raw(), d.c_out, d.pixels_out(), n0, nb, g.data());
    detail::as_matrix(cols.data(), d.patch(), len).noalias() =
        weights.transpose() * detail::as_matrix(g.data(), d.c_out, len);
    if (is_pointwise(d, stride, padding)) {
      from_channel_major(cols.data(), d.c_in, d.pixels_in(), n0, nb, dx.raw());
    } else {
      col2im_add(cols.data(), d, stride, padding, n0, nb, dx.raw());
    }
  }
  return dx;
}

template <typename T>
BasicTensor<T> conv2d_grad_weight(const BasicTensor<T>& dy, const BasicTensor<T>& x,
                                  const Shape& w_shape, std::size_t stride, std::size_t padding) {
  const ConvDims d = conv_dims(x.shape(), w_shape, stride, padding);
  expect_rank("conv2d_grad_weight", dy.shape(), 4, "output gradient");
  expect_axis("conv2d_grad_weight", "gradient channel axis (dim 1)", dy.dim(1), d.c_out);
  expect_axis("conv2d_grad_weight", "gradient batch axis (dim 0)", dy.dim(0), d.n);
  expect_axis("conv2d_grad_weight", "gradient height axis (dim 2)", dy.dim(2), d.h_out);
  expect_axis("conv2d_grad_weight", "gradient width axis (dim 3)", dy.dim(3), d.w_out);
  BasicTensor<T> dwm(Shape{d.c_out, d.patch()});
  auto acc = detail::as_matrix(dwm.raw(), d.c_out, d.patch());
  const std::size_t chunk = chunk_images(d);
  std::vector<T> cols(d.patch() * chunk * d.pixels_out());
  std::vector<T> g(d.c_out * chunk * d.pixels_out());
  for (std::size_t n0 = 0; n0 < d.n; n0 += chunk) {
    const std::size_t nb = std::min(chunk, d.n - n0);
    const std::ptrdiff_t len = static_cast<std::ptrdiff_t>(nb * d.pixels_out());
    if (is_pointwise(d, stride, padding)) {
      to_channel_major(x.raw(), d.c_in, d.pixels_in(), n0, nb, cols.data());
    } else {
      im2col(x.raw(), d, stride, padding, n0, nb, cols.data());
    }
    to_channel_major(dy.raw(), d.c_out, d.pixels_out(), n0, nb, g.data());
    const auto gm = detail::as_matrix(g.data(), d.c_out, len);
    const auto cm = detail::as_matrix(cols.data(), d.patch(), len);
    // few outputs, long reduction: row-by-row dot products beat blocked GEMM
    if (d.c_out * d.patch() <= 4096) {
      acc.noalias() += gm.lazyProduct(cm.transpose());
    } else {
      acc.noalias() += gm * cm.transpose();
    }
  }
  return dematricize_kernel(dwm, d.c_in, d.k);
}

template <typename T>
BasicTensor<T> matricize_kernel(const BasicTensor<T>& w) {
  expect_rank("matricize_kernel", w.shape(), 4, "kernel");
  const std::size_t c_in = w.dim(0), c_out = w.dim(1), kk = w.dim(2) * w.dim(3);
  BasicTensor<T> m(Shape{c_out, c_in * kk});
  for (std::size_t p = 0; p < c_in; ++p) {
    for (std::size_t q = 0; q < c_out; ++q) {
      const T* src = w.raw() + (p * c_out + q) * kk;
      std::copy(src, src + kk, m.raw() + q * c_in * kk + p * kk);
    }
  }
  return m;
}

template <typename T>
BasicTensor<T> dematricize_kernel(const BasicTensor<T>& m, std::size_t c_in, std::size_t k) {
  expect_rank("dematricize_kernel", m.shape(), 2, "matrix");
  const std::size_t kk = k * k;
  if (c_in == 0 || k == 0 || m.dim(1) != c_in * kk) {
    throw ShapeError("dematricize_kernel: column count " + std::to_string(m.dim(1)) +
                     " is not C_in*K*K = " + std::to_string(c_in * kk));
  }
  const std::size_t c_out = m.dim(0);
  BasicTensor<T> w(Shape{c_in, c_out, k, k});
  for (std::size_t p = 0; p < c_in; ++p) {
    for (std::size_t q = 0; q < c_out; ++q) {
      const T* src = m.raw() + q * c_in * kk + p * kk;
      std::copy(src, src + kk, w.raw() + (p * c_out + q) * kk);
    }
  }
  return w;
}

template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  expect_rank("matmul", a.shape(), 2, "left operand");
  expect_rank("matmul", b.shape(), 2, "right operand");
  expect_axis("matmul", "inner dimension (right dim 0)", b.dim(0), a.dim(1));
  BasicTensor<T> c(Shape{a.dim(0), b.dim(1)});
  detail::as_matrix(c.raw(), a.dim(0), b.dim(1)).noalias() =
      detail::as_matrix(a.raw(), a.dim(0), a.dim(1)) *
      detail::as_matrix(b.raw(), b.dim(0), b.dim(1));
  return c;
}

template <typename T>
BasicTensor<T> transpose(const BasicTensor<T>& a) {
  expect_rank("transpose", a.shape(), 2, "operand");
  const std::size_t rows = a.dim(0), cols = a.dim(1);
  BasicTensor<T> t(Shape{cols, rows});
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) t[j * rows + i] = a[i * cols + j];
  return t;
}

template <typename T>
double mse(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("mse: shapes differ, " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += diff * diff;
  }
  return acc / static_cast<double>(a.size());
}

template <typename T>
double frobenius_norm_sq(const BasicTensor<T>& a) {
  double acc = 0.0;
  for (const T v : a.data()) acc += static_cast<double>(v) * static_cast<double>(v);
  return acc;
}

template <typename T>
BasicTensor<T> xavier_uniform(const Shape& shape, std::size_t fan_in, std::size_t fan_out,
                              std::uint64_t seed) {
  if (fan_in == 0 || fan_out == 0) throw std::invalid_argument("xavier_uniform: zero fan");
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-bound, bound);
  BasicTensor<T> t(shape);
  for (T& v : t.data()) v = static_cast<T>(dist(rng));
  return t;
}

template <typename T>
BasicTensor<T> kaiming_normal(const Shape& shape, std::size_t fan_in, std::uint64_t seed) {
  if (fan_in == 0) throw std::invalid_argument("kaiming_normal: zero fan");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  BasicTensor<T> t(shape);
  for (T& v : t.data()) v = static_cast<T>(dist(rng));
  return t;
}

std::uint64_t fnv1a(std::string_view text, std::uint64_t basis) {
  std::uint64_t h = basis;
  for (const char c : text) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

#define ELRT_INSTANTIATE(T)                                                                      \
  template BasicTensor<T> conv2d_direct(const BasicTensor<T>&, const BasicTensor<T>&,            \
                                        const ConvGeometry&);                                    \
  template BasicTensor<T> conv2d(const BasicTensor<T>&, const BasicTensor<T>&, std::size_t,      \
                                 std::size_t);                                                   \
  template BasicTensor<T> conv2d_grad_input(const BasicTensor<T>&, const BasicTensor<T>&,        \
                                            const Shape&, std::size_t, std::size_t);             \
  template BasicTensor<T> conv2d_grad_weight(const BasicTensor<T>&, const BasicTensor<T>&,       \
                                             const Shape&, std::size_t, std::size_t);            \
  template BasicTensor<T> matricize_kernel(const BasicTensor<T>&);                               \
  template BasicTensor<T> dematricize_kernel(const BasicTensor<T>&, std::size_t, std::size_t);   \
  template BasicTensor<T> matmul(const BasicTensor<T>&, const BasicTensor<T>&);                  \
  template BasicTensor<T> transpose(const BasicTensor<T>&);                                      \
  template double mse(const BasicTensor<T>&, const BasicTensor<T>&);                             \
  template double frobenius_norm_sq(const BasicTensor<T>&);                                      \
  template BasicTensor<T> xavier_uniform(const Shape&, std::size_t, std::size_t, std::uint64_t); \
  template BasicTensor<T> kaiming_normal(const Shape&, std::size_t, std::uint64_t);

ELRT_INSTANTIATE(float)
ELRT_INSTANTIATE(double)
#undef ELRT_INSTANTIATE

}  // namespace elrt
