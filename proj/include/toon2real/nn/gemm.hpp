#pragma once

#include <cstddef>

#include <Eigen/Core>

namespace toon2real::nn {

enum class Trans { No, Yes };

namespace detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
using ConstMap = Eigen::Map<const RowMat<T>>;

template <typename T>
using MutMap = Eigen::Map<RowMat<T>>;

}  // namespace detail

/// Row-major C[M x N] = alpha * op(A) * op(B) + beta * C with packed operands.
/// op(A) is M x K, op(B) is K x N.
template <typename T>
void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, T alpha, const T* a,
          const T* b, T beta, T* c) {
  using detail::ConstMap;
  using detail::MutMap;
  const auto M = static_cast<Eigen::Index>(m), N = static_cast<Eigen::Index>(n),
             K = static_cast<Eigen::Index>(k);
  MutMap<T> C(c, M, N);
  if (beta == T(0)) {
    C.setZero();
  } else if (beta != T(1)) {
    C *= beta;
  }
  if (ta == Trans::No && tb == Trans::No) {
    C.noalias() += alpha * (ConstMap<T>(a, M, K) * ConstMap<T>(b, K, N));
  } else if (ta == Trans::No && tb == Trans::Yes) {
    C.noalias() += alpha * (ConstMap<T>(a, M, K) * ConstMap<T>(b, N, K).transpose());
  } else if (ta == Trans::Yes && tb == Trans::No) {
    C.noalias() += alpha * (ConstMap<T>(a, K, M).transpose() * ConstMap<T>(b, K, N));
  } else {
    C.noalias() += alpha * (ConstMap<T>(a, K, M).transpose() * ConstMap<T>(b, N, K).transpose());
  }
}

/// Geometry of a square-kernel 2-D convolution window.
struct ConvGeometry {
  std::size_t channels, height, width;
  std::size_t kernel, stride, pad;

  std::size_t out_h() const { return (height + 2 * pad - kernel) / stride + 1; }
  std::size_t out_w() const { return (width + 2 * pad - kernel) / stride + 1; }
  std::size_t col_rows() const { return channels * kernel * kernel; }
  std::size_t col_cols() const { return out_h() * out_w(); }
};

/// Unfold one C x H x W image into a (C*k*k) x (Ho*Wo) column matrix. Padding reads as zero.
template <typename T>
void im2col(const T* img, const ConvGeometry& g, T* cols) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  const auto H = static_cast<std::ptrdiff_t>(g.height), W = static_cast<std::ptrdiff_t>(g.width);
  for (std::size_t c = 0; c < g.channels; ++c) {
    const T* plane = img + c * g.height * g.width;
    for (std::size_t ky = 0; ky < g.kernel; ++ky) {
      for (std::size_t kx = 0; kx < g.kernel; ++kx) {
        T* row = cols + ((c * g.kernel + ky) * g.kernel + kx) * oh * ow;
        for (std::size_t y = 0; y < oh; ++y) {
          const auto iy = static_cast<std::ptrdiff_t>(y * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
          T* out = row + y * ow;
          if (iy < 0 || iy >= H) {
            std::fill(out, out + ow, T(0));
            continue;
          }
          const T* src = plane + iy * W;
          for (std::size_t x = 0; x < ow; ++x) {
            const auto ix = static_cast<std::ptrdiff_t>(x * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
            out[x] = (ix >= 0 && ix < W) ? src[ix] : T(0);
          }
        }
      }
    }
  }
}

/// Adjoint of im2col: scatter-add columns back into a zero-initialised image.
template <typename T>
void col2im(const T* cols, const ConvGeometry& g, T* img) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  const auto H = static_cast<std::ptrdiff_t>(g.height), W = static_cast<std::ptrdiff_t>(g.width);
  std::fill(img, img + g.channels * g.height * g.width, T(0));
  for (std::size_t c = 0; c < g.channels; ++c) {
    T* plane = img + c * g.height * g.width;
    for (std::size_t ky = 0; ky < g.kernel; ++ky) {
      for (std::size_t kx = 0; kx < g.kernel; ++kx) {
        const T* row = cols + ((c * g.kernel + ky) * g.kernel + kx) * oh * ow;
        for (std::size_t y = 0; y < oh; ++y) {
          const auto iy = static_cast<std::ptrdiff_t>(y * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= H) continue;
          T* dst = plane + iy * W;
          const T* in = row + y * ow;
          for (std::size_t x = 0; x < ow; ++x) {
            const auto ix = static_cast<std::ptrdiff_t>(x * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
            if (ix >= 0 && ix < W) dst[ix] += in[x];
          }
        }
      }
    }
  }
}

}  // namespace toon2real::nn
