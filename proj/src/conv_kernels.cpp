#include "conv_kernels.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cstddef>
#include <vector>

namespace syndiff::kernels {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

bool is_pointwise(const ConvDims& d) { return d.kernel == 1 && d.stride == 1 && d.pad == 0; }

// col [ci*K*K, n*ho*wo]
template <typename T>
void im2col(const ConvDims& d, const T* x, T* col) {
  const std::size_t plane = static_cast<std::size_t>(d.ho) * d.wo;
  const std::size_t cols = plane * d.n;
  for (int c = 0; c < d.ci; ++c)
    for (int ky = 0; ky < d.kernel; ++ky)
      for (int kx = 0; kx < d.kernel; ++kx) {
        const std::size_t row = (static_cast<std::size_t>(c) * d.kernel + ky) * d.kernel + kx;
        T* dst_row = col + row * cols;
        for (int b = 0; b < d.n; ++b) {
          const T* src = x + (static_cast<std::size_t>(b) * d.ci + c) * d.h * d.w;
          T* dst = dst_row + b * plane;
          for (int oy = 0; oy < d.ho; ++oy) {
            const int iy = oy * d.stride - d.pad + ky;
            T* out_row = dst + static_cast<std::size_t>(oy) * d.wo;
            if (iy < 0 || iy >= d.h) {
              std::fill(out_row, out_row + d.wo, T(0));
              continue;
            }
            const T* in_row = src + static_cast<std::size_t>(iy) * d.w;
            for (int ox = 0; ox < d.wo; ++ox) {
              const int ix = ox * d.stride - d.pad + kx;
              out_row[ox] = (ix >= 0 && ix < d.w) ? in_row[ix] : T(0);
            }
          }
        }
      }
}

template <typename T>
void col2im(const ConvDims& d, const T* col, T* x) {
  const std::size_t plane = static_cast<std::size_t>(d.ho) * d.wo;
  const std::size_t cols = plane * d.n;
  std::fill(x, x + static_cast<std::size_t>(d.n) * d.ci * d.h * d.w, T(0));
  for (int c = 0; c < d.ci; ++c)
    for (int ky = 0; ky < d.kernel; ++ky)
      for (int kx = 0; kx < d.kernel; ++kx) {
        const std::size_t row = (static_cast<std::size_t>(c) * d.kernel + ky) * d.kernel + kx;
        const T* src_row = col + row * cols;
        for (int b = 0; b < d.n; ++b) {
          T* dst = x + (static_cast<std::size_t>(b) * d.ci + c) * d.h * d.w;
          const T* src = src_row + b * plane;
          for (int oy = 0; oy < d.ho; ++oy) {
            const int iy = oy * d.stride - d.pad + ky;
            if (iy < 0 || iy >= d.h) continue;
            T* in_row = dst + static_cast<std::size_t>(iy) * d.w;
            const T* c_row = src + static_cast<std::size_t>(oy) * d.wo;
            for (int ox = 0; ox < d.wo; ++ox) {
              const int ix = ox * d.stride - d.pad + kx;
              if (ix >= 0 && ix < d.w) in_row[ix] += c_row[ox];
            }
          }
        }
      }
}

// [n, c, p] <-> [c, n*p]
template <typename T>
void batch_to_channel_major(const T* src, int n, int c, std::size_t p, T* dst) {
  for (int b = 0; b < n; ++b)
    for (int ch = 0; ch < c; ++ch)
      std::copy_n(src + (static_cast<std::size_t>(b) * c + ch) * p, p,
                  dst + static_cast<std::size_t>(ch) * n * p + b * p);
}

template <typename T>
void channel_major_to_batch(const T* src, int n, int c, std::size_t p, T* dst) {
  for (int b = 0; b < n; ++b)
    for (int ch = 0; ch < c; ++ch)
      std::copy_n(src + static_cast<std::size_t>(ch) * n * p + b * p, p,
                  dst + (static_cast<std::size_t>(b) * c + ch) * p);
}

}  // namespace

template <typename T>
void conv2d_forward(const ConvDims& d, const T* x, const T* w, T* out) {
  const std::size_t in_plane = static_cast<std::size_t>(d.h) * d.w;
  const std::size_t plane = static_cast<std::size_t>(d.ho) * d.wo;
  const std::size_t cols = plane * d.n;
  const int rows = d.ci * d.kernel * d.kernel;
  std::vector<T> col(static_cast<std::size_t>(rows) * cols);
  if (is_pointwise(d))
    batch_to_channel_major(x, d.n, d.ci, in_plane, col.data());
  else
    im2col(d, x, col.data());
  std::vector<T> res(static_cast<std::size_t>(d.co) * cols);
  MapMat<T>(res.data(), d.co, static_cast<Eigen::Index>(cols)).noalias() =
      ConstMapMat<T>(w, d.co, rows) * ConstMapMat<T>(col.data(), rows, static_cast<Eigen::Index>(cols));
  channel_major_to_batch(res.data(), d.n, d.co, plane, out);
}

template <typename T>
void conv2d_input_grad(const ConvDims& d, const T* g, const T* w, T* dx) {
  const std::size_t in_plane = static_cast<std::size_t>(d.h) * d.w;
  const std::size_t plane = static_cast<std::size_t>(d.ho) * d.wo;
  const std::size_t cols = plane * d.n;
  const int rows = d.ci * d.kernel * d.kernel;
  std::vector<T> gm(static_cast<std::size_t>(d.co) * cols);
  batch_to_channel_major(g, d.n, d.co, plane, gm.data());
  std::vector<T> col(static_cast<std::size_t>(rows) * cols);
  MapMat<T>(col.data(), rows, static_cast<Eigen::Index>(cols)).noalias() =
      ConstMapMat<T>(w, d.co, rows).transpose() *
      ConstMapMat<T>(gm.data(), d.co, static_cast<Eigen::Index>(cols));
  if (is_pointwise(d))
    channel_major_to_batch(col.data(), d.n, d.ci, in_plane, dx);
  else
    col2im(d, col.data(), dx);
}

template <typename T>
void conv2d_weight_grad(const ConvDims& d, const T* x, const T* g, T* dw) {
  const std::size_t in_plane = static_cast<std::size_t>(d.h) * d.w;
  const std::size_t plane = static_cast<std::size_t>(d.ho) * d.wo;
  const std::size_t cols = plane * d.n;
  const int rows = d.ci * d.kernel * d.kernel;
  std::vector<T> col(static_cast<std::size_t>(rows) * cols);
  if (is_pointwise(d))
    batch_to_channel_major(x, d.n, d.ci, in_plane, col.data());
  else
    im2col(d, x, col.data());
  std::vector<T> gm(static_cast<std::size_t>(d.co) * cols);
  batch_to_channel_major(g, d.n, d.co, plane, gm.data());
  MapMat<T>(dw, d.co, rows).noalias() =
      ConstMapMat<T>(gm.data(), d.co, static_cast<Eigen::Index>(cols)) *
      ConstMapMat<T>(col.data(), rows, static_cast<Eigen::Index>(cols)).transpose();
}

template void conv2d_forward<float>(const ConvDims&, const float*, const float*, float*);
template void conv2d_forward<double>(const ConvDims&, const double*, const double*, double*);
template void conv2d_input_grad<float>(const ConvDims&, const float*, const float*, float*);
template void conv2d_input_grad<double>(const ConvDims&, const double*, const double*, double*);
template void conv2d_weight_grad<float>(const ConvDims&, const float*, const float*, float*);
template void conv2d_weight_grad<double>(const ConvDims&, const double*, const double*, double*);

}  // namespace syndiff::kernels
