#pragma once

// Raw convolution kernels over contiguous NCHW buffers. Batched im2col
// followed by a single GEMM per call.

namespace syndiff::kernels {

struct ConvDims {
  int n, ci, h, w;   // input
  int co, kernel;    // weight [co, ci, kernel, kernel]
  int stride, pad;
  int ho, wo;        // output
};

template <typename T>
void conv2d_forward(const ConvDims& d, const T* x, const T* w, T* out);

/// Accumulates nothing; overwrites `dx` [n, ci, h, w].
template <typename T>
void conv2d_input_grad(const ConvDims& d, const T* g, const T* w, T* dx);

/// Overwrites `dw` [co, ci, kernel, kernel].
template <typename T>
void conv2d_weight_grad(const ConvDims& d, const T* x, const T* g, T* dw);

}  // namespace syndiff::kernels
