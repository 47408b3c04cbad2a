#pragma once

#include <cstdint>

#include "syndiff/tensor.hpp"

namespace syndiff {

// Every op records itself on the active graph when an input is tracked.
// Backward rules are written in terms of these same ops, so any op marked
// higher-order can be differentiated through a gradient computation.
// group_norm is the only first-order op.

// Elementwise, identical shapes.
template <typename T> BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T> BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T> BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T> BasicTensor<T> scale(const BasicTensor<T>& x, T factor);
template <typename T> BasicTensor<T> add_scalar(const BasicTensor<T>& x, T value);
template <typename T> BasicTensor<T> neg(const BasicTensor<T>& x) { return scale(x, T(-1)); }

template <typename T> BasicTensor<T> reciprocal(const BasicTensor<T>& x);
template <typename T> BasicTensor<T> log(const BasicTensor<T>& x);
template <typename T> BasicTensor<T> square(const BasicTensor<T>& x);
template <typename T> BasicTensor<T> abs(const BasicTensor<T>& x);
template <typename T> BasicTensor<T> sigmoid(const BasicTensor<T>& x);
template <typename T> BasicTensor<T> tanh(const BasicTensor<T>& x);
/// log(1 + exp(x)), evaluated without overflow.
template <typename T> BasicTensor<T> softplus(const BasicTensor<T>& x);
/// x * sigmoid(x)
template <typename T> BasicTensor<T> swish(const BasicTensor<T>& x);
inline constexpr double kLeakySlope = 0.2;
template <typename T> BasicTensor<T> leaky_relu(const BasicTensor<T>& x, T slope = T(kLeakySlope));

// Reductions. Scalars have shape [].
template <typename T> BasicTensor<T> sum(const BasicTensor<T>& x);
template <typename T> BasicTensor<T> mean(const BasicTensor<T>& x);
/// [N, ...] -> [N]
template <typename T> BasicTensor<T> sum_per_sample(const BasicTensor<T>& x);
template <typename T> BasicTensor<T> l1_mean(const BasicTensor<T>& x) { return mean(abs(x)); }
template <typename T> BasicTensor<T> l2_norm_sq(const BasicTensor<T>& x) { return sum(square(x)); }

/// Broadcast a one-element tensor to `shape`.
template <typename T> BasicTensor<T> expand(const BasicTensor<T>& scalar, const Shape& shape);
/// Broadcast [N] to [N, ...].
template <typename T> BasicTensor<T> expand_per_sample(const BasicTensor<T>& v, const Shape& shape);

// Layout.
template <typename T> BasicTensor<T> reshape(const BasicTensor<T>& x, const Shape& shape);
template <typename T> BasicTensor<T> transpose2d(const BasicTensor<T>& x);
template <typename T> BasicTensor<T> concat_channels(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T> BasicTensor<T> slice_channels(const BasicTensor<T>& x, int begin, int count);
/// Inverse of slice_channels: zero tensor with `total` channels holding x at `begin`.
template <typename T> BasicTensor<T> pad_channels(const BasicTensor<T>& x, int begin, int total);

/// Bias of shape [C] (shared over the batch) or [N, C] (per sample) spread to
/// `shape` = [N, C, ...].
template <typename T> BasicTensor<T> broadcast_bias(const BasicTensor<T>& bias, const Shape& shape);
/// Adjoint of broadcast_bias: sums g [N, C, ...] down to `bias_shape`.
template <typename T> BasicTensor<T> reduce_bias(const BasicTensor<T>& g, const Shape& bias_shape);
template <typename T> BasicTensor<T> add_bias(const BasicTensor<T>& x, const BasicTensor<T>& bias) {
  return add(x, broadcast_bias(bias, x.shape()));
}

// Linear algebra.
/// [M, K] x [K, N] -> [M, N]
template <typename T> BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b);

struct ConvGeometry {
  int stride = 1;
  int pad = 0;
};

/// x [N, Ci, H, W], w [Co, Ci, K, K] -> [N, Co, Ho, Wo], Ho = (H + 2p - K) / s + 1.
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& w, ConvGeometry geo = {});
/// Adjoint of conv2d with respect to its input. x [N, Co, Ho, Wo],
/// w [Co, Ci, K, K] -> [N, Ci, out_h, out_w].
template <typename T>
BasicTensor<T> conv_transpose2d(const BasicTensor<T>& x, const BasicTensor<T>& w, ConvGeometry geo,
                                int out_h, int out_w);
/// Adjoint of conv2d with respect to its weight: x [N, Ci, H, W],
/// g [N, Co, Ho, Wo] -> [Co, Ci, K, K].
template <typename T>
BasicTensor<T> conv2d_weight_grad(const BasicTensor<T>& x, const BasicTensor<T>& g, ConvGeometry geo,
                                  int kernel);

/// Nearest-neighbour 2x upsampling of [N, C, H, W].
template <typename T> BasicTensor<T> upsample_nearest2(const BasicTensor<T>& x);
/// 2x2 sum pooling; adjoint of upsample_nearest2.
template <typename T> BasicTensor<T> sum_pool2(const BasicTensor<T>& x);

/// Group normalization over [N, C, H, W] with per-channel affine
/// gamma/beta [C]. groups == C gives instance normalization.
template <typename T>
BasicTensor<T> group_norm(const BasicTensor<T>& x, int groups, const BasicTensor<T>& gamma,
                          const BasicTensor<T>& beta, T eps = T(1e-5));
inline int default_groups(int channels) { return channels < 32 ? channels : 32; }

}  // namespace syndiff
