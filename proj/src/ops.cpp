#include "syndiff/ops.hpp"

#include <Eigen/Core>
#include <cmath>
#include <string>

#include "conv_kernels.hpp"

namespace syndiff {
namespace {

template <typename T>
using TT = BasicTensor<T>;
template <typename T>
using Inputs = std::span<const TT<T>>;
using Needed = std::span<const bool>;

template <typename T>
void require_same(const char* op, const TT<T>& a, const TT<T>& b) {
  if (a.shape() != b.shape())
    throw DimensionError(op, "shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

template <typename T>
void require_rank(const char* op, const TT<T>& x, int rank) {
  if (x.rank() != rank)
    throw DimensionError(op, "expected rank " + std::to_string(rank) + ", got " + shape_str(x.shape()));
}

template <typename T, typename F>
TT<T> map1(const TT<T>& x, F f) {
  auto src = x.data();
  std::vector<T> out(src.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(src[i]);
  return TT<T>(x.shape(), std::move(out));
}

template <typename T, typename F>
TT<T> map2(const TT<T>& a, const TT<T>& b, F f) {
  auto x = a.data();
  auto y = b.data();
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(x[i], y[i]);
  return TT<T>(a.shape(), std::move(out));
}

template <typename T>
T stable_sigmoid(T v) {
  if (v >= 0) return T(1) / (T(1) + std::exp(-v));
  const T e = std::exp(v);
  return e / (T(1) + e);
}

template <typename T>
T stable_softplus(T v) {
  return std::max(v, T(0)) + std::log1p(std::exp(-std::abs(v)));
}

}  // namespace

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same("add", a, b);
  return detail::record<T>("add", map2(a, b, [](T x, T y) { return x + y; }), {a, b},
                           [](const TT<T>& g, const TT<T>&, Inputs<T>, Needed) {
                             return std::vector<TT<T>>{g, g};
                           });
}

template <typename T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same("sub", a, b);
  return detail::record<T>("sub", map2(a, b, [](T x, T y) { return x - y; }), {a, b},
                           [](const TT<T>& g, const TT<T>&, Inputs<T>, Needed need) {
                             return std::vector<TT<T>>{g, need[1] ? neg(g) : TT<T>()};
                           });
}

template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same("mul", a, b);
  return detail::record<T>("mul", map2(a, b, [](T x, T y) { return x * y; }), {a, b},
                           [](const TT<T>& g, const TT<T>&, Inputs<T> in, Needed need) {
                             return std::vector<TT<T>>{need[0] ? mul(g, in[1]) : TT<T>(),
                                                       need[1] ? mul(g, in[0]) : TT<T>()};
                           });
}

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& x, T factor) {
  return detail::record<T>("scale", map1(x, [factor](T v) { return v * factor; }), {x},
                           [factor](const TT<T>& g, const TT<T>&, Inputs<T>, Needed) {
                             return std::vector<TT<T>>{scale(g, factor)};
                           });
}

template <typename T>
BasicTensor<T> add_scalar(const BasicTensor<T>& x, T value) {
  return detail::record<T>("add_scalar", map1(x, [value](T v) { return v + value; }), {x},
                           [](const TT<T>& g, const TT<T>&, Inputs<T>, Needed) {
                             return std::vector<TT<T>>{g};
                           });
}

template <typename T>
BasicTensor<T> reciprocal(const BasicTensor<T>& x) {
  return detail::record<T>("reciprocal", map1(x, [](T v) { return T(1) / v; }), {x},
                           [](const TT<T>& g, const TT<T>& y, Inputs<T>, Needed) {
                             return std::vector<TT<T>>{neg(mul(g, square(y)))};
                           });
}

template <typename T>
BasicTensor<T> log(const BasicTensor<T>& x) {
  return detail::record<T>("log", map1(x, [](T v) { return std::log(v); }), {x},
                           [](const TT<T>& g, const TT<T>&, Inputs<T> in, Needed) {
                             return std::vector<TT<T>>{mul(g, reciprocal(in[0]))};
                           });
}

template <typename T>
BasicTensor<T> square(const BasicTensor<T>& x) {
  return detail::record<T>("square", map1(x, [](T v) { return v * v; }), {x},
                           [](const TT<T>& g, const TT<T>&, Inputs<T> in, Needed) {
                             return std::vector<TT<T>>{scale(mul(g, in[0]), T(2))};
                           });
}

template <typename T>
BasicTensor<T> abs(const BasicTensor<T>& x) {
  return detail::record<T>("abs", map1(x, [](T v) { return std::abs(v); }), {x},
                           [](const TT<T>& g, const TT<T>&, Inputs<T> in, Needed) {
                             auto sign = map1(in[0], [](T v) { return T((v > 0) - (v < 0)); });
                             return std::vector<TT<T>>{mul(g, sign)};
                           });
}

template <typename T>
BasicTensor<T> sigmoid(const BasicTensor<T>& x) {
  return detail::record<T>("sigmoid", map1(x, [](T v) { return stable_sigmoid(v); }), {x},
                           [](const TT<T>& g, const TT<T>& y, Inputs<T>, Needed) {
                             return std::vector<TT<T>>{mul(g, mul(y, add_scalar(neg(y), T(1))))};
                           });
}

template <typename T>
BasicTensor<T> tanh(const BasicTensor<T>& x) {
  return detail::record<T>("tanh", map1(x, [](T v) { return std::tanh(v); }), {x},
                           [](const TT<T>& g, const TT<T>& y, Inputs<T>, Needed) {
                             return std::vector<TT<T>>{mul(g, add_scalar(neg(square(y)), T(1)))};
                           });
}

template <typename T>
BasicTensor<T> softplus(const BasicTensor<T>& x) {
  return detail::record<T>("softplus", map1(x, [](T v) { return stable_softplus(v); }), {x},
                           [](const TT<T>& g, const TT<T>&, Inputs<T> in, Needed) {
                             return std::vector<TT<T>>{mul(g, sigmoid(in[0]))};
                           });
}

template <typename T>
BasicTensor<T> swish(const BasicTensor<T>& x) {
  return detail::record<T>(
      "swish", map1(x, [](T v) { return v * stable_sigmoid(v); }), {x},
      [](const TT<T>& g, const TT<T>&, Inputs<T> in, Needed) {
        // d/dx x*s(x) = s * (1 + x * (1 - s))
        auto s = sigmoid(in[0]);
        auto d = mul(s, add_scalar(mul(in[0], add_scalar(neg(s), T(1))), T(1)));
        return std::vector<TT<T>>{mul(g, d)};
      });
}

template <typename T>
BasicTensor<T> leaky_relu(const BasicTensor<T>& x, T slope) {
  return detail::record<T>("leaky_relu", map1(x, [slope](T v) { return v > 0 ? v : v * slope; }), {x},
                           [slope](const TT<T>& g, const TT<T>&, Inputs<T> in, Needed) {
                             auto mask = map1(in[0], [slope](T v) { return v > 0 ? T(1) : slope; });
                             return std::vector<TT<T>>{mul(g, mask)};
                           });
}

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& x) {
  T acc = 0;
  for (T v : x.data()) acc += v;
  return detail::record<T>("sum", TT<T>::scalar(acc), {x},
                           [](const TT<T>& g, const TT<T>&, Inputs<T> in, Needed) {
                             return std::vector<TT<T>>{expand(g, in[0].shape())};
                           });
}

template <typename T>
BasicTensor<T> mean(const BasicTensor<T>& x) {
  return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

template <typename T>
BasicTensor<T> sum_per_sample(const BasicTensor<T>& x) {
  if (x.rank() < 1) throw DimensionError("sum_per_sample", "needs a batch axis");
  const int n = x.dim(0);
  const std::size_t per = x.numel() / static_cast<std::size_t>(n);
  std::vector<T> out(static_cast<std::size_t>(n), T(0));
  auto src = x.data();
  for (int b = 0; b < n; ++b) {
    T acc = 0;
    for (std::size_t i = 0; i < per; ++i) acc += src[b * per + i];
    out[static_cast<std::size_t>(b)] = acc;
  }
  return detail::record<T>("sum_per_sample", TT<T>({n}, std::move(out)), {x},
                           [](const TT<T>& g, const TT<T>&, Inputs<T> in, Needed) {
                             return std::vector<TT<T>>{expand_per_sample(g, in[0].shape())};
                           });
}

template <typename T>
BasicTensor<T> expand(const BasicTensor<T>& s, const Shape& shape) {
  if (s.numel() != 1) throw DimensionError("expand", "source " + shape_str(s.shape()) + " is not a scalar");
  return detail::record<T>("expand", TT<T>::full(shape, s.data()[0]), {s},
                           [](const TT<T>& g, const TT<T>&, Inputs<T> in, Needed) {
                             return std::vector<TT<T>>{reshape(sum(g), in[0].shape())};
                           });
}

template <typename T>
BasicTensor<T> expand_per_sample(const BasicTensor<T>& v, const Shape& shape) {
  if (v.rank() != 1 || shape.empty() || shape[0] != v.dim(0))
    throw DimensionError("expand_per_sample", shape_str(v.shape()) + " -> " + shape_str(shape));
  const std::size_t per = shape_numel(shape) / static_cast<std::size_t>(shape[0]);
  std::vector<T> out(shape_numel(shape));
  auto src = v.data();
  for (std::size_t b = 0; b < src.size(); ++b)
    std::fill_n(out.begin() + static_cast<std::ptrdiff_t>(b * per), per, src[b]);
  return detail::record<T>("expand_per_sample", TT<T>(shape, std::move(out)), {v},
                           [](const TT<T>& g, const TT<T>&, Inputs<T>, Needed) {
                             return std::vector<TT<T>>{sum_per_sample(g)};
                           });
}

template <typename T>
BasicTensor<T> reshape(const BasicTensor<T>& x, const Shape& shape) {
  if (shape_numel(shape) != x.numel())
    throw DimensionError("reshape", shape_str(x.shape()) + " -> " + shape_str(shape));
  std::vector<T> data(x.data().begin(), x.data().end());
  return detail::record<T>("reshape", TT<T>(shape, std::move(data)), {x},
                           [](const TT<T>& g, const TT<T>&, Inputs<T> in, Needed) {
                             return std::vector<TT<T>>{reshape(g, in[0].shape())};
                           });
}

template <typename T>
BasicTensor<T> transpose2d(const BasicTensor<T>& x) {
  require_rank("transpose2d", x, 2);
  const int r = x.dim(0), c = x.dim(1);
  std::vector<T> out(x.numel());
  auto src = x.data();
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) out[static_cast<std::size_t>(j) * r + i] = src[static_cast<std::size_t>(i) * c + j];
  return detail::record<T>("transpose2d", TT<T>({c, r}, std::move(out)), {x},
                           [](const TT<T>& g, const TT<T>&, Inputs<T>, Needed) {
                             return std::vector<TT<T>>{transpose2d(g)};
                           });
}

namespace {

// Copies `count` channels of src (c_src channels) starting at src_begin into
// dst (c_dst channels) starting at dst_begin, for every sample.
template <typename T>
void copy_channels(std::span<const T> src, int c_src, int src_begin, std::span<T> dst, int c_dst,
                   int dst_begin, int count, int n, std::size_t plane) {
  for (int b = 0; b < n; ++b)
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>((static_cast<std::size_t>(b) * c_src + src_begin) * plane),
                static_cast<std::size_t>(count) * plane,
                dst.begin() + static_cast<std::ptrdiff_t>((static_cast<std::size_t>(b) * c_dst + dst_begin) * plane));
}

Shape with_channels(Shape s, int c) {
  s[1] = c;
  return s;
}

std::size_t plane_of(const Shape& s) {
  std::size_t p = 1;
  for (std::size_t i = 2; i < s.size(); ++i) p *= static_cast<std::size_t>(s[i]);
  return p;
}

}  // namespace

template <typename T>
BasicTensor<T> concat_channels(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.rank() < 2 || a.rank() != b.rank() || a.dim(0) != b.dim(0) ||
      !std::equal(a.shape().begin() + 2, a.shape().end(), b.shape().begin() + 2))
    throw DimensionError("concat_channels", shape_str(a.shape()) + " with " + shape_str(b.shape()));
  const int ca = a.dim(1), cb = b.dim(1), n = a.dim(0);
  const std::size_t plane = plane_of(a.shape());
  TT<T> out(with_channels(a.shape(), ca + cb));
  copy_channels<T>(a.data(), ca, 0, out.mutable_data(), ca + cb, 0, ca, n, plane);
  copy_channels<T>(b.data(), cb, 0, out.mutable_data(), ca + cb, ca, cb, n, plane);
  return detail::record<T>("concat_channels", out, {a, b},
                           [ca, cb](const TT<T>& g, const TT<T>&, Inputs<T>, Needed need) {
                             return std::vector<TT<T>>{need[0] ? slice_channels(g, 0, ca) : TT<T>(),
                                                       need[1] ? slice_channels(g, ca, cb) : TT<T>()};
                           });
}

template <typename T>
BasicTensor<T> slice_channels(const BasicTensor<T>& x, int begin, int count) {
  if (x.rank() < 2 || begin < 0 || count <= 0 || begin + count > x.dim(1))
    throw DimensionError("slice_channels", "range [" + std::to_string(begin) + ", +" +
                                               std::to_string(count) + ") of " + shape_str(x.shape()));
  const int c = x.dim(1);
  TT<T> out(with_channels(x.shape(), count));
  copy_channels<T>(x.data(), c, begin, out.mutable_data(), count, 0, count, x.dim(0), plane_of(x.shape()));
  return detail::record<T>("slice_channels", out, {x},
                           [begin, c](const TT<T>& g, const TT<T>&, Inputs<T>, Needed) {
                             return std::vector<TT<T>>{pad_channels(g, begin, c)};
                           });
}

template <typename T>
BasicTensor<T> pad_channels(const BasicTensor<T>& x, int begin, int total) {
  if (x.rank() < 2 || begin < 0 || begin + x.dim(1) > total)
    throw DimensionError("pad_channels", shape_str(x.shape()) + " into " + std::to_string(total));
  const int count = x.dim(1);
  TT<T> out(with_channels(x.shape(), total));
  copy_channels<T>(x.data(), count, 0, out.mutable_data(), total, begin, count, x.dim(0), plane_of(x.shape()));
  return detail::record<T>("pad_channels", out, {x},
                           [begin, count](const TT<T>& g, const TT<T>&, Inputs<T>, Needed) {
                             return std::vector<TT<T>>{slice_channels(g, begin, count)};
                           });
}

namespace {

void check_bias_shapes(const char* op, const Shape& bias, const Shape& full) {
  const bool ok = full.size() >= 2 &&
                  ((bias.size() == 1 && bias[0] == full[1]) ||
                   (bias.size() == 2 && bias[0] == full[0] && bias[1] == full[1]));
  if (!ok) throw DimensionError(op, "bias " + shape_str(bias) + " against " + shape_str(full));
}

}  // namespace

template <typename T>
BasicTensor<T> broadcast_bias(const BasicTensor<T>& bias, const Shape& shape) {
  check_bias_shapes("broadcast_bias", bias.shape(), shape);
  const bool per_sample = bias.rank() == 2;
  const int n = shape[0], c = shape[1];
  const std::size_t plane = plane_of(shape);
  std::vector<T> out(shape_numel(shape));
  auto src = bias.data();
  for (int b = 0; b < n; ++b)
    for (int ch = 0; ch < c; ++ch) {
      const T v = src[per_sample ? static_cast<std::size_t>(b) * c + ch : static_cast<std::size_t>(ch)];
      std::fill_n(out.begin() + static_cast<std::ptrdiff_t>((static_cast<std::size_t>(b) * c + ch) * plane), plane, v);
    }
  return detail::record<T>("broadcast_bias", TT<T>(shape, std::move(out)), {bias},
                           [](const TT<T>& g, const TT<T>&, Inputs<T> in, Needed) {
                             return std::vector<TT<T>>{reduce_bias(g, in[0].shape())};
                           });
}

template <typename T>
BasicTensor<T> reduce_bias(const BasicTensor<T>& g, const Shape& bias_shape) {
  check_bias_shapes("reduce_bias", bias_shape, g.shape());
  const bool per_sample = bias_shape.size() == 2;
  const int n = g.dim(0), c = g.dim(1);
  const std::size_t plane = plane_of(g.shape());
  std::vector<T> out(shape_numel(bias_shape), T(0));
  auto src = g.data();
  for (int b = 0; b < n; ++b)
    for (int ch = 0; ch < c; ++ch) {
      T acc = 0;
      const std::size_t base = (static_cast<std::size_t>(b) * c + ch) * plane;
      for (std::size_t i = 0; i < plane; ++i) acc += src[base + i];
      out[per_sample ? static_cast<std::size_t>(b) * c + ch : static_cast<std::size_t>(ch)] += acc;
    }
  Shape full = g.shape();
  return detail::record<T>("reduce_bias", TT<T>(bias_shape, std::move(out)), {g},
                           [full](const TT<T>& gz, const TT<T>&, Inputs<T>, Needed) {
                             return std::vector<TT<T>>{broadcast_bias(gz, full)};
                           });
}

template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  if (a.dim(1) != b.dim(0))
    throw DimensionError("matmul", "inner dimensions differ: " + shape_str(a.shape()) + " x " +
                                       shape_str(b.shape()));
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  TT<T> out({m, n});
  Eigen::Map<Mat>(out.mutable_data().data(), m, n).noalias() =
      Eigen::Map<const Mat>(a.data().data(), m, k) * Eigen::Map<const Mat>(b.data().data(), k, n);
  return detail::record<T>("matmul", out, {a, b},
                           [](const TT<T>& g, const TT<T>&, Inputs<T> in, Needed need) {
                             return std::vector<TT<T>>{
                                 need[0] ? matmul(g, transpose2d(in[1])) : TT<T>(),
                                 need[1] ? matmul(transpose2d(in[0]), g) : TT<T>()};
                           });
}

// ---------------------------------------------------------------------------
// Convolutions

namespace {

int conv_out(int in, int kernel, ConvGeometry geo) { return (in + 2 * geo.pad - kernel) / geo.stride + 1; }

template <typename T>
kernels::ConvDims conv_dims(const char* op, const Shape& x, const Shape& w, ConvGeometry geo) {
  if (x.size() != 4 || w.size() != 4 || w[2] != w[3] || x[1] != w[1])
    throw DimensionError(op, "input " + shape_str(x) + " incompatible with weight " + shape_str(w));
  if (geo.stride < 1 || geo.pad < 0) throw DimensionError(op, "invalid stride/padding");
  kernels::ConvDims d{x[0], x[1], x[2], x[3], w[0], w[2], geo.stride, geo.pad, 0, 0};
  d.ho = conv_out(d.h, d.kernel, geo);
  d.wo = conv_out(d.w, d.kernel, geo);
  if (d.ho < 1 || d.wo < 1) throw DimensionError(op, "kernel larger than padded input " + shape_str(x));
  return d;
}

}  // namespace

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& w, ConvGeometry geo) {
  const auto d = conv_dims<T>("conv2d", x.shape(), w.shape(), geo);
  TT<T> out({d.n, d.co, d.ho, d.wo});
  kernels::conv2d_forward(d, x.data().data(), w.data().data(), out.mutable_data().data());
  return detail::record<T>(
      "conv2d", out, {x, w}, [geo, d](const TT<T>& g, const TT<T>&, Inputs<T> in, Needed need) {
        return std::vector<TT<T>>{need[0] ? conv_transpose2d(g, in[1], geo, d.h, d.w) : TT<T>(),
                                  need[1] ? conv2d_weight_grad(in[0], g, geo, d.kernel) : TT<T>()};
      });
}

template <typename T>
BasicTensor<T> conv_transpose2d(const BasicTensor<T>& x, const BasicTensor<T>& w, ConvGeometry geo,
                                int out_h, int out_w) {
  require_rank("conv_transpose2d", x, 4);
  require_rank("conv_transpose2d", w, 4);
  if (x.dim(1) != w.dim(0))
    throw DimensionError("conv_transpose2d",
                         "input " + shape_str(x.shape()) + " incompatible with weight " + shape_str(w.shape()));
  const auto d = conv_dims<T>("conv_transpose2d", {x.dim(0), w.dim(1), out_h, out_w}, w.shape(), geo);
  if (d.ho != x.dim(2) || d.wo != x.dim(3))
    throw DimensionError("conv_transpose2d", "output " + std::to_string(out_h) + "x" + std::to_string(out_w) +
                                                 " does not invert " + shape_str(x.shape()));
  TT<T> out({d.n, d.ci, d.h, d.w});
  kernels::conv2d_input_grad(d, x.data().data(), w.data().data(), out.mutable_data().data());
  return detail::record<T>(
      "conv_transpose2d", out, {x, w}, [geo, d](const TT<T>& g, const TT<T>&, Inputs<T> in, Needed need) {
        return std::vector<TT<T>>{need[0] ? conv2d(g, in[1], geo) : TT<T>(),
                                  need[1] ? conv2d_weight_grad(g, in[0], geo, d.kernel) : TT<T>()};
      });
}

template <typename T>
BasicTensor<T> conv2d_weight_grad(const BasicTensor<T>& x, const BasicTensor<T>& g, ConvGeometry geo,
                                  int kernel) {
  require_rank("conv2d_weight_grad", x, 4);
  require_rank("conv2d_weight_grad", g, 4);
  const auto d = conv_dims<T>("conv2d_weight_grad", x.shape(), {g.dim(1), x.dim(1), kernel, kernel}, geo);
  if (d.n != g.dim(0) || d.ho != g.dim(2) || d.wo != g.dim(3))
    throw DimensionError("conv2d_weight_grad", "gradient " + shape_str(g.shape()) +
                                                   " does not match input " + shape_str(x.shape()));
  TT<T> out({d.co, d.ci, kernel, kernel});
  kernels::conv2d_weight_grad(d, x.data().data(), g.data().data(), out.mutable_data().data());
  return detail::record<T>(
      "conv2d_weight_grad", out, {x, g}, [geo, d](const TT<T>& gu, const TT<T>&, Inputs<T> in, Needed need) {
        return std::vector<TT<T>>{need[0] ? conv_transpose2d(in[1], gu, geo, d.h, d.w) : TT<T>(),
                                  need[1] ? conv2d(in[0], gu, geo) : TT<T>()};
      });
}

template <typename T>
BasicTensor<T> upsample_nearest2(const BasicTensor<T>& x) {
  require_rank("upsample_nearest2", x, 4);
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  TT<T> out({n, c, 2 * h, 2 * w});
  auto src = x.data();
  auto dst = out.mutable_data();
  for (std::size_t p = 0; p < static_cast<std::size_t>(n) * c; ++p)
    for (int y = 0; y < 2 * h; ++y)
      for (int xx = 0; xx < 2 * w; ++xx)
        dst[(p * 2 * h + y) * 2 * w + xx] = src[(p * h + y / 2) * w + xx / 2];
  return detail::record<T>("upsample_nearest2", out, {x},
                           [](const TT<T>& g, const TT<T>&, Inputs<T>, Needed) {
                             return std::vector<TT<T>>{sum_pool2(g)};
                           });
}

template <typename T>
BasicTensor<T> sum_pool2(const BasicTensor<T>& x) {
  require_rank("sum_pool2", x, 4);
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h % 2 || w % 2) throw DimensionError("sum_pool2", "odd spatial size " + shape_str(x.shape()));
  TT<T> out({n, c, h / 2, w / 2});
  auto src = x.data();
  auto dst = out.mutable_data();
  for (std::size_t p = 0; p < static_cast<std::size_t>(n) * c; ++p)
    for (int y = 0; y < h; ++y)
      for (int xx = 0; xx < w; ++xx) dst[(p * (h / 2) + y / 2) * (w / 2) + xx / 2] += src[(p * h + y) * w + xx];
  return detail::record<T>("sum_pool2", out, {x},
                           [](const TT<T>& g, const TT<T>&, Inputs<T>, Needed) {
                             return std::vector<TT<T>>{upsample_nearest2(g)};
                           });
}

// ---------------------------------------------------------------------------
// Normalization

template <typename T>
BasicTensor<T> group_norm(const BasicTensor<T>& x, int groups, const BasicTensor<T>& gamma,
                          const BasicTensor<T>& beta, T eps) {
  require_rank("group_norm", x, 4);
  const int n = x.dim(0), c = x.dim(1);
  if (groups < 1 || c % groups != 0)
    throw DimensionError("group_norm", std::to_string(groups) + " groups for " + std::to_string(c) + " channels");
  if (gamma.shape() != Shape{c} || beta.shape() != Shape{c})
    throw DimensionError("group_norm", "affine parameters must be [" + std::to_string(c) + "]");
  const std::size_t plane = plane_of(x.shape());
  const std::size_t cpg = static_cast<std::size_t>(c / groups);
  const std::size_t m = cpg * plane;

  auto src = x.data();
  auto gm = gamma.data();
  auto bt = beta.data();
  std::vector<T> normalized(src.size());
  std::vector<T> inv_std(static_cast<std::size_t>(n) * groups);
  TT<T> out(x.shape());
  auto dst = out.mutable_data();
  for (int b = 0; b < n; ++b)
    for (int grp = 0; grp < groups; ++grp) {
      const std::size_t base = (static_cast<std::size_t>(b) * c + grp * cpg) * plane;
      double mu = 0;
      for (std::size_t i = 0; i < m; ++i) mu += src[base + i];
      mu /= static_cast<double>(m);
      double var = 0;
      for (std::size_t i = 0; i < m; ++i) {
        const double dlt = src[base + i] - mu;
        var += dlt * dlt;
      }
      var /= static_cast<double>(m);
      const T is = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
      inv_std[static_cast<std::size_t>(b) * groups + grp] = is;
      for (std::size_t i = 0; i < m; ++i) {
        const std::size_t ch = grp * cpg + i / plane;
        const T xh = (src[base + i] - static_cast<T>(mu)) * is;
        normalized[base + i] = xh;
        dst[base + i] = gm[ch] * xh + bt[ch];
      }
    }

  auto fn = [n, c, groups, plane, cpg, m, normalized = std::move(normalized), inv_std = std::move(inv_std)](
                const TT<T>& g, const TT<T>&, Inputs<T> in, Needed need) {
    auto gd = g.data();
    auto gm = in[1].data();
    TT<T> dx(in[0].shape());
    TT<T> dgamma({c}), dbeta({c});
    auto dxd = dx.mutable_data();
    auto dgd = dgamma.mutable_data();
    auto dbd = dbeta.mutable_data();
    for (int b = 0; b < n; ++b)
      for (int grp = 0; grp < groups; ++grp) {
        const std::size_t base = (static_cast<std::size_t>(b) * c + grp * cpg) * plane;
        double mean_d = 0, mean_dx = 0;
        for (std::size_t i = 0; i < m; ++i) {
          const std::size_t ch = grp * cpg + i / plane;
          const T xh = normalized[base + i];
          dgd[ch] += gd[base + i] * xh;
          dbd[ch] += gd[base + i];
          const double dxh = static_cast<double>(gd[base + i]) * gm[ch];
          mean_d += dxh;
          mean_dx += dxh * xh;
        }
        mean_d /= static_cast<double>(m);
        mean_dx /= static_cast<double>(m);
        const T is = inv_std[static_cast<std::size_t>(b) * groups + grp];
        for (std::size_t i = 0; i < m; ++i) {
          const std::size_t ch = grp * cpg + i / plane;
          const double dxh = static_cast<double>(gd[base + i]) * gm[ch];
          dxd[base + i] = static_cast<T>(is * (dxh - mean_d - normalized[base + i] * mean_dx));
        }
      }
    return std::vector<TT<T>>{need[0] ? dx : TT<T>(), need[1] ? dgamma : TT<T>(), need[2] ? dbeta : TT<T>()};
  };
  return detail::record<T>("group_norm", out, {x, gamma, beta}, std::move(fn), false);
}

// ---------------------------------------------------------------------------

#define SYNDIFF_INSTANTIATE_OPS(T)                                                                      \
  template BasicTensor<T> add(const BasicTensor<T>&, const BasicTensor<T>&);                           \
  template BasicTensor<T> sub(const BasicTensor<T>&, const BasicTensor<T>&);                           \
  template BasicTensor<T> mul(const BasicTensor<T>&, const BasicTensor<T>&);                           \
  template BasicTensor<T> scale(const BasicTensor<T>&, T);                                             \
  template BasicTensor<T> add_scalar(const BasicTensor<T>&, T);                                        \
  template BasicTensor<T> reciprocal(const BasicTensor<T>&);                                           \
  template BasicTensor<T> log(const BasicTensor<T>&);                                                  \
  template BasicTensor<T> square(const BasicTensor<T>&);                                               \
  template BasicTensor<T> abs(const BasicTensor<T>&);                                                  \
  template BasicTensor<T> sigmoid(const BasicTensor<T>&);                                              \
  template BasicTensor<T> tanh(const BasicTensor<T>&);                                                 \
  template BasicTensor<T> softplus(const BasicTensor<T>&);                                             \
  template BasicTensor<T> swish(const BasicTensor<T>&);                                                \
  template BasicTensor<T> leaky_relu(const BasicTensor<T>&, T);                                        \
  template BasicTensor<T> sum(const BasicTensor<T>&);                                                  \
  template BasicTensor<T> mean(const BasicTensor<T>&);                                                 \
  template BasicTensor<T> sum_per_sample(const BasicTensor<T>&);                                       \
  template BasicTensor<T> expand(const BasicTensor<T>&, const Shape&);                                 \
  template BasicTensor<T> expand_per_sample(const BasicTensor<T>&, const Shape&);                      \
  template BasicTensor<T> reshape(const BasicTensor<T>&, const Shape&);                                \
  template BasicTensor<T> transpose2d(const BasicTensor<T>&);                                          \
  template BasicTensor<T> concat_channels(const BasicTensor<T>&, const BasicTensor<T>&);               \
  template BasicTensor<T> slice_channels(const BasicTensor<T>&, int, int);                             \
  template BasicTensor<T> pad_channels(const BasicTensor<T>&, int, int);                               \
  template BasicTensor<T> broadcast_bias(const BasicTensor<T>&, const Shape&);                         \
  template BasicTensor<T> reduce_bias(const BasicTensor<T>&, const Shape&);                            \
  template BasicTensor<T> matmul(const BasicTensor<T>&, const BasicTensor<T>&);                        \
  template BasicTensor<T> conv2d(const BasicTensor<T>&, const BasicTensor<T>&, ConvGeometry);          \
  template BasicTensor<T> conv_transpose2d(const BasicTensor<T>&, const BasicTensor<T>&, ConvGeometry, \
                                           int, int);                                                  \
  template BasicTensor<T> conv2d_weight_grad(const BasicTensor<T>&, const BasicTensor<T>&,            \
                                             ConvGeometry, int);                                       \
  template BasicTensor<T> upsample_nearest2(const BasicTensor<T>&);                                    \
  template BasicTensor<T> sum_pool2(const BasicTensor<T>&);                                            \
  template BasicTensor<T> group_norm(const BasicTensor<T>&, int, const BasicTensor<T>&,               \
                                     const BasicTensor<T>&, T);

SYNDIFF_INSTANTIATE_OPS(float)
SYNDIFF_INSTANTIATE_OPS(double)

}  // namespace syndiff
