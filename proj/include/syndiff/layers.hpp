#pragma once

#include <cmath>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "syndiff/ops.hpp"
#include "syndiff/random.hpp"
#include "syndiff/tensor.hpp"

namespace syndiff {

template <typename T>
struct NamedParameter {
  std::string name;
  BasicTensor<T> value;
};

/// Ordered registry of a network's trainable tensors. Every tensor is a
/// grad leaf; layers hold handles that share storage with the registry.
template <typename T>
class ParameterSet {
 public:
  BasicTensor<T> add(std::string name, Shape shape, std::vector<T> values) {
    if (index_.count(name)) throw std::logic_error("duplicate parameter name: " + name);
    BasicTensor<T> t(std::move(shape), std::move(values));
    t.requires_grad_();
    index_.emplace(name, entries_.size());
    entries_.push_back({std::move(name), t});
    return t;
  }

  const std::vector<NamedParameter<T>>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }

  std::vector<BasicTensor<T>> tensors() const {
    std::vector<BasicTensor<T>> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.push_back(e.value);
    return out;
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.value.numel();
    return n;
  }

  const BasicTensor<T>& at(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) throw std::out_of_range("no parameter named " + std::string(name));
    return entries_[it->second].value;
  }

 private:
  std::vector<NamedParameter<T>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

namespace init {

/// U(-b, b) with b = sqrt(3 / fan_in): unit-variance outputs for unit-variance inputs.
template <typename T>
std::vector<T> fan_in_uniform(std::size_t count, double fan_in, Rng& rng) {
  const double bound = std::sqrt(3.0 / fan_in);
  std::uniform_real_distribution<double> u(-bound, bound);
  std::vector<T> v(count);
  for (auto& x : v) x = static_cast<T>(u(rng));
  return v;
}

template <typename T>
std::vector<T> constant(std::size_t count, T value) {
  return std::vector<T>(count, value);
}

}  // namespace init

template <typename T>
struct Conv2d {
  BasicTensor<T> weight;
  BasicTensor<T> bias;
  ConvGeometry geo;

  Conv2d() = default;
  Conv2d(ParameterSet<T>& ps, const std::string& name, int in, int out, int kernel, ConvGeometry g, bool with_bias,
         Rng& rng)
      : geo(g) {
    const std::size_t n = static_cast<std::size_t>(out) * in * kernel * kernel;
    weight = ps.add(name + ".weight", {out, in, kernel, kernel},
                    init::fan_in_uniform<T>(n, static_cast<double>(in) * kernel * kernel, rng));
    if (with_bias) bias = ps.add(name + ".bias", {out}, init::constant<T>(out, T(0)));
  }

  BasicTensor<T> operator()(const BasicTensor<T>& x) const {
    auto y = conv2d(x, weight, geo);
    return bias.defined() ? add_bias(y, bias) : y;
  }
};

/// Learned 2x upsampling: adjoint of a strided conv, output twice the input size.
template <typename T>
struct ConvTranspose2d {
  BasicTensor<T> weight;  // [in, out, K, K]
  BasicTensor<T> bias;
  ConvGeometry geo;

  ConvTranspose2d() = default;
  ConvTranspose2d(ParameterSet<T>& ps, const std::string& name, int in, int out, int kernel, ConvGeometry g,
                  bool with_bias, Rng& rng)
      : geo(g) {
    const std::size_t n = static_cast<std::size_t>(out) * in * kernel * kernel;
    const double fan_in = static_cast<double>(in) * kernel * kernel / (g.stride * g.stride);
    weight = ps.add(name + ".weight", {in, out, kernel, kernel}, init::fan_in_uniform<T>(n, fan_in, rng));
    if (with_bias) bias = ps.add(name + ".bias", {out}, init::constant<T>(out, T(0)));
  }

  BasicTensor<T> operator()(const BasicTensor<T>& x) const {
    auto y = conv_transpose2d(x, weight, geo, x.dim(2) * geo.stride, x.dim(3) * geo.stride);
    return bias.defined() ? add_bias(y, bias) : y;
  }
};

template <typename T>
struct Linear {
  BasicTensor<T> weight;  // [in, out]
  BasicTensor<T> bias;    // [out]

  Linear() = default;
  Linear(ParameterSet<T>& ps, const std::string& name, int in, int out, Rng& rng) {
    weight = ps.add(name + ".weight", {in, out},
                    init::fan_in_uniform<T>(static_cast<std::size_t>(in) * out, in, rng));
    bias = ps.add(name + ".bias", {out}, init::constant<T>(out, T(0)));
  }

  /// [M, in] -> [M, out]
  BasicTensor<T> operator()(const BasicTensor<T>& x) const { return add_bias(matmul(x, weight), bias); }
};

template <typename T>
struct Norm {
  BasicTensor<T> gamma;
  BasicTensor<T> beta;
  int groups = 1;

  Norm() = default;
  Norm(ParameterSet<T>& ps, const std::string& name, int channels, int group_count) : groups(group_count) {
    gamma = ps.add(name + ".gamma", {channels}, init::constant<T>(channels, T(1)));
    beta = ps.add(name + ".beta", {channels}, init::constant<T>(channels, T(0)));
  }

  BasicTensor<T> operator()(const BasicTensor<T>& x) const { return group_norm(x, groups, gamma, beta); }
};

}  // namespace syndiff
