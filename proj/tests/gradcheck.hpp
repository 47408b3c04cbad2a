#pragma once

// Central finite-difference oracle for 64-bit gradient checks. Independent of
// the reverse pass: it only evaluates the forward function.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <vector>

#include "syndiff/ops.hpp"
#include "syndiff/tensor.hpp"

namespace syndiff::testing {

using LossFn = std::function<Tensor64(const std::vector<Tensor64>&)>;

struct GradCheck {
  double rel_error = 0;
  double analytic_norm = 0;
  double numeric_norm = 0;
  std::size_t coords = 0;
};

inline Tensor64 random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1, double hi = 1) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = u(rng);
  return Tensor64(std::move(shape), std::move(v));
}

// Random values bounded away from zero so kinked ops are differentiable.
inline Tensor64 random_away_from_zero(Shape shape, std::mt19937_64& rng, double margin = 0.1) {
  std::uniform_real_distribution<double> u(margin, 1.0);
  std::bernoulli_distribution sign(0.5);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = sign(rng) ? u(rng) : -u(rng);
  return Tensor64(std::move(shape), std::move(v));
}

inline double eval_loss(const LossFn& f, const std::vector<Tensor64>& inputs) {
  NoGradGuard guard;
  return f(inputs).item();
}

/// Compares reverse-mode gradients of f at `inputs` against central
/// differences. `max_coords` > 0 samples that many coordinates at random.
inline GradCheck check_gradients(const LossFn& f, std::vector<Tensor64> inputs, double step = 1e-4,
                                 std::size_t max_coords = 0, std::uint64_t seed = 7) {
  for (auto& t : inputs) t.requires_grad_();
  std::vector<Tensor64> analytic;
  {
    Graph64 graph;
    GraphScope<double> scope(graph);
    auto loss = f(inputs);
    auto grads = backward(graph, loss);
    for (const auto& t : inputs) analytic.push_back(grads.of(t));
  }

  std::vector<std::pair<std::size_t, std::size_t>> coords;
  for (std::size_t i = 0; i < inputs.size(); ++i)
    for (std::size_t j = 0; j < inputs[i].numel(); ++j) coords.emplace_back(i, j);
  if (max_coords > 0 && coords.size() > max_coords) {
    std::mt19937_64 rng(seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(max_coords);
  }

  double diff2 = 0, num2 = 0, ana2 = 0;
  for (auto [i, j] : coords) {
    auto data = inputs[i].mutable_data();
    const double orig = data[j];
    data[j] = orig + step;
    const double fp = eval_loss(f, inputs);
    data[j] = orig - step;
    const double fm = eval_loss(f, inputs);
    data[j] = orig;
    const double numeric = (fp - fm) / (2 * step);
    const double a = analytic[i].data()[j];
    diff2 += (a - numeric) * (a - numeric);
    num2 += numeric * numeric;
    ana2 += a * a;
  }
  GradCheck out;
  out.coords = coords.size();
  out.analytic_norm = std::sqrt(ana2);
  out.numeric_norm = std::sqrt(num2);
  out.rel_error = std::sqrt(diff2) / std::max(out.numeric_norm, 1e-300);
  return out;
}

/// Scalarizes an op output with fixed random weights so the check exercises
/// the full vector-Jacobian product rather than only the sum direction.
inline Tensor64 weighted_sum(const Tensor64& y, std::uint64_t seed = 99) {
  std::mt19937_64 rng(seed);
  auto w = random_tensor(y.shape(), rng);
  return sum(mul(y, w));
}

}  // namespace syndiff::testing
