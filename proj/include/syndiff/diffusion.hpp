#pragma once

#include <functional>

#include "syndiff/random.hpp"
#include "syndiff/schedule.hpp"
#include "syndiff/tensor.hpp"

namespace syndiff {

/// Gaussian q(x_{t-k} | x_t, x_0): mean tensor and scalar variance.
template <typename T>
struct PosteriorParams {
  BasicTensor<T> mean;
  double variance = 0.0;
};

/// Scalar coefficients of the posterior at grid time t:
/// mean = x0_coef * x0 + xt_coef * x_t.
struct PosteriorCoefficients {
  double x0_coef;
  double xt_coef;
  double variance;
};

PosteriorCoefficients posterior_coefficients(const FastSchedule& schedule, int t);

/// x_t given x_{t-k}: sqrt(1 - gamma_t) x_prev + sqrt(gamma_t) eps.
template <typename T>
BasicTensor<T> forward_step(const BasicTensor<T>& x_prev, int t, const FastSchedule& schedule, Rng& rng);

/// x_t given x_0: sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps.
template <typename T>
BasicTensor<T> forward_marginal(const BasicTensor<T>& x0, int t, const FastSchedule& schedule, Rng& rng);

/// Same as forward_marginal with the noise supplied by the caller.
template <typename T>
BasicTensor<T> forward_marginal_with_noise(const BasicTensor<T>& x0, const BasicTensor<T>& eps, int t,
                                           const FastSchedule& schedule);

/// Differentiable in both x_t and x0_est.
template <typename T>
PosteriorParams<T> posterior_params(const BasicTensor<T>& x_t, const BasicTensor<T>& x0_est, int t,
                                    const FastSchedule& schedule);

/// mean + sqrt(variance) eps. Draws nothing when the variance is zero.
template <typename T>
BasicTensor<T> posterior_sample(const PosteriorParams<T>& p, Rng& rng);

/// Conditional x0 estimator: (x_t, y, t) -> x0 estimate.
template <typename T>
using DenoiserFn = std::function<BasicTensor<T>(const BasicTensor<T>& x_t, const BasicTensor<T>& y, int t)>;

/// Ancestral sampler over the fast grid. Starts from x_T ~ N(0, I) shaped
/// like y and calls `generator` exactly T/k times. Runs without recording.
template <typename T>
BasicTensor<T> reverse_sample(const DenoiserFn<T>& generator, const BasicTensor<T>& y, const FastSchedule& schedule,
                              Rng& rng);

/// Noise predictor for the k = 1 baseline: (x_t, t) -> eps estimate.
template <typename T>
using NoisePredictorFn = std::function<BasicTensor<T>(const BasicTensor<T>& x_t, int t)>;

/// (x_t - gamma_t / sqrt(1 - alpha_bar_t) * eps_hat) / sqrt(alpha_t). Requires k = 1.
template <typename T>
BasicTensor<T> ddpm_mean(const NoisePredictorFn<T>& eps_net, const BasicTensor<T>& x_t, int t,
                         const FastSchedule& schedule);

/// One ancestral step of the baseline: ddpm_mean plus sqrt(gamma_t) noise, no noise at t = 1.
template <typename T>
BasicTensor<T> ddpm_step(const NoisePredictorFn<T>& eps_net, const BasicTensor<T>& x_t, int t,
                         const FastSchedule& schedule, Rng& rng);

/// Full baseline chain from x_T ~ N(0, I) of the given shape.
template <typename T>
BasicTensor<T> ddpm_sample(const NoisePredictorFn<T>& eps_net, const Shape& shape, const FastSchedule& schedule,
                           Rng& rng);

}  // namespace syndiff
