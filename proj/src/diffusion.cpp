#include "syndiff/diffusion.hpp"

#include <cmath>

#include "syndiff/ops.hpp"

namespace syndiff {

namespace {

void require_regular(const FastSchedule& schedule, const char* op) {
  if (schedule.step() != 1)
    throw ScheduleError(std::string(op) + " requires a k=1 schedule, got k=" + std::to_string(schedule.step()));
}

}  // namespace

PosteriorCoefficients posterior_coefficients(const FastSchedule& schedule, int t) {
  schedule.require_on_grid(t);
  const int k = schedule.step();
  if (t == k) return {1.0, 0.0, 0.0};
  const double g = schedule.gamma(t);
  const double ab = schedule.alpha_bar(t);
  const double ab_prev = schedule.alpha_bar(t - k);
  const double denom = 1.0 - ab;
  PosteriorCoefficients c;
  c.x0_coef = std::sqrt(ab_prev) * g / denom;
  c.xt_coef = std::sqrt(1.0 - g) * (1.0 - ab_prev) / denom;
  c.variance = g * (1.0 - ab_prev) / denom;
  return c;
}

template <typename T>
BasicTensor<T> forward_step(const BasicTensor<T>& x_prev, int t, const FastSchedule& schedule, Rng& rng) {
  const double g = schedule.gamma(t);
  auto eps = randn<T>(x_prev.shape(), rng);
  return add(scale(x_prev, static_cast<T>(std::sqrt(1.0 - g))), scale(eps, static_cast<T>(std::sqrt(g))));
}

template <typename T>
BasicTensor<T> forward_marginal_with_noise(const BasicTensor<T>& x0, const BasicTensor<T>& eps, int t,
                                           const FastSchedule& schedule) {
  schedule.require_on_grid(t);
  const double ab = schedule.alpha_bar(t);
  return add(scale(x0, static_cast<T>(std::sqrt(ab))), scale(eps, static_cast<T>(std::sqrt(1.0 - ab))));
}

template <typename T>
BasicTensor<T> forward_marginal(const BasicTensor<T>& x0, int t, const FastSchedule& schedule, Rng& rng) {
  schedule.require_on_grid(t);
  auto eps = randn<T>(x0.shape(), rng);
  return forward_marginal_with_noise(x0, eps, t, schedule);
}

template <typename T>
PosteriorParams<T> posterior_params(const BasicTensor<T>& x_t, const BasicTensor<T>& x0_est, int t,
                                    const FastSchedule& schedule) {
  if (x_t.shape() != x0_est.shape())
    throw DimensionError("posterior_params", shape_str(x_t.shape()) + " vs " + shape_str(x0_est.shape()));
  const auto c = posterior_coefficients(schedule, t);
  PosteriorParams<T> p;
  if (c.xt_coef == 0.0) {
    p.mean = x0_est;
  } else {
    p.mean = add(scale(x0_est, static_cast<T>(c.x0_coef)), scale(x_t, static_cast<T>(c.xt_coef)));
  }
  p.variance = c.variance;
  return p;
}

template <typename T>
BasicTensor<T> posterior_sample(const PosteriorParams<T>& p, Rng& rng) {
  if (p.variance == 0.0) return p.mean;
  auto eps = randn<T>(p.mean.shape(), rng);
  return add(p.mean, scale(eps, static_cast<T>(std::sqrt(p.variance))));
}

template <typename T>
BasicTensor<T> reverse_sample(const DenoiserFn<T>& generator, const BasicTensor<T>& y, const FastSchedule& schedule,
                              Rng& rng) {
  NoGradGuard no_grad;
  auto x = randn<T>(y.shape(), rng);
  for (int t = schedule.total_steps(); t >= schedule.step(); t -= schedule.step()) {
    auto x0 = generator(x, y, t);
    if (x0.shape() != y.shape())
      throw DimensionError("reverse_sample", "generator returned " + shape_str(x0.shape()) + " for input " +
                                                 shape_str(y.shape()));
    x = posterior_sample(posterior_params(x, x0, t, schedule), rng);
  }
  return x;
}

template <typename T>
BasicTensor<T> ddpm_mean(const NoisePredictorFn<T>& eps_net, const BasicTensor<T>& x_t, int t,
                         const FastSchedule& schedule) {
  require_regular(schedule, "ddpm_mean");
  const double g = schedule.gamma(t);
  const double ab = schedule.alpha_bar(t);
  auto eps_hat = eps_net(x_t, t);
  if (eps_hat.shape() != x_t.shape())
    throw DimensionError("ddpm_mean", "noise estimate " + shape_str(eps_hat.shape()) + " for input " +
                                          shape_str(x_t.shape()));
  const double inv_sqrt_alpha = 1.0 / std::sqrt(1.0 - g);
  const double eps_coef = g / std::sqrt(1.0 - ab);
  return scale(sub(x_t, scale(eps_hat, static_cast<T>(eps_coef))), static_cast<T>(inv_sqrt_alpha));
}

template <typename T>
BasicTensor<T> ddpm_step(const NoisePredictorFn<T>& eps_net, const BasicTensor<T>& x_t, int t,
                         const FastSchedule& schedule, Rng& rng) {
  auto mean = ddpm_mean(eps_net, x_t, t, schedule);
  if (t == 1) return mean;
  auto eps = randn<T>(x_t.shape(), rng);
  return add(mean, scale(eps, static_cast<T>(std::sqrt(schedule.gamma(t)))));
}

template <typename T>
BasicTensor<T> ddpm_sample(const NoisePredictorFn<T>& eps_net, const Shape& shape, const FastSchedule& schedule,
                           Rng& rng) {
  require_regular(schedule, "ddpm_sample");
  NoGradGuard no_grad;
  auto x = randn<T>(shape, rng);
  for (int t = schedule.total_steps(); t >= 1; --t) x = ddpm_step(eps_net, x, t, schedule, rng);
  return x;
}

#define SYNDIFF_INSTANTIATE_DIFFUSION(T)                                                                            \
  template BasicTensor<T> forward_step(const BasicTensor<T>&, int, const FastSchedule&, Rng&);                      \
  template BasicTensor<T> forward_marginal(const BasicTensor<T>&, int, const FastSchedule&, Rng&);                  \
  template BasicTensor<T> forward_marginal_with_noise(const BasicTensor<T>&, const BasicTensor<T>&, int,            \
                                                      const FastSchedule&);                                         \
  template PosteriorParams<T> posterior_params(const BasicTensor<T>&, const BasicTensor<T>&, int,                   \
                                               const FastSchedule&);                                                \
  template BasicTensor<T> posterior_sample(const PosteriorParams<T>&, Rng&);                                        \
  template BasicTensor<T> reverse_sample(const DenoiserFn<T>&, const BasicTensor<T>&, const FastSchedule&, Rng&);   \
  template BasicTensor<T> ddpm_mean(const NoisePredictorFn<T>&, const BasicTensor<T>&, int, const FastSchedule&);  \
  template BasicTensor<T> ddpm_step(const NoisePredictorFn<T>&, const BasicTensor<T>&, int, const FastSchedule&,    \
                                    Rng&);                                                                          \
  template BasicTensor<T> ddpm_sample(const NoisePredictorFn<T>&, const Shape&, const FastSchedule&, Rng&);

SYNDIFF_INSTANTIATE_DIFFUSION(float)
SYNDIFF_INSTANTIATE_DIFFUSION(double)

}  // namespace syndiff
