#include "syndiff/losses.hpp"

#include <stdexcept>

#include "syndiff/ops.hpp"

namespace syndiff {

void LossWeights::validate() const {
  if (!(lambda_cyc >= 0)) throw std::invalid_argument("lambda_cyc must be >= 0");
  if (!(gp_weight >= 0)) throw std::invalid_argument("gp_weight must be >= 0");
}

template <typename T>
BasicTensor<T> loss_g_adv(const BasicTensor<T>& fake_logits) {
  return mean(softplus(neg(fake_logits)));
}

template <typename T>
BasicTensor<T> loss_d_adv(const BasicTensor<T>& real_logits, const BasicTensor<T>& fake_logits,
                          const BasicTensor<T>& penalty, double gp_weight) {
  auto loss = add(mean(softplus(neg(real_logits))), mean(softplus(fake_logits)));
  if (penalty.defined() && gp_weight != 0.0) loss = add(loss, scale(mean(penalty), static_cast<T>(gp_weight)));
  return loss;
}

template <typename T>
BasicTensor<T> loss_cycle(const BasicTensor<T>& x0_a, const BasicTensor<T>& x0_b, const BasicTensor<T>& recon_nondiff_a,
                          const BasicTensor<T>& recon_nondiff_b, const BasicTensor<T>& recon_diff_a,
                          const BasicTensor<T>& recon_diff_b) {
  auto nondiff = add(l1_mean(sub(x0_a, recon_nondiff_a)), l1_mean(sub(x0_b, recon_nondiff_b)));
  auto diff = add(l1_mean(sub(x0_a, recon_diff_a)), l1_mean(sub(x0_b, recon_diff_b)));
  return add(nondiff, diff);
}

template <typename T>
BasicTensor<T> total_g(const BasicTensor<T>& diff_a, const BasicTensor<T>& diff_b, const BasicTensor<T>& nondiff_a,
                       const BasicTensor<T>& nondiff_b, const BasicTensor<T>& cycle, double lambda_cyc) {
  auto adv = add(add(diff_a, diff_b), add(nondiff_a, nondiff_b));
  return add(adv, scale(cycle, static_cast<T>(lambda_cyc)));
}

template <typename T>
BasicTensor<T> total_d(const BasicTensor<T>& diff_a, const BasicTensor<T>& diff_b, const BasicTensor<T>& nondiff_a,
                       const BasicTensor<T>& nondiff_b) {
  return add(add(diff_a, diff_b), add(nondiff_a, nondiff_b));
}

template <typename T>
BasicTensor<T> ddpm_eps_loss(const ConditionalNoiseFn<T>& eps_net, const BasicTensor<T>& x0, const BasicTensor<T>& y,
                             const FastSchedule& schedule, Rng& rng) {
  if (schedule.step() != 1)
    throw ScheduleError("ddpm_eps_loss requires a k=1 schedule, got k=" + std::to_string(schedule.step()));
  std::uniform_int_distribution<int> pick(1, schedule.total_steps());
  const int t = pick(rng);
  auto eps = randn<T>(x0.shape(), rng);
  auto x_t = forward_marginal_with_noise(x0, eps, t, schedule);
  auto eps_hat = eps_net(x_t, y, t);
  if (eps_hat.shape() != eps.shape())
    throw DimensionError("ddpm_eps_loss", "prediction " + shape_str(eps_hat.shape()) + " vs noise " +
                                              shape_str(eps.shape()));
  return mean(sum_per_sample(square(sub(eps, eps_hat))));
}

#define SYNDIFF_INSTANTIATE_LOSSES(T)                                                                             \
  template BasicTensor<T> loss_g_adv(const BasicTensor<T>&);                                                      \
  template BasicTensor<T> loss_d_adv(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&, double); \
  template BasicTensor<T> loss_cycle(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&,         \
                                     const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&);        \
  template BasicTensor<T> total_g(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&,            \
                                  const BasicTensor<T>&, const BasicTensor<T>&, double);                          \
  template BasicTensor<T> total_d(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&,            \
                                  const BasicTensor<T>&);                                                         \
  template BasicTensor<T> ddpm_eps_loss(const ConditionalNoiseFn<T>&, const BasicTensor<T>&, const BasicTensor<T>&, \
                                        const FastSchedule&, Rng&);

SYNDIFF_INSTANTIATE_LOSSES(float)
SYNDIFF_INSTANTIATE_LOSSES(double)

}  // namespace syndiff
