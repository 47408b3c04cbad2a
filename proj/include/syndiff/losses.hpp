#pragma once

#include <functional>

#include "syndiff/diffusion.hpp"
#include "syndiff/schedule.hpp"
#include "syndiff/tensor.hpp"

namespace syndiff {

struct LossWeights {
  /// Weight of the cycle-consistency term in the generator objective.
  double lambda_cyc = 0.5;
  /// Weight of the gradient penalty in the diffusive discriminator objective.
  double gp_weight = 0.5;

  /// Throws std::invalid_argument if either weight is negative.
  void validate() const;
};

/// Non-saturating generator loss: mean softplus(-logit).
template <typename T>
BasicTensor<T> loss_g_adv(const BasicTensor<T>& fake_logits);

/// mean softplus(-real) + mean softplus(fake) + gp_weight * mean(penalty).
/// `penalty` is the per-sample squared input-gradient norm at the real
/// samples; pass an undefined tensor to omit it.
template <typename T>
BasicTensor<T> loss_d_adv(const BasicTensor<T>& real_logits, const BasicTensor<T>& fake_logits,
                          const BasicTensor<T>& penalty, double gp_weight);

/// Sum of four per-pixel mean absolute errors: the non-diffusive cycles and
/// the diffusive cycles for both modalities.
template <typename T>
BasicTensor<T> loss_cycle(const BasicTensor<T>& x0_a, const BasicTensor<T>& x0_b, const BasicTensor<T>& recon_nondiff_a,
                          const BasicTensor<T>& recon_nondiff_b, const BasicTensor<T>& recon_diff_a,
                          const BasicTensor<T>& recon_diff_b);

template <typename T>
BasicTensor<T> total_g(const BasicTensor<T>& diff_a, const BasicTensor<T>& diff_b, const BasicTensor<T>& nondiff_a,
                       const BasicTensor<T>& nondiff_b, const BasicTensor<T>& cycle, double lambda_cyc);

template <typename T>
BasicTensor<T> total_d(const BasicTensor<T>& diff_a, const BasicTensor<T>& diff_b, const BasicTensor<T>& nondiff_a,
                       const BasicTensor<T>& nondiff_b);

/// Conditional noise predictor for the baseline: (x_t, y, t) -> eps estimate.
template <typename T>
using ConditionalNoiseFn = std::function<BasicTensor<T>(const BasicTensor<T>& x_t, const BasicTensor<T>& y, int t)>;

/// Batch mean of the per-sample squared error between the injected noise and
/// its prediction, with t uniform on {1..T}. Requires a k = 1 schedule.
template <typename T>
BasicTensor<T> ddpm_eps_loss(const ConditionalNoiseFn<T>& eps_net, const BasicTensor<T>& x0, const BasicTensor<T>& y,
                             const FastSchedule& schedule, Rng& rng);

}  // namespace syndiff
