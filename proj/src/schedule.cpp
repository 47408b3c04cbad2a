#include "syndiff/schedule.hpp"

#include <cmath>

namespace syndiff {

FastSchedule::FastSchedule(int total_steps, int step, double beta_min, double beta_max)
    : total_(total_steps), step_(step), beta_min_(beta_min), beta_max_(beta_max) {
  if (total_steps <= 0) throw ScheduleError("T must be positive, got " + std::to_string(total_steps));
  if (step <= 0) throw ScheduleError("k must be positive, got " + std::to_string(step));
  if (total_steps % step != 0)
    throw ScheduleError("k=" + std::to_string(step) + " does not divide T=" + std::to_string(total_steps));
  if (!(beta_min < beta_max)) throw ScheduleError("beta_min must be below beta_max");

  const double T = total_steps;
  const double k = step;
  const int n = total_steps / step;
  gamma_.reserve(static_cast<std::size_t>(n));
  alpha_bar_.reserve(static_cast<std::size_t>(n) + 1);
  alpha_bar_.push_back(1.0);
  for (int r = 1; r <= n; ++r) {
    const double t = static_cast<double>(r) * k;
    const double exponent = beta_min * k / T - (beta_max - beta_min) * (2.0 * t * k - k * k) / (2.0 * T * T);
    const double g = -std::expm1(exponent);
    if (!(g > 0.0 && g < 1.0))
      throw ScheduleError("gamma_t=" + std::to_string(g) + " outside (0,1) at t=" + std::to_string(r * step),
                          r * step);
    gamma_.push_back(g);
    alpha_bar_.push_back(alpha_bar_.back() * (1.0 - g));
  }
}

void FastSchedule::require_on_grid(int t) const {
  if (!on_grid(t))
    throw ScheduleError("t=" + std::to_string(t) + " is not on the grid {" + std::to_string(step_) + ", ..., " +
                            std::to_string(total_) + "} with step " + std::to_string(step_),
                        t);
}

double FastSchedule::gamma(int t) const {
  require_on_grid(t);
  return gamma_[static_cast<std::size_t>(t / step_ - 1)];
}

double FastSchedule::alpha_bar(int t) const {
  if (t == 0) return 1.0;
  require_on_grid(t);
  return alpha_bar_[static_cast<std::size_t>(t / step_)];
}

std::vector<int> FastSchedule::grid() const {
  std::vector<int> out;
  for (int t = step_; t <= total_; t += step_) out.push_back(t);
  return out;
}

FastSchedule build_fast_schedule(int total_steps, int step, double beta_min, double beta_max) {
  return FastSchedule(total_steps, step, beta_min, beta_max);
}

FastSchedule regular_schedule(int total_steps, double beta_min, double beta_max) {
  return FastSchedule(total_steps, 1, beta_min, beta_max);
}

}  // namespace syndiff
