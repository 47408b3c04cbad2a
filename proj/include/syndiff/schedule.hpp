#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace syndiff {

/// Invalid schedule parameters or an off-grid time index.
class ScheduleError : public std::invalid_argument {
 public:
  ScheduleError(const std::string& what, int t = -1) : std::invalid_argument(what), t_(t) {}
  /// Offending time index, or -1 when the error is not tied to one.
  int t() const noexcept { return t_; }

 private:
  int t_;
};

/// Exponential variance schedule evaluated on the grid {k, 2k, ..., T}:
///
///   gamma_t   = 1 - exp(beta_min * k / T - (beta_max - beta_min) * (2tk - k^2) / (2 T^2))
///   alpha_t   = 1 - gamma_t
///   alpha_bar_t = alpha_bar_{t-k} * alpha_t,  alpha_bar_0 = 1
///
/// Immutable after construction. k = 1 gives the regular one-step schedule.
class FastSchedule {
 public:
  FastSchedule(int total_steps, int step, double beta_min, double beta_max);

  int total_steps() const noexcept { return total_; }
  int step() const noexcept { return step_; }
  int num_steps() const noexcept { return total_ / step_; }
  double beta_min() const noexcept { return beta_min_; }
  double beta_max() const noexcept { return beta_max_; }

  bool on_grid(int t) const noexcept { return t >= step_ && t <= total_ && t % step_ == 0; }
  /// Throws ScheduleError unless t is in {k, ..., T}.
  void require_on_grid(int t) const;

  double gamma(int t) const;
  double alpha(int t) const { return 1.0 - gamma(t); }
  /// Defined for t in {0, k, ..., T}.
  double alpha_bar(int t) const;

  std::vector<int> grid() const;

 private:
  int total_;
  int step_;
  double beta_min_;
  double beta_max_;
  std::vector<double> gamma_;      // index r-1 for t = r*k
  std::vector<double> alpha_bar_;  // index r for t = r*k, alpha_bar_[0] = 1
};

FastSchedule build_fast_schedule(int total_steps, int step, double beta_min, double beta_max);
/// k = 1 schedule used by the DDPM baseline.
FastSchedule regular_schedule(int total_steps, double beta_min, double beta_max);

}  // namespace syndiff
