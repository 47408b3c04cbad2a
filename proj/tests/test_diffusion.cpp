#include <cmath>
#include <numeric>

#include "bayes_oracle.hpp"
#include "doctest.h"
#include "syndiff/diffusion.hpp"
#include "syndiff/ops.hpp"

using namespace syndiff;
using namespace syndiff::testing;

namespace {

constexpr int kTrials = 100000;

struct Moments {
  double mean;
  double variance;
};

Moments moments(const Tensor64& x) {
  const auto d = x.data();
  const double m = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(d.size());
  double v = 0;
  for (double e : d) v += (e - m) * (e - m);
  return {m, v / static_cast<double>(d.size() - 1)};
}

// Three standard errors of the sample mean and variance of a Gaussian.
void check_gaussian(const Moments& got, double mean, double variance, int n) {
  const double se_mean = std::sqrt(variance / n);
  const double se_var = variance * std::sqrt(2.0 / (n - 1));
  CHECK(std::abs(got.mean - mean) < 3 * se_mean);
  CHECK(std::abs(got.variance - variance) < 3 * se_var);
}

FastSchedule default_schedule() { return build_fast_schedule(1000, 250, 0.1, 20.0); }

}  // namespace

TEST_CASE("forward step from zero is pure noise of variance gamma") {
  auto s = default_schedule();
  Rng rng(1);
  for (int t : s.grid()) {
    auto x = forward_step(Tensor64::zeros({kTrials}), t, s, rng);
    check_gaussian(moments(x), 0.0, s.gamma(t), kTrials);
  }
}

TEST_CASE("forward step in the small-noise limit keeps the input") {
  auto s = build_fast_schedule(1, 1, 1e-6, 5e-6);
  Rng rng(2);
  Tensor64 x({3}, {0.5, -0.25, 0.75});
  auto y = forward_step(x, 1, s, rng);
  for (int i = 0; i < 3; ++i) CHECK(std::abs(y.at(i) - x.at(i)) < 1e-2);
}

TEST_CASE("forward ops are reproducible for a fixed seed") {
  auto s = default_schedule();
  Tensor x0({2, 1, 4, 4});
  Rng a(9), b(9);
  auto xa = forward_marginal(x0, 500, s, a);
  auto xb = forward_marginal(x0, 500, s, b);
  for (std::size_t i = 0; i < xa.numel(); ++i) CHECK(xa.at(i) == xb.at(i));
  auto sa = forward_step(x0, 250, s, a);
  auto sb = forward_step(x0, 250, s, b);
  for (std::size_t i = 0; i < sa.numel(); ++i) CHECK(sa.at(i) == sb.at(i));
}

TEST_CASE("composed forward steps match the marginal") {
  auto s = default_schedule();
  const double x0 = 0.7;
  for (int t : s.grid()) {
    Rng rng(100 + t);
    auto x = Tensor64::full({kTrials}, x0);
    for (int u = s.step(); u <= t; u += s.step()) x = forward_step(x, u, s, rng);
    check_gaussian(moments(x), std::sqrt(s.alpha_bar(t)) * x0, 1.0 - s.alpha_bar(t), kTrials);
  }
}

TEST_CASE("marginal at t=k is one forward step") {
  auto s = default_schedule();
  Rng rng(4);
  auto x = forward_marginal(Tensor64::full({kTrials}, -0.4), 250, s, rng);
  check_gaussian(moments(x), std::sqrt(1.0 - s.gamma(250)) * -0.4, s.gamma(250), kTrials);
}

TEST_CASE("marginal at T from zero has variance 1 - alpha_bar_T") {
  auto s = default_schedule();
  Rng rng(5);
  auto x = forward_marginal(Tensor64::zeros({kTrials}), 1000, s, rng);
  check_gaussian(moments(x), 0.0, 1.0 - s.alpha_bar(1000), kTrials);
  CHECK(1.0 - s.alpha_bar(1000) > 0.99);
}

TEST_CASE("off-grid times are rejected") {
  auto s = default_schedule();
  Rng rng(6);
  Tensor x({2});
  CHECK_THROWS_AS(forward_step(x, 100, s, rng), ScheduleError);
  CHECK_THROWS_AS(forward_marginal(x, 0, s, rng), ScheduleError);
  CHECK_THROWS_AS(posterior_params(x, x, 1250, s), ScheduleError);
}

TEST_CASE("posterior at t=k collapses onto the estimate") {
  auto s = default_schedule();
  Rng rng(7);
  auto xt = randn<float>({2, 1, 4, 4}, rng);
  auto x0 = randn<float>({2, 1, 4, 4}, rng);
  auto p = posterior_params(xt, x0, 250, s);
  CHECK(p.variance == 0.0);
  for (std::size_t i = 0; i < x0.numel(); ++i) CHECK(p.mean.at(i) == x0.at(i));
  Rng probe(8);
  const auto before = probe;
  auto sample = posterior_sample(p, probe);
  CHECK(probe == before);
  for (std::size_t i = 0; i < x0.numel(); ++i) CHECK(sample.at(i) == x0.at(i));
}

TEST_CASE("posterior variance is below the step variance") {
  for (int k : {1, 50, 250}) {
    auto s = build_fast_schedule(1000, k, 0.001, 20.0);
    for (int t : s.grid()) {
      const auto c = posterior_coefficients(s, t);
      CHECK(c.variance >= 0.0);
      CHECK(c.variance < s.gamma(t));
      CHECK((c.variance == 0.0) == (t == k));
    }
  }
}

TEST_CASE("posterior matches the grid density product") {
  Rng rng(11);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  auto s = build_fast_schedule(1000, 250, 0.1, 20.0);
  for (int t : {500, 750, 1000}) {
    const double x0 = u(rng), xt = u(rng);
    auto p = posterior_params(Tensor64({1}, {xt}), Tensor64({1}, {x0}), t, s);
    auto ref = grid_posterior(s, t, x0, xt);
    const double scale = std::max(std::abs(ref.mean), std::sqrt(ref.variance));
    CHECK(std::abs(p.mean.item() - ref.mean) / scale < 1e-5);
    CHECK(std::abs(p.variance - ref.variance) / ref.variance < 1e-5);
  }
}

TEST_CASE("posterior mean of a constant image uses both coefficients") {
  auto s = default_schedule();
  const double c = 0.3;
  for (int t : {500, 750, 1000}) {
    const double g = s.gamma(t);
    const double ab = s.alpha_bar(t), ab_prev = s.alpha_bar(t - 250);
    const double expected = c * (std::sqrt(ab_prev) * g + std::sqrt(1 - g) * (1 - ab_prev)) / (1 - ab);
    auto p = posterior_params(Tensor64::full({3}, c), Tensor64::full({3}, c), t, s);
    for (int i = 0; i < 3; ++i) CHECK(p.mean.at(i) == doctest::Approx(expected).epsilon(1e-14));
  }
}

TEST_CASE("posterior samples have the posterior variance") {
  auto s = default_schedule();
  Rng rng(12);
  auto p = posterior_params(Tensor64::full({kTrials}, 0.2), Tensor64::full({kTrials}, -0.5), 750, s);
  check_gaussian(moments(posterior_sample(p, rng)), p.mean.at(0), p.variance, kTrials);
}

TEST_CASE("posterior draws on top of the marginal reproduce the earlier marginal") {
  auto s = default_schedule();
  const double x0 = 0.6;
  auto x0t = Tensor64::full({kTrials}, x0);
  for (int t : {500, 750, 1000}) {
    Rng rng(200 + t);
    auto xt = forward_marginal(x0t, t, s, rng);
    auto prev = posterior_sample(posterior_params(xt, x0t, t, s), rng);
    check_gaussian(moments(prev), std::sqrt(s.alpha_bar(t - 250)) * x0, 1.0 - s.alpha_bar(t - 250), kTrials);
  }
}

TEST_CASE("posterior mean is differentiable in the estimate") {
  auto s = default_schedule();
  Tensor64 xt({2}, {0.1, -0.2});
  Tensor64 x0({2}, {0.3, 0.4});
  x0.requires_grad_();
  Graph64 g;
  GraphScope<double> scope(g);
  auto p = posterior_params(xt, x0, 750, s);
  auto gx = backward(g, sum(p.mean)).of(x0);
  const double c = posterior_coefficients(s, 750).x0_coef;
  CHECK(gx.at(0) == doctest::Approx(c).epsilon(1e-14));
}

TEST_CASE("reverse sampler calls the generator once per grid step") {
  Rng rng(13);
  auto y = randn<float>({1, 1, 8, 8}, rng);
  for (int k : {250, 500, 1000, 100}) {
    auto s = build_fast_schedule(1000, k, 0.1 * k / 250.0, 20.0);
    int calls = 0;
    std::vector<int> times;
    DenoiserFn<float> gen = [&](const Tensor& xt, const Tensor&, int t) {
      ++calls;
      times.push_back(t);
      return scale(xt, 0.5f);
    };
    (void)reverse_sample(gen, y, s, rng);
    CHECK(calls == 1000 / k);
    CHECK(times.front() == 1000);
    CHECK(times.back() == k);
  }
}

TEST_CASE("a constant-target generator yields the target exactly") {
  auto s = default_schedule();
  Rng rng(14);
  auto y = randn<float>({2, 1, 8, 8}, rng);
  auto target = randn<float>({2, 1, 8, 8}, rng);
  DenoiserFn<float> gen = [&](const Tensor&, const Tensor&, int) { return target; };
  auto out = reverse_sample(gen, y, s, rng);
  for (std::size_t i = 0; i < out.numel(); ++i) CHECK(out.at(i) == target.at(i));
}

TEST_CASE("reverse sampling is reproducible for a fixed seed") {
  auto s = default_schedule();
  Rng init(15);
  auto y = randn<float>({1, 1, 8, 8}, init);
  DenoiserFn<float> gen = [](const Tensor& xt, const Tensor& cond, int) { return tanh(add(xt, cond)); };
  Rng a(3), b(3);
  auto oa = reverse_sample(gen, y, s, a);
  auto ob = reverse_sample(gen, y, s, b);
  for (std::size_t i = 0; i < oa.numel(); ++i) CHECK(oa.at(i) == ob.at(i));
}

TEST_CASE("a single-step schedule is one call and a deterministic posterior") {
  auto s = build_fast_schedule(1000, 1000, 0.1, 20.0);
  Rng rng(16);
  auto y = randn<float>({1, 1, 4, 4}, rng);
  int calls = 0;
  DenoiserFn<float> gen = [&](const Tensor& xt, const Tensor&, int) {
    ++calls;
    return tanh(xt);
  };
  Rng a(1), b(1);
  auto oa = reverse_sample(gen, y, s, a);
  // Only x_T is random: regenerating it reproduces the output.
  auto x_T = randn<float>(y.shape(), b);
  auto expected = tanh(x_T);
  CHECK(calls == 1);
  for (std::size_t i = 0; i < oa.numel(); ++i) CHECK(oa.at(i) == expected.at(i));
}

TEST_CASE("baseline mean with a zero noise estimate rescales the input") {
  auto s = regular_schedule(1000, 0.001, 20.0);
  Tensor64 xt({3}, {0.5, -1.0, 2.0});
  NoisePredictorFn<double> zero = [](const Tensor64& x, int) { return Tensor64::zeros(x.shape()); };
  for (int t : {1, 10, 500, 1000}) {
    auto mu = ddpm_mean(zero, xt, t, s);
    for (int i = 0; i < 3; ++i)
      CHECK(mu.at(i) == doctest::Approx(xt.at(i) / std::sqrt(s.alpha(t))).epsilon(1e-14));
  }
}

TEST_CASE("baseline mean with the true noise at t=1 recovers the clean image") {
  auto s = regular_schedule(1000, 0.001, 20.0);
  Rng rng(17);
  auto x0 = randn<double>({6}, rng);
  auto eps = randn<double>({6}, rng);
  auto xt = forward_marginal_with_noise(x0, eps, 1, s);
  NoisePredictorFn<double> oracle = [&](const Tensor64&, int) { return eps; };
  auto mu = ddpm_mean(oracle, xt, 1, s);
  for (int i = 0; i < 6; ++i) CHECK(mu.at(i) == doctest::Approx(x0.at(i)).epsilon(1e-9));
}

TEST_CASE("baseline mean matches a scalar re-implementation") {
  auto s = regular_schedule(1000, 0.001, 20.0);
  Rng rng(18);
  auto xt = randn<double>({32}, rng);
  auto eps = randn<double>({32}, rng);
  NoisePredictorFn<double> net = [&](const Tensor64&, int) { return eps; };
  for (int t : {2, 77, 999}) {
    auto mu = ddpm_mean(net, xt, t, s);
    const double beta = s.gamma(t);
    double ab = 1.0;
    for (int u = 1; u <= t; ++u) ab *= 1.0 - s.gamma(u);
    for (int i = 0; i < 32; ++i) {
      const double ref = (xt.at(i) - beta / std::sqrt(1.0 - ab) * eps.at(i)) / std::sqrt(1.0 - beta);
      CHECK(std::abs(mu.at(i) - ref) <= 1e-6 * std::abs(ref));
    }
  }
}

TEST_CASE("baseline ops reject fast schedules") {
  auto s = default_schedule();
  Rng rng(19);
  NoisePredictorFn<float> zero = [](const Tensor& x, int) { return Tensor::zeros(x.shape()); };
  CHECK_THROWS_AS(ddpm_mean(zero, Tensor({2}), 250, s), ScheduleError);
  CHECK_THROWS_AS(ddpm_sample(zero, {2}, s, rng), ScheduleError);
}

TEST_CASE("baseline step adds no noise at t=1") {
  auto s = regular_schedule(1000, 0.001, 20.0);
  NoisePredictorFn<double> zero = [](const Tensor64& x, int) { return Tensor64::zeros(x.shape()); };
  Tensor64 xt({2}, {0.3, -0.3});
  Rng rng(20);
  const auto before = rng;
  auto x = ddpm_step(zero, xt, 1, s, rng);
  CHECK(rng == before);
  CHECK(x.at(0) == doctest::Approx(0.3 / std::sqrt(s.alpha(1))));
}
