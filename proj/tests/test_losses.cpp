#include <cmath>

#include "doctest.h"
#include "model_cases.hpp"
#include "syndiff/losses.hpp"
#include "syndiff/ops.hpp"

using namespace syndiff;
using namespace syndiff::testing;

namespace {

Tensor64 vec(std::vector<double> v) {
  const int n = static_cast<int>(v.size());
  return Tensor64({n}, std::move(v));
}

double g_loss(double logit) { return loss_g_adv(vec({logit})).item(); }
double d_loss(double real, double fake) { return loss_d_adv(vec({real}), vec({fake}), Tensor64(), 0.0).item(); }

}  // namespace

TEST_CASE("generator adversarial loss values") {
  CHECK(g_loss(0.0) == doctest::Approx(0.693147).epsilon(1e-6));
  CHECK(g_loss(20.0) < 1e-8);
  CHECK(loss_g_adv(vec({0.0, 0.0})).item() == doctest::Approx(0.693147).epsilon(1e-6));
  CHECK(loss_g_adv(Tensor({1}, {20.0f})).item() < 1e-8f);
}

TEST_CASE("discriminator adversarial loss values") {
  CHECK(d_loss(0.0, 0.0) == doctest::Approx(1.386294).epsilon(1e-6));
  CHECK(d_loss(20.0, -20.0) < 1e-8);
  CHECK(loss_d_adv(vec({0.0}), vec({0.0}), vec({0.0}), 0.5).item() == doctest::Approx(1.386294).epsilon(1e-6));
}

TEST_CASE("penalty contribution of a linear discriminator") {
  Tensor64 w({4, 1}, {1.0, 1.0, -1.0, 1.0});  // |w|^2 = 4
  std::mt19937_64 rng(1);
  auto x = random_tensor({3, 4}, rng);
  x.requires_grad_();
  Graph64 g;
  GraphScope<double> scope(g);
  auto logits = reshape(matmul(x, w), {3});
  auto penalty = grad_norm_sq(g, logits, x);
  const auto zero = Tensor64::zeros({3});
  const double with = loss_d_adv(zero, zero, penalty, 0.5).item();
  const double without = loss_d_adv(zero, zero, Tensor64(), 0.5).item();
  CHECK(with - without == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("adversarial losses stay finite on the logit range") {
  for (double z = -30; z <= 30; z += 0.5) {
    CHECK(std::isfinite(g_loss(z)));
    CHECK(std::isfinite(d_loss(z, z)));
    CHECK(std::isfinite(loss_g_adv(Tensor({1}, {static_cast<float>(z)})).item()));
  }
}

TEST_CASE("adversarial losses are monotone in the logits") {
  double prev_g = INFINITY, prev_fake = -INFINITY, prev_real = INFINITY;
  for (double z = -10; z <= 10; z += 0.25) {
    CHECK(g_loss(z) < prev_g);
    CHECK(d_loss(0.0, z) > prev_fake);
    CHECK(d_loss(z, 0.0) < prev_real);
    prev_g = g_loss(z);
    prev_fake = d_loss(0.0, z);
    prev_real = d_loss(z, 0.0);
  }
}

TEST_CASE("equilibrium totals") {
  const auto z = vec({0.0, 0.0});
  const auto d = loss_d_adv(z, z, Tensor64(), 0.5);
  const auto g = loss_g_adv(z);
  CHECK(total_d(d, d, d, d).item() == doctest::Approx(4 * 1.386294).epsilon(1e-6));
  CHECK(total_g(g, g, g, g, Tensor64::scalar(0.0), 0.5).item() == doctest::Approx(4 * 0.693147).epsilon(1e-6));
}

TEST_CASE("cycle loss") {
  std::mt19937_64 rng(2);
  const Shape shape{2, 1, 4, 4};
  auto a = random_tensor(shape, rng), b = random_tensor(shape, rng);
  CHECK(loss_cycle(a, b, a, b, a, b).item() == 0.0);
  auto shifted = add_scalar(a, 0.1);
  CHECK(loss_cycle(a, b, shifted, b, a, b).item() == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(loss_cycle(a, b, a, b, a, add_scalar(b, -0.1)).item() == doctest::Approx(0.1).epsilon(1e-12));

  auto ra = random_tensor(shape, rng), rb = random_tensor(shape, rng);
  auto da = random_tensor(shape, rng), db = random_tensor(shape, rng);
  const double got = loss_cycle(a, b, ra, rb, da, db).item();
  const double n = static_cast<double>(a.numel());
  double s1 = 0, s2 = 0, s3 = 0, s4 = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    s1 += std::abs(a.at(i) - ra.at(i));
    s2 += std::abs(b.at(i) - rb.at(i));
    s3 += std::abs(a.at(i) - da.at(i));
    s4 += std::abs(b.at(i) - db.at(i));
  }
  const double ref = s1 / n + s2 / n + s3 / n + s4 / n;
  CHECK(std::abs(got - ref) / ref < 1e-6);
  // Swapping the modality labels leaves the value unchanged.
  CHECK(loss_cycle(b, a, rb, ra, db, da).item() == doctest::Approx(got).epsilon(1e-14));
  CHECK_THROWS_AS(loss_cycle(a, b, Tensor64({2, 1, 2, 2}), rb, da, db), DimensionError);
}

TEST_CASE("totals are plain weighted sums") {
  auto s = [](double v) { return Tensor64::scalar(v); };
  CHECK(total_g(s(0), s(0), s(0), s(0), s(0), 0.5).item() == 0.0);
  CHECK(total_d(s(0), s(0), s(0), s(0)).item() == 0.0);
  CHECK(total_g(s(0), s(0.7), s(0), s(0), s(0), 0.5).item() == 0.7);
  CHECK(total_g(s(0), s(0), s(0), s(0), s(0.8), 0.5).item() == doctest::Approx(0.4));
  CHECK(total_d(s(0), s(0), s(1.25), s(0)).item() == 1.25);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 3);
  for (int rep = 0; rep < 10; ++rep) {
    const double v[5] = {u(rng), u(rng), u(rng), u(rng), u(rng)};
    CHECK(total_g(s(v[0]), s(v[1]), s(v[2]), s(v[3]), s(v[4]), 0.5).item() ==
          doctest::Approx(v[0] + v[1] + v[2] + v[3] + 0.5 * v[4]).epsilon(1e-14));
    CHECK(total_d(s(v[0]), s(v[1]), s(v[2]), s(v[3])).item() ==
          doctest::Approx(v[0] + v[1] + v[2] + v[3]).epsilon(1e-14));
  }
}

TEST_CASE("loss weights validate") {
  CHECK_NOTHROW(LossWeights{}.validate());
  CHECK_THROWS_AS((LossWeights{-0.1, 0.5}.validate()), std::invalid_argument);
  CHECK_THROWS_AS((LossWeights{0.5, -1.0}.validate()), std::invalid_argument);
}

TEST_CASE("baseline loss with a zero predictor averages to the pixel count") {
  auto s = regular_schedule(1000, 0.001, 20.0);
  Rng rng(4);
  const Shape shape{1, 1, 4, 4};
  const double pixels = 16;
  ConditionalNoiseFn<double> zero = [](const Tensor64& x, const Tensor64&, int) { return Tensor64::zeros(x.shape()); };
  const auto x0 = Tensor64::full(shape, 0.3);
  const int draws = 10000;
  double total = 0;
  for (int i = 0; i < draws; ++i) total += ddpm_eps_loss(zero, x0, x0, s, rng).item();
  // Each draw is chi-square with `pixels` degrees of freedom.
  const double se = std::sqrt(2 * pixels / draws);
  CHECK(std::abs(total / draws - pixels) < 3 * se);
}

TEST_CASE("baseline loss with the true noise is zero") {
  auto s = regular_schedule(1000, 0.001, 20.0);
  Rng rng(5);
  auto x0 = randn<double>({2, 1, 4, 4}, rng);
  // Recover the injected noise from x_t by inverting the marginal.
  ConditionalNoiseFn<double> oracle = [&](const Tensor64& xt, const Tensor64&, int t) {
    const double ab = s.alpha_bar(t);
    return scale(sub(xt, scale(x0, std::sqrt(ab))), 1.0 / std::sqrt(1.0 - ab));
  };
  for (int i = 0; i < 20; ++i) CHECK(ddpm_eps_loss(oracle, x0, x0, s, rng).item() < 1e-20);
  CHECK_THROWS_AS(ddpm_eps_loss(oracle, x0, x0, build_fast_schedule(1000, 250, 0.1, 20.0), rng), ScheduleError);
}

TEST_CASE("baseline loss gradient matches finite differences") {
  auto s = regular_schedule(1000, 0.001, 20.0);
  Rng init(6);
  GeneratorNet<double> net(tiny_net_config(), init, OutputActivation::None);
  auto x0 = tanh(randn<double>({2, 1, 16, 16}, init));
  auto y = tanh(randn<double>({2, 1, 16, 16}, init));
  ConditionalNoiseFn<double> eps_net = [&](const Tensor64& xt, const Tensor64& cond, int t) {
    return net.forward(xt, cond, t);
  };
  auto res = check_gradients(
      [&](const std::vector<Tensor64>&) {
        Rng draw(7);  // same t and noise on every evaluation
        return ddpm_eps_loss(eps_net, x0, y, s, draw);
      },
      net.parameters().tensors(), 1e-5, 300);
  INFO("rel_error=", res.rel_error);
  CHECK(res.rel_error < 1e-3);
  CHECK(res.numeric_norm > 0);
}

TEST_CASE("diffusive generator objective gradient matches finite differences") {
  GeneratorLossCase c(8);
  auto res = c.check();
  INFO("rel_error=", res.rel_error);
  CHECK(res.rel_error < 1e-3);
  CHECK(res.numeric_norm > 0);
}

TEST_CASE("discriminator penalty gradient matches finite differences") {
  PenaltyCase c(9);
  auto res = c.check();
  INFO("rel_error=", res.rel_error);
  CHECK(res.rel_error < 1e-3);
  CHECK(res.numeric_norm > 0);
}
