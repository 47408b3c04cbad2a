#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "syndiff/metrics.hpp"

using namespace syndiff;

namespace {

// Direct evaluations used as oracles: every window is summed explicitly.
double reference_psnr(const Image& ref, const Image& test) {
  double peak = ref.pixels[0], se = 0;
  for (int y = 0; y < ref.height; ++y)
    for (int x = 0; x < ref.width; ++x) {
      peak = std::max<double>(peak, ref.at(y, x));
      const double d = static_cast<double>(ref.at(y, x)) - test.at(y, x);
      se += d * d;
    }
  const double mse = se / (ref.height * ref.width);
  return 10 * std::log10(peak * peak / mse);
}

double reference_ssim(const Image& ref, const Image& test, double range) {
  double w[11][11], total_w = 0;
  for (int i = 0; i < 11; ++i)
    for (int j = 0; j < 11; ++j) total_w += w[i][j] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / 4.5);
  const double c1 = std::pow(0.01 * range, 2), c2 = std::pow(0.03 * range, 2);
  double acc = 0;
  int windows = 0;
  for (int y0 = 0; y0 + 11 <= ref.height; ++y0)
    for (int x0 = 0; x0 + 11 <= ref.width; ++x0) {
      double mx = 0, my = 0;
      for (int i = 0; i < 11; ++i)
        for (int j = 0; j < 11; ++j) {
          mx += w[i][j] / total_w * ref.at(y0 + i, x0 + j);
          my += w[i][j] / total_w * test.at(y0 + i, x0 + j);
        }
      double vx = 0, vy = 0, cov = 0;
      for (int i = 0; i < 11; ++i)
        for (int j = 0; j < 11; ++j) {
          const double a = ref.at(y0 + i, x0 + j) - mx, b = test.at(y0 + i, x0 + j) - my;
          vx += w[i][j] / total_w * a * a;
          vy += w[i][j] / total_w * b * b;
          cov += w[i][j] / total_w * a * b;
        }
      acc += (2 * mx * my + c1) * (2 * cov + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++windows;
    }
  return acc / windows;
}

Image random_image(int size, std::mt19937_64& rng, double lo = 0.1, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<float> v(static_cast<std::size_t>(size) * size);
  for (auto& x : v) x = static_cast<float>(u(rng));
  return Image(size, size, v);
}

Image add_noise(const Image& img, double sigma, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0, sigma);
  Image out = img;
  for (auto& v : out.pixels) v = static_cast<float>(v + n(rng));
  return out;
}

}  // namespace

TEST_CASE("psnr of identical images is infinite and capped in aggregates") {
  std::mt19937_64 rng(1);
  auto img = random_image(16, rng);
  CHECK(std::isinf(psnr(img, img)));
  MetricReport r;
  r.entries.push_back({"p", psnr(img, img), 1.0});
  CHECK(r.psnr().mean == kPsnrCapDb);
}

TEST_CASE("psnr of a constant offset on a unit-peak image") {
  std::mt19937_64 rng(2);
  auto img = random_image(16, rng, 0.0, 0.9);
  img.pixels[7] = 1.0f;
  Image shifted = img;
  for (auto& v : shifted.pixels) v = static_cast<float>(v + 0.1);
  // Float storage perturbs the offset at the 1e-8 level.
  CHECK(psnr(img, shifted) == doctest::Approx(20.0).epsilon(1e-5));
}

TEST_CASE("psnr matches a direct double loop") {
  std::mt19937_64 rng(3);
  for (int rep = 0; rep < 5; ++rep) {
    auto a = random_image(24, rng), b = random_image(24, rng);
    CHECK(std::abs(psnr(a, b) - reference_psnr(a, b)) < 1e-9);
  }
}

TEST_CASE("psnr decreases with noise") {
  std::mt19937_64 rng(4);
  auto img = random_image(32, rng);
  double prev = INFINITY;
  for (double sigma : {0.01, 0.02, 0.05}) {
    std::mt19937_64 noise(5);
    const double v = psnr(img, add_noise(img, sigma, noise));
    CHECK(v < prev);
    prev = v;
  }
}

TEST_CASE("ssim of identical images is exactly one") {
  std::mt19937_64 rng(6);
  auto img = random_image(32, rng);
  CHECK(ssim(img, img) == 1.0);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto ds = generate_toy_dataset(seed, 1, 1, 32);
    const auto prepared = prepare_for_metrics(ds.eval_b[0].image);
    CHECK(ssim(prepared, prepared) == 1.0);
  }
}

TEST_CASE("ssim matches the direct window sum") {
  std::mt19937_64 rng(7);
  for (int rep = 0; rep < 3; ++rep) {
    auto a = random_image(20, rng), b = add_noise(a, 0.2, rng);
    double peak = 0;
    for (float v : a.pixels) peak = std::max<double>(peak, v);
    CHECK(std::abs(ssim(a, b) - reference_ssim(a, b, peak)) < 1e-10);
  }
}

TEST_CASE("ssim of an inverted bimodal image is low") {
  std::mt19937_64 rng(8);
  std::bernoulli_distribution coin(0.5);
  std::vector<float> v(32 * 32);
  for (auto& x : v) x = coin(rng) ? 0.8f : 0.2f;
  Image img(32, 32, v), inv = img;
  for (auto& x : inv.pixels) x = 1.0f - x;
  const double value = ssim(img, inv);
  CHECK(value == doctest::Approx(reference_ssim(img, inv, 0.8)).epsilon(1e-10));
  CHECK(value < 0.2);
}

TEST_CASE("ssim barely moves under tiny noise") {
  std::mt19937_64 rng(9);
  auto img = normalize_mean(random_image(32, rng));
  CHECK(ssim(img, add_noise(img, 1e-4, rng)) > 0.999);
}

TEST_CASE("ssim is symmetric for a fixed range and stays in [-1, 1]") {
  std::mt19937_64 rng(10);
  for (int rep = 0; rep < 10; ++rep) {
    auto a = random_image(16, rng, -1, 1), b = random_image(16, rng, -1, 1);
    SsimOptions fixed;
    fixed.dynamic_range = 2.0;
    CHECK(std::abs(ssim(a, b, fixed) - ssim(b, a, fixed)) < 1e-9);
    const double s = ssim(a, b);
    CHECK(s >= -1.0);
    CHECK(s <= 1.0);
  }
}

TEST_CASE("metric shape errors") {
  CHECK_THROWS_AS(psnr(Image::filled(4, 4, 1), Image::filled(4, 5, 1)), DimensionError);
  CHECK_THROWS_AS(ssim(Image::filled(10, 10, 1), Image::filled(10, 10, 1)), DimensionError);
}

TEST_CASE("report aggregates and TSV layout") {
  auto ds = generate_toy_dataset(3, 0, 3, 16);
  MetricReport r;
  for (const auto& p : eval_pairs(ds)) r.add(p.pair_id, p.b, p.a);
  REQUIRE(r.entries.size() == 3);
  double m = 0;
  for (const auto& e : r.entries) m += e.psnr_db;
  CHECK(r.psnr().mean == doctest::Approx(m / 3));
  std::ostringstream os;
  write_metric_tsv(os, r);
  std::istringstream is(os.str());
  std::vector<std::string> lines;
  for (std::string line; std::getline(is, line);) lines.push_back(line);
  REQUIRE(lines.size() == 5);
  CHECK(lines[0] == "pair_id\tpsnr_db\tssim");
  CHECK(lines[1].rfind("pair_000\t", 0) == 0);
  CHECK(lines[4].rfind("aggregate\t", 0) == 0);
  CHECK(os.str().find('\r') == std::string::npos);
}
