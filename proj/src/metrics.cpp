#include "syndiff/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace syndiff {

namespace {

void require_same_size(const char* op, const Image& a, const Image& b) {
  if (a.height != b.height || a.width != b.width)
    throw DimensionError(op, std::to_string(a.height) + "x" + std::to_string(a.width) + " vs " +
                                 std::to_string(b.height) + "x" + std::to_string(b.width));
}

double max_pixel(const Image& img) { return *std::max_element(img.pixels.begin(), img.pixels.end()); }

std::vector<double> gaussian_window(int size, double sigma) {
  std::vector<double> w(static_cast<std::size_t>(size));
  const double c = (size - 1) / 2.0;
  double total = 0;
  for (int i = 0; i < size; ++i) total += w[i] = std::exp(-(i - c) * (i - c) / (2 * sigma * sigma));
  for (auto& v : w) v /= total;
  return w;
}

// Separable valid-mode filtering of a row-major plane.
std::vector<double> filter_valid(const std::vector<double>& src, int h, int w, const std::vector<double>& k) {
  const int n = static_cast<int>(k.size());
  const int oh = h - n + 1, ow = w - n + 1;
  std::vector<double> rows(static_cast<std::size_t>(h) * ow);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0;
      for (int i = 0; i < n; ++i) acc += k[i] * src[static_cast<std::size_t>(y) * w + x + i];
      rows[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0;
      for (int i = 0; i < n; ++i) acc += k[i] * rows[static_cast<std::size_t>(y + i) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  return out;
}

MeanStd mean_std(const std::vector<double>& v) {
  MeanStd r;
  if (v.empty()) return r;
  for (double x : v) r.mean += x;
  r.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0;
    for (double x : v) ss += (x - r.mean) * (x - r.mean);
    r.std = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return r;
}

}  // namespace

double psnr(const Image& reference, const Image& test) {
  require_same_size("psnr", reference, test);
  if (reference.pixels.empty()) throw DimensionError("psnr", "empty image");
  double se = 0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const double d = static_cast<double>(reference.pixels[i]) - test.pixels[i];
    se += d * d;
  }
  const double mse = se / static_cast<double>(reference.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  const double peak = max_pixel(reference);
  return 10.0 * std::log10(peak * peak / mse);
}

double ssim(const Image& reference, const Image& test, const SsimOptions& options) {
  require_same_size("ssim", reference, test);
  const int h = reference.height, w = reference.width, n = options.window;
  if (h < n || w < n)
    throw DimensionError("ssim", "image " + std::to_string(h) + "x" + std::to_string(w) + " smaller than the " +
                                     std::to_string(n) + "x" + std::to_string(n) + " window");
  const double range = options.dynamic_range.value_or(max_pixel(reference));
  const double c1 = (0.01 * range) * (0.01 * range);
  const double c2 = (0.03 * range) * (0.03 * range);
  const auto k = gaussian_window(n, options.sigma);

  const std::size_t count = reference.size();
  std::vector<double> x(count), y(count), xx(count), yy(count), xy(count);
  for (std::size_t i = 0; i < count; ++i) {
    x[i] = reference.pixels[i];
    y[i] = test.pixels[i];
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto mx = filter_valid(x, h, w, k), my = filter_valid(y, h, w, k);
  const auto exx = filter_valid(xx, h, w, k), eyy = filter_valid(yy, h, w, k), exy = filter_valid(xy, h, w, k);
  double total = 0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double vx = exx[i] - mx[i] * mx[i];
    const double vy = eyy[i] - my[i] * my[i];
    const double cov = exy[i] - mx[i] * my[i];
    const double num = (2 * mx[i] * my[i] + c1) * (2 * cov + c2);
    const double den = (mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2);
    total += num / den;
  }
  return total / static_cast<double>(mx.size());
}

Image prepare_for_metrics(const Image& image) { return normalize_mean(to_unit_range(image)); }

void MetricReport::add(std::string pair_id, const Image& reference, const Image& test) {
  const auto ref = prepare_for_metrics(reference);
  const auto out = prepare_for_metrics(test);
  entries.push_back({std::move(pair_id), syndiff::psnr(ref, out), syndiff::ssim(ref, out)});
}

MeanStd MetricReport::psnr() const {
  std::vector<double> v;
  for (const auto& e : entries) v.push_back(std::min(e.psnr_db, kPsnrCapDb));
  return mean_std(v);
}

MeanStd MetricReport::ssim() const {
  std::vector<double> v;
  for (const auto& e : entries) v.push_back(e.ssim);
  return mean_std(v);
}

void write_metric_tsv(std::ostream& out, const MetricReport& report) {
  char buf[128];
  out << "pair_id\tpsnr_db\tssim\n";
  for (const auto& e : report.entries) {
    std::snprintf(buf, sizeof buf, "\t%.6f\t%.6f\n", std::min(e.psnr_db, kPsnrCapDb), e.ssim);
    out << e.pair_id << buf;
  }
  const auto p = report.psnr(), s = report.ssim();
  std::snprintf(buf, sizeof buf, "aggregate\t%.6f±%.6f\t%.6f±%.6f\n", p.mean, p.std, s.mean, s.std);
  out << buf;
}

}  // namespace syndiff
