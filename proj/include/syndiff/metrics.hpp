#pragma once

#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "syndiff/data.hpp"

namespace syndiff {

/// Aggregates replace an infinite PSNR (zero error) with this value.
inline constexpr double kPsnrCapDb = 100.0;

/// 10 log10(MAX^2 / MSE) with MAX the largest reference pixel. Inputs are
/// expected to be mean-normalized. Returns +inf when the images are equal.
double psnr(const Image& reference, const Image& test);

struct SsimOptions {
  int window = 11;
  double sigma = 1.5;
  /// Dynamic range L; defaults to the largest reference pixel.
  std::optional<double> dynamic_range;
};

/// Mean local SSIM over all fully contained Gaussian windows, with
/// C1 = (0.01 L)^2 and C2 = (0.03 L)^2.
double ssim(const Image& reference, const Image& test, const SsimOptions& options = {});

/// Maps an image in [-1, 1] to [0, 1] and scales it to unit mean.
Image prepare_for_metrics(const Image& image);

struct MetricEntry {
  std::string pair_id;
  double psnr_db;
  double ssim;
};

struct MeanStd {
  double mean = 0;
  double std = 0;
};

struct MetricReport {
  std::vector<MetricEntry> entries;

  void add(std::string pair_id, const Image& reference, const Image& test);
  /// Capped at kPsnrCapDb per entry.
  MeanStd psnr() const;
  MeanStd ssim() const;
};

/// Header, one row per entry, then "aggregate" with mean±std per column.
void write_metric_tsv(std::ostream& out, const MetricReport& report);

}  // namespace syndiff
