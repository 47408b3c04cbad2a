#include "syndiff/data.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "syndiff/random.hpp"

namespace syndiff {

namespace {

constexpr std::uint32_t kGeometrySalt = 0x6e6f6d47;
constexpr std::uint32_t kNoiseSalt = 0x7369614e;

Rng stream(std::uint64_t seed, GeometryId id, std::uint32_t salt, std::uint32_t extra = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(id.pool), static_cast<std::uint32_t>(id.index), salt, extra};
  return Rng(seq);
}

bool is_power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

std::string pair_name(int index) {
  std::string digits = std::to_string(index);
  return "pair_" + std::string(digits.size() < 3 ? 3 - digits.size() : 0, '0') + digits;
}

}  // namespace

Image::Image(int h, int w, std::vector<float> values) : height(h), width(w), pixels(std::move(values)) {
  if (h < 0 || w < 0 || pixels.size() != static_cast<std::size_t>(h) * w)
    throw std::invalid_argument("image of " + std::to_string(h) + "x" + std::to_string(w) + " needs " +
                                std::to_string(std::size_t(std::max(h, 0)) * std::max(w, 0)) + " pixels, got " +
                                std::to_string(pixels.size()));
}

std::string to_string(Modality m) { return m == Modality::A ? "A" : "B"; }

ClassMap make_class_map(std::uint64_t seed, GeometryId id, int size) {
  Rng rng = stream(seed, id, kGeometrySalt);
  std::uniform_int_distribution<int> count(2, 4);
  std::uniform_real_distribution<double> center(0.25 * size, 0.75 * size);
  std::uniform_real_distribution<double> radius(0.08 * size, 0.16 * size);
  std::uniform_real_distribution<double> amplitude(0.8, 1.2);
  struct Bump {
    double cy, cx, r, a;
  };
  std::vector<Bump> bumps(static_cast<std::size_t>(count(rng)));
  for (auto& b : bumps) b = {center(rng), center(rng), radius(rng), amplitude(rng)};

  ClassMap map;
  map.size = size;
  map.labels.resize(static_cast<std::size_t>(size) * size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      double f = 0;
      for (const auto& b : bumps) {
        const double dy = y + 0.5 - b.cy, dx = x + 0.5 - b.cx;
        f += b.a * std::exp(-(dy * dy + dx * dx) / (2 * b.r * b.r));
      }
      map.labels[static_cast<std::size_t>(y) * size + x] = f > 0.85 ? 2 : (f > 0.35 ? 1 : 0);
    }
  return map;
}

Image render(const ClassMap& classes, Modality modality, std::uint64_t seed, GeometryId id) {
  Rng rng = stream(seed, id, kNoiseSalt, modality == Modality::A ? 0 : 1);
  std::normal_distribution<double> noise(0.0, kToyNoiseSigma);
  const float* table = modality == Modality::A ? kIntensityA : kIntensityB;
  std::vector<float> pixels(classes.labels.size());
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    const double v = std::clamp(table[classes.labels[i]] + noise(rng), 0.0, 1.0);
    pixels[i] = static_cast<float>(2.0 * v - 1.0);
  }
  return Image(classes.size, classes.size, std::move(pixels));
}

ToyDataset generate_toy_dataset(std::uint64_t seed, int n_train_per_modality, int n_eval_pairs, int size) {
  if (!is_power_of_two(size) || size < 16)
    throw std::invalid_argument("image size must be a power of two >= 16, got " + std::to_string(size));
  if (n_train_per_modality < 0 || n_eval_pairs < 0) throw std::invalid_argument("image counts must be >= 0");
  ToyDataset ds;
  ds.image_size = size;
  for (int i = 0; i < n_train_per_modality; ++i) {
    const GeometryId ga{0, i}, gb{1, i};
    ds.train_a.push_back({render(make_class_map(seed, ga, size), Modality::A, seed, ga), Modality::A, Split::TrainA,
                          ga, std::nullopt});
    ds.train_b.push_back({render(make_class_map(seed, gb, size), Modality::B, seed, gb), Modality::B, Split::TrainB,
                          gb, std::nullopt});
  }
  for (int i = 0; i < n_eval_pairs; ++i) {
    const GeometryId g{2, i};
    const auto classes = make_class_map(seed, g, size);
    ds.eval_a.push_back({render(classes, Modality::A, seed, g), Modality::A, Split::Eval, g, pair_name(i)});
    ds.eval_b.push_back({render(classes, Modality::B, seed, g), Modality::B, Split::Eval, g, pair_name(i)});
  }
  return ds;
}

UnpairedPools::UnpairedPools(std::vector<Image> pool_a, std::vector<Image> pool_b)
    : a_(std::move(pool_a)), b_(std::move(pool_b)) {
  if (a_.empty() || b_.empty()) throw std::invalid_argument("training pools must both be nonempty");
  size_ = a_.front().height;
  for (const auto* pool : {&a_, &b_})
    for (const auto& img : *pool)
      if (img.height != size_ || img.width != size_)
        throw std::invalid_argument("training images must all be " + std::to_string(size_) + "x" +
                                    std::to_string(size_) + ", found " + std::to_string(img.height) + "x" +
                                    std::to_string(img.width));
}

UnpairedPools training_pools(const ToyDataset& dataset) {
  std::vector<Image> a, b;
  for (const auto& s : dataset.train_a) a.push_back(s.image);
  for (const auto& s : dataset.train_b) b.push_back(s.image);
  return UnpairedPools(std::move(a), std::move(b));
}

std::vector<EvalPair> eval_pairs(const ToyDataset& dataset) {
  std::vector<EvalPair> out;
  for (std::size_t i = 0; i < dataset.eval_a.size(); ++i)
    out.push_back({*dataset.eval_a[i].pair_id, dataset.eval_a[i].image, dataset.eval_b[i].image});
  return out;
}

Image normalize_mean(const Image& image) {
  double total = 0;
  for (float v : image.pixels) total += v;
  const double m = image.pixels.empty() ? 0.0 : total / static_cast<double>(image.pixels.size());
  if (m == 0.0) throw std::domain_error("normalize_mean: image has zero mean");
  Image out = image;
  for (auto& v : out.pixels) v = static_cast<float>(v / m);
  return out;
}

Image to_unit_range(const Image& image) {
  Image out = image;
  for (auto& v : out.pixels) v = 0.5f * (v + 1.0f);
  return out;
}

Tensor stack_images(const std::vector<const Image*>& images) {
  if (images.empty()) throw DimensionError("stack_images", "no images");
  const int h = images.front()->height, w = images.front()->width;
  std::vector<float> data;
  data.reserve(images.size() * static_cast<std::size_t>(h) * w);
  for (const auto* img : images) {
    if (img->height != h || img->width != w)
      throw DimensionError("stack_images", "mixed sizes " + std::to_string(h) + "x" + std::to_string(w) + " and " +
                                               std::to_string(img->height) + "x" + std::to_string(img->width));
    data.insert(data.end(), img->pixels.begin(), img->pixels.end());
  }
  return Tensor({static_cast<int>(images.size()), 1, h, w}, std::move(data));
}

Tensor stack_images(const std::vector<Image>& images) {
  std::vector<const Image*> ptrs;
  for (const auto& img : images) ptrs.push_back(&img);
  return stack_images(ptrs);
}

Image image_from_tensor(const Tensor& batch, int n) {
  if (batch.rank() != 4 || batch.dim(1) != 1 || n < 0 || n >= batch.dim(0))
    throw DimensionError("image_from_tensor", "sample " + std::to_string(n) + " of " + shape_str(batch.shape()));
  const int h = batch.dim(2), w = batch.dim(3);
  const auto plane = static_cast<std::size_t>(h) * w;
  auto src = batch.data().subspan(plane * n, plane);
  return Image(h, w, std::vector<float>(src.begin(), src.end()));
}

}  // namespace syndiff
