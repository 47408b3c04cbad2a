#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "syndiff/tensor.hpp"

namespace syndiff {

/// Single-channel image, row-major, values in [-1, 1].
struct Image {
  int height = 0;
  int width = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(int h, int w, std::vector<float> values);
  static Image filled(int h, int w, float value) { return Image(h, w, std::vector<float>(std::size_t(h) * w, value)); }
  float at(int row, int col) const { return pixels[static_cast<std::size_t>(row) * width + col]; }
  std::size_t size() const noexcept { return pixels.size(); }
  bool operator==(const Image&) const = default;
};

enum class Modality { A, B };
enum class Split { TrainA, TrainB, Eval };

std::string to_string(Modality m);

/// Identity of a procedural anatomy: pool (0 = trainA, 1 = trainB, 2 = eval)
/// and index within the pool. Pools never share an id.
struct GeometryId {
  int pool = 0;
  int index = 0;
  bool operator==(const GeometryId&) const = default;
};

struct ImageSample {
  Image image;
  Modality modality = Modality::A;
  Split split = Split::TrainA;
  GeometryId geometry;
  /// Set only for eval samples; links the A and B renderings of one anatomy.
  std::optional<std::string> pair_id;
};

/// Tissue class per pixel: 0 background, 1 outer tissue, 2 inner core.
struct ClassMap {
  int size = 0;
  std::vector<std::uint8_t> labels;
};

inline constexpr int kTissueClasses = 3;
/// Class intensities in [0, 1] for each modality.
inline constexpr float kIntensityA[kTissueClasses] = {0.2f, 0.5f, 0.9f};
inline constexpr float kIntensityB[kTissueClasses] = {0.8f, 0.3f, 0.6f};
inline constexpr double kToyNoiseSigma = 0.02;

/// Smooth random blob anatomy for a geometry id, thresholded into classes.
ClassMap make_class_map(std::uint64_t seed, GeometryId id, int size);
/// Renders a class map in a modality with additive Gaussian noise, clamped.
Image render(const ClassMap& classes, Modality modality, std::uint64_t seed, GeometryId id);

struct ToyDataset {
  int image_size = 0;
  std::vector<ImageSample> train_a;
  std::vector<ImageSample> train_b;
  std::vector<ImageSample> eval_a;
  std::vector<ImageSample> eval_b;
};

/// Throws std::invalid_argument unless size is a power of two >= 16 and the
/// counts are nonnegative.
ToyDataset generate_toy_dataset(std::uint64_t seed, int n_train_per_modality, int n_eval_pairs, int size);

/// The only view of the training data given to the trainer: two independent
/// image pools with no pairing information.
class UnpairedPools {
 public:
  UnpairedPools(std::vector<Image> pool_a, std::vector<Image> pool_b);

  const std::vector<Image>& pool_a() const noexcept { return a_; }
  const std::vector<Image>& pool_b() const noexcept { return b_; }
  int image_size() const noexcept { return size_; }

 private:
  std::vector<Image> a_;
  std::vector<Image> b_;
  int size_ = 0;
};

UnpairedPools training_pools(const ToyDataset& dataset);

struct EvalPair {
  std::string pair_id;
  Image a;
  Image b;
};

std::vector<EvalPair> eval_pairs(const ToyDataset& dataset);

// ---------------------------------------------------------------------------
// File formats

class ImageFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PgmFile {
  Image image;
  int maxval = 0;
};

/// Binary PGM (P5), 8-bit or 16-bit big-endian. The file range [0, maxval]
/// maps linearly onto [-1, 1].
PgmFile read_pgm(const std::filesystem::path& path);
Image load_pgm(const std::filesystem::path& path);
/// Writes "P5\n<w> <h>\n<maxval>\n" followed by the samples. maxval is 255 or 65535.
void save_pgm(const std::filesystem::path& path, const Image& image, int maxval = 65535);

/// Raw float image: "F32I", u32 height, u32 width, u32 reserved, then
/// little-endian f32 samples.
Image load_f32(const std::filesystem::path& path);
void save_f32(const std::filesystem::path& path, const Image& image);

/// Dispatches on the extension (.pgm or .f32).
Image load_image(const std::filesystem::path& path);
void save_image(const std::filesystem::path& path, const Image& image);

/// Scales the image so its mean is 1. Throws std::domain_error on zero mean.
Image normalize_mean(const Image& image);
/// [-1, 1] -> [0, 1].
Image to_unit_range(const Image& image);

// ---------------------------------------------------------------------------
// Dataset directories: trainA/, trainB/, evalA/, evalB/. Eval files with the
// same name form a pair; the stem is the pair id.

void write_dataset(const std::filesystem::path& dir, const ToyDataset& dataset);
UnpairedPools read_training_pools(const std::filesystem::path& dir);
std::vector<EvalPair> read_eval_pairs(const std::filesystem::path& dir);

// ---------------------------------------------------------------------------
// Tensor conversion

/// Stacks images of equal size into [N, 1, H, W].
Tensor stack_images(const std::vector<const Image*>& images);
Tensor stack_images(const std::vector<Image>& images);
/// Sample n of a [N, 1, H, W] tensor.
Image image_from_tensor(const Tensor& batch, int n = 0);

}  // namespace syndiff
