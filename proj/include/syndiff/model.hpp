#pragma once

#include <filesystem>

#include "syndiff/checkpoint.hpp"
#include "syndiff/data.hpp"
#include "syndiff/metrics.hpp"
#include "syndiff/nets.hpp"
#include "syndiff/schedule.hpp"

namespace syndiff {

enum class Direction { AtoB, BtoA };

/// Parses "A2B" / "B2A"; throws std::invalid_argument otherwise.
Direction parse_direction(const std::string& text);
std::string to_string(Direction d);

/// Schedule parameters stored alongside the weights.
struct ScheduleParams {
  int total_steps = 1000;
  int step = 250;
  double beta_min = 0.1;
  double beta_max = 20.0;

  FastSchedule build() const { return build_fast_schedule(total_steps, step, beta_min, beta_max); }
  bool operator==(const ScheduleParams&) const = default;
};

/// The eight networks trained jointly. Diffusive generators are named by the
/// modality they synthesize; the one producing A is conditioned on a B-domain
/// image and vice versa.
struct SynDiffModel {
  NetConfig config;
  GeneratorNet<float> diff_gen_to_a;
  GeneratorNet<float> diff_gen_to_b;
  DiscriminatorNet<float> diff_disc_a;
  DiscriminatorNet<float> diff_disc_b;
  ResNetGenerator<float> nondiff_gen_a2b;
  ResNetGenerator<float> nondiff_gen_b2a;
  DiscriminatorNet<float> nondiff_disc_a;
  DiscriminatorNet<float> nondiff_disc_b;

  SynDiffModel(const NetConfig& config, Rng& rng);

  std::vector<Tensor> generator_parameters() const;
  std::vector<Tensor> discriminator_parameters() const;
  /// (prefix, parameter set) for every network, in checkpoint order.
  std::vector<std::pair<std::string, const ParameterSet<float>*>> named_sets() const;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Header: version, image_size, base_channels, levels, embed_dim, hidden_dim,
/// T, k, then beta_min and beta_max as (low, high) halves of their f64 bits.
std::vector<std::uint32_t> encode_header(const NetConfig& config, const ScheduleParams& schedule);
void decode_header(const std::vector<std::uint32_t>& header, NetConfig& config, ScheduleParams& schedule);

void save_model(const std::filesystem::path& path, const SynDiffModel& model, const ScheduleParams& schedule);

struct LoadedModel {
  SynDiffModel model;
  ScheduleParams schedule;
};
/// Throws CheckpointError on format, header, or architecture mismatch.
LoadedModel load_model(const std::filesystem::path& path);

/// Reverse diffusion with the diffusive generator of the requested
/// direction, conditioned on the source batch [N, 1, H, W]. Reports the
/// number of generator evaluations through `generator_calls` when given.
Tensor translate_batch(const SynDiffModel& model, const FastSchedule& schedule, const Tensor& sources,
                       Direction direction, Rng& rng, int* generator_calls = nullptr);
Image translate(const SynDiffModel& model, const FastSchedule& schedule, const Image& source, Direction direction,
                Rng& rng, int* generator_calls = nullptr);

/// Translates every pair's source side and scores it against the other
/// side. Pair i samples from its own stream of `seed`.
MetricReport evaluate_translation(const SynDiffModel& model, const FastSchedule& schedule,
                                  const std::vector<EvalPair>& pairs, Direction direction, std::uint64_t seed);
/// Scores the untranslated source image as the prediction.
MetricReport evaluate_source_baseline(const std::vector<EvalPair>& pairs, Direction direction);

}  // namespace syndiff
