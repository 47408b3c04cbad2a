#include "syndiff/model.hpp"

#include <bit>

#include "syndiff/diffusion.hpp"

namespace syndiff {

Direction parse_direction(const std::string& text) {
  if (text == "A2B") return Direction::AtoB;
  if (text == "B2A") return Direction::BtoA;
  throw std::invalid_argument("direction must be A2B or B2A, got '" + text + "'");
}

std::string to_string(Direction d) { return d == Direction::AtoB ? "A2B" : "B2A"; }

SynDiffModel::SynDiffModel(const NetConfig& c, Rng& rng)
    : config(c),
      diff_gen_to_a(c, rng),
      diff_gen_to_b(c, rng),
      diff_disc_a(c, DiscriminatorKind::Diffusive, rng),
      diff_disc_b(c, DiscriminatorKind::Diffusive, rng),
      nondiff_gen_a2b(c, rng),
      nondiff_gen_b2a(c, rng),
      nondiff_disc_a(c, DiscriminatorKind::NonDiffusive, rng),
      nondiff_disc_b(c, DiscriminatorKind::NonDiffusive, rng) {}

namespace {

void append(std::vector<Tensor>& out, const ParameterSet<float>& ps) {
  for (const auto& e : ps.entries()) out.push_back(e.value);
}

}  // namespace

std::vector<Tensor> SynDiffModel::generator_parameters() const {
  std::vector<Tensor> out;
  append(out, diff_gen_to_a.parameters());
  append(out, diff_gen_to_b.parameters());
  append(out, nondiff_gen_a2b.parameters());
  append(out, nondiff_gen_b2a.parameters());
  return out;
}

std::vector<Tensor> SynDiffModel::discriminator_parameters() const {
  std::vector<Tensor> out;
  append(out, diff_disc_a.parameters());
  append(out, diff_disc_b.parameters());
  append(out, nondiff_disc_a.parameters());
  append(out, nondiff_disc_b.parameters());
  return out;
}

std::vector<std::pair<std::string, const ParameterSet<float>*>> SynDiffModel::named_sets() const {
  return {{"diff_gen_to_a.", &diff_gen_to_a.parameters()},     {"diff_gen_to_b.", &diff_gen_to_b.parameters()},
          {"diff_disc_a.", &diff_disc_a.parameters()},         {"diff_disc_b.", &diff_disc_b.parameters()},
          {"nondiff_gen_a2b.", &nondiff_gen_a2b.parameters()}, {"nondiff_gen_b2a.", &nondiff_gen_b2a.parameters()},
          {"nondiff_disc_a.", &nondiff_disc_a.parameters()},   {"nondiff_disc_b.", &nondiff_disc_b.parameters()}};
}

std::vector<std::uint32_t> encode_header(const NetConfig& c, const ScheduleParams& s) {
  const auto lo = [](double v) { return static_cast<std::uint32_t>(std::bit_cast<std::uint64_t>(v)); };
  const auto hi = [](double v) { return static_cast<std::uint32_t>(std::bit_cast<std::uint64_t>(v) >> 32); };
  return {kCheckpointVersion,
          static_cast<std::uint32_t>(c.image_size),
          static_cast<std::uint32_t>(c.base_channels),
          static_cast<std::uint32_t>(c.levels),
          static_cast<std::uint32_t>(c.embed_dim),
          static_cast<std::uint32_t>(c.hidden_dim),
          static_cast<std::uint32_t>(s.total_steps),
          static_cast<std::uint32_t>(s.step),
          lo(s.beta_min),
          hi(s.beta_min),
          lo(s.beta_max),
          hi(s.beta_max)};
}

void decode_header(const std::vector<std::uint32_t>& h, NetConfig& c, ScheduleParams& s) {
  if (h.size() != 12) throw CheckpointError("checkpoint header has " + std::to_string(h.size()) + " fields, expected 12");
  if (h[0] != kCheckpointVersion)
    throw CheckpointError("checkpoint version " + std::to_string(h[0]) + " is not supported");
  const auto as_double = [](std::uint32_t lo, std::uint32_t hi) {
    return std::bit_cast<double>((static_cast<std::uint64_t>(hi) << 32) | lo);
  };
  c.image_size = static_cast<int>(h[1]);
  c.base_channels = static_cast<int>(h[2]);
  c.levels = static_cast<int>(h[3]);
  c.embed_dim = static_cast<int>(h[4]);
  c.hidden_dim = static_cast<int>(h[5]);
  s.total_steps = static_cast<int>(h[6]);
  s.step = static_cast<int>(h[7]);
  s.beta_min = as_double(h[8], h[9]);
  s.beta_max = as_double(h[10], h[11]);
}

void save_model(const std::filesystem::path& path, const SynDiffModel& model, const ScheduleParams& schedule) {
  Checkpoint ckpt;
  ckpt.header = encode_header(model.config, schedule);
  for (const auto& [prefix, set] : model.named_sets()) append_records(ckpt, prefix, *set);
  write_checkpoint(path, ckpt);
}

LoadedModel load_model(const std::filesystem::path& path) {
  const auto ckpt = read_checkpoint(path);
  NetConfig config;
  ScheduleParams schedule;
  decode_header(ckpt.header, config, schedule);
  try {
    config.validate();
    (void)schedule.build();
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(path.string() + ": invalid header: " + e.what());
  }
  Rng unused(0);
  LoadedModel out{SynDiffModel(config, unused), schedule};
  std::size_t expected = 0;
  for (const auto& [prefix, set] : out.model.named_sets()) {
    restore_records(ckpt, prefix, *set);
    expected += set->size();
  }
  if (expected != ckpt.records.size())
    throw CheckpointError(path.string() + ": " + std::to_string(ckpt.records.size()) + " records, architecture has " +
                          std::to_string(expected));
  return out;
}

Tensor translate_batch(const SynDiffModel& model, const FastSchedule& schedule, const Tensor& sources,
                       Direction direction, Rng& rng, int* generator_calls) {
  const auto& gen = direction == Direction::AtoB ? model.diff_gen_to_b : model.diff_gen_to_a;
  int calls = 0;
  DenoiserFn<float> fn = [&](const Tensor& x_t, const Tensor& y, int t) {
    ++calls;
    return gen.forward(x_t, y, t);
  };
  auto out = reverse_sample(fn, sources, schedule, rng);
  if (generator_calls) *generator_calls = calls;
  return out;
}

Image translate(const SynDiffModel& model, const FastSchedule& schedule, const Image& source, Direction direction,
                Rng& rng, int* generator_calls) {
  if (source.height != model.config.image_size || source.width != model.config.image_size)
    throw DimensionError("translate", "model expects " + std::to_string(model.config.image_size) + "x" +
                                          std::to_string(model.config.image_size) + " images, got " +
                                          std::to_string(source.height) + "x" + std::to_string(source.width));
  return image_from_tensor(translate_batch(model, schedule, stack_images({&source}), direction, rng, generator_calls));
}

MetricReport evaluate_translation(const SynDiffModel& model, const FastSchedule& schedule,
                                  const std::vector<EvalPair>& pairs, Direction direction, std::uint64_t seed) {
  MetricReport report;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs[i];
    const auto& source = direction == Direction::AtoB ? p.a : p.b;
    const auto& target = direction == Direction::AtoB ? p.b : p.a;
    Rng rng = stream_rng(seed, Stream::Sample, static_cast<std::uint32_t>(i));
    report.add(p.pair_id, target, translate(model, schedule, source, direction, rng));
  }
  return report;
}

MetricReport evaluate_source_baseline(const std::vector<EvalPair>& pairs, Direction direction) {
  MetricReport report;
  for (const auto& p : pairs) {
    if (direction == Direction::AtoB)
      report.add(p.pair_id, p.b, p.a);
    else
      report.add(p.pair_id, p.a, p.b);
  }
  return report;
}

}  // namespace syndiff
