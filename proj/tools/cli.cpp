#include "cli.hpp"

#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <json.hpp>
#include <sstream>
#include <variant>

namespace syndiff::cli {

namespace {

using FieldRef = std::variant<int*, double*, std::uint64_t*>;

struct Field {
  const char* key;
  const char* flag;
  const char* help;
  std::function<FieldRef(TrainConfig&)> ref;
};

const std::vector<Field>& fields() {
  static const std::vector<Field> table{
      {"epochs", "--epochs", "training epochs", [](TrainConfig& c) -> FieldRef { return &c.epochs; }},
      {"lr", "--lr", "Adam learning rate", [](TrainConfig& c) -> FieldRef { return &c.learning_rate; }},
      {"adam_beta1", "--beta1", "Adam first-moment decay", [](TrainConfig& c) -> FieldRef { return &c.adam_beta1; }},
      {"adam_beta2", "--beta2", "Adam second-moment decay", [](TrainConfig& c) -> FieldRef { return &c.adam_beta2; }},
      {"batch_size", "--batch-size", "images per modality per iteration",
       [](TrainConfig& c) -> FieldRef { return &c.batch_size; }},
      {"T", "--T", "diffusion length", [](TrainConfig& c) -> FieldRef { return &c.schedule.total_steps; }},
      {"k", "--k", "diffusion step size", [](TrainConfig& c) -> FieldRef { return &c.schedule.step; }},
      {"beta_min", "--beta-min", "lower noise bound", [](TrainConfig& c) -> FieldRef { return &c.schedule.beta_min; }},
      {"beta_max", "--beta-max", "upper noise bound", [](TrainConfig& c) -> FieldRef { return &c.schedule.beta_max; }},
      {"lambda_cyc", "--lambda-cyc", "cycle-consistency weight",
       [](TrainConfig& c) -> FieldRef { return &c.weights.lambda_cyc; }},
      {"gp_weight", "--gp-weight", "gradient-penalty weight",
       [](TrainConfig& c) -> FieldRef { return &c.weights.gp_weight; }},
      {"seed", "--seed", "random seed", [](TrainConfig& c) -> FieldRef { return &c.seed; }},
      {"image_size", "--image-size", "network input size (default: size of the training images)",
       [](TrainConfig& c) -> FieldRef { return &c.net.image_size; }},
      {"base_channels", "--base-channels", "generator width at full resolution",
       [](TrainConfig& c) -> FieldRef { return &c.net.base_channels; }},
      {"levels", "--levels", "generator resolution levels", [](TrainConfig& c) -> FieldRef { return &c.net.levels; }},
      {"embed_dim", "--embed-dim", "sinusoidal encoding width",
       [](TrainConfig& c) -> FieldRef { return &c.net.embed_dim; }},
      {"hidden_dim", "--hidden-dim", "temporal embedding width",
       [](TrainConfig& c) -> FieldRef { return &c.net.hidden_dim; }},
  };
  return table;
}

std::string render(FieldRef ref) {
  return std::visit(
      [](auto* p) {
        std::ostringstream os;
        os << *p;
        return os.str();
      },
      ref);
}

void line(std::ostream& out, const char* fmt, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, fmt, args...);
  out << buf << '\n';
}

// Validation failures of user-supplied values are usage errors.
template <typename F>
auto as_usage(F&& f) {
  try {
    return f();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open config file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::uint64_t seed = 0;
  int n_train = 64;
  int n_eval = 16;
  int size = 32;
  std::string out;
};

int cmd_synthdata(const SynthArgs& a, std::ostream& out) {
  const auto ds = as_usage([&] { return generate_toy_dataset(a.seed, a.n_train, a.n_eval, a.size); });
  write_dataset(a.out, ds);
  line(out, "seed: %llu", static_cast<unsigned long long>(a.seed));
  line(out, "wrote %d trainA, %d trainB, %d eval pairs (%dx%d) to %s", a.n_train, a.n_train, a.n_eval, a.size, a.size,
       a.out.c_str());
  return kExitOk;
}

struct TrainArgs {
  std::string data;
  std::string config_file;
  std::string out;
  std::string log;
  std::vector<std::pair<CLI::Option*, std::size_t>> overrides;
  std::vector<TrainConfig> storage{1};  // flag values parsed into a scratch config
};

int cmd_train(TrainArgs& a, std::ostream& out) {
  TrainConfig config;
  bool size_given = false;
  if (!a.config_file.empty()) {
    const auto text = read_text(a.config_file);
    apply_config_json(text, config);
    size_given = nlohmann::json::parse(text).contains("image_size");
  }
  for (const auto& [opt, index] : a.overrides) {
    if (opt->count() == 0) continue;
    const auto& f = fields()[index];
    std::visit([](auto* dst, auto* src) { *dst = static_cast<std::remove_pointer_t<decltype(dst)>>(*src); },
               f.ref(config), f.ref(a.storage[0]));
    size_given = size_given || std::string(f.key) == "image_size";
  }
  as_usage([&] {
    config.validate();
    return 0;
  });

  auto pools = read_training_pools(a.data);
  if (!size_given) config.net.image_size = pools.image_size();
  if (config.net.image_size != pools.image_size())
    throw UsageError("image_size " + std::to_string(config.net.image_size) + " does not match the " +
                     std::to_string(pools.image_size()) + " pixel training images in " + a.data);
  as_usage([&] {
    config.validate();
    return 0;
  });

  const auto schedule = config.schedule.build();
  line(out, "effective config: %s", config_to_json(config).c_str());
  line(out, "seed: %llu", static_cast<unsigned long long>(config.seed));
  line(out, "schedule: T=%d k=%d reverse steps=%d", schedule.total_steps(), schedule.step(), schedule.num_steps());
  line(out, "data: %zu trainA, %zu trainB images, %d iterations per epoch", pools.pool_a().size(),
       pools.pool_b().size(), iterations_per_epoch(pools, config.batch_size));

  const std::string log_path = a.log.empty() ? a.out + ".loss.tsv" : a.log;
  std::ofstream log(log_path);
  if (!log) throw std::runtime_error("cannot write loss log " + log_path);

  Rng init = stream_rng(config.seed, Stream::Init);
  SynDiffModel model(config.net, init);
  const auto start = std::chrono::steady_clock::now();
  TrainOutputs outputs;
  outputs.checkpoint = a.out;
  outputs.loss_log = &log;
  outputs.on_epoch = [&](int epoch, const LossReport& r) {
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    line(out, "epoch %d/%d  L_G=%.4f  L_D=%.4f  L_cyc=%.4f  %.1fs", epoch, config.epochs, r.g_total, r.d_total, r.cycle,
         secs);
    out.flush();
  };
  const auto summary = train(model, pools, config, outputs);
  if (!log) throw std::runtime_error("failed writing loss log " + log_path);
  line(out, "trained %d iterations; checkpoint %s; loss log %s", summary.iterations, a.out.c_str(), log_path.c_str());
  return kExitOk;
}

struct TranslateArgs {
  std::string ckpt;
  std::string input;
  std::string direction = "A2B";
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_translate(const TranslateArgs& a, std::ostream& out) {
  const auto direction = as_usage([&] { return parse_direction(a.direction); });
  const auto loaded = load_model(a.ckpt);
  const auto source = load_image(a.input);
  Rng rng = stream_rng(a.seed, Stream::Sample);
  int calls = 0;
  const auto result = translate(loaded.model, loaded.schedule.build(), source, direction, rng, &calls);
  save_image(a.out, result);
  line(out, "seed: %llu", static_cast<unsigned long long>(a.seed));
  line(out, "generator calls: %d", calls);
  line(out, "wrote %dx%d %s translation to %s", result.height, result.width, a.direction.c_str(), a.out.c_str());
  return kExitOk;
}

struct EvalArgs {
  std::string ckpt;
  std::string data;
  std::string direction = "A2B";
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const auto direction = as_usage([&] { return parse_direction(a.direction); });
  const auto loaded = load_model(a.ckpt);
  const auto pairs = read_eval_pairs(a.data);
  if (pairs.empty()) throw std::runtime_error("no eval pairs under " + a.data);
  const auto report = evaluate_translation(loaded.model, loaded.schedule.build(), pairs, direction, a.seed);
  const auto baseline = evaluate_source_baseline(pairs, direction);

  std::ofstream tsv(a.out);
  if (!tsv) throw std::runtime_error("cannot write " + a.out);
  write_metric_tsv(tsv, report);
  tsv.close();
  if (!tsv) throw std::runtime_error("failed writing " + a.out);

  line(out, "seed: %llu", static_cast<unsigned long long>(a.seed));
  line(out, "%zu pairs, direction %s", pairs.size(), a.direction.c_str());
  line(out, "synthesis  PSNR %.4f +- %.4f dB  SSIM %.4f +- %.4f", report.psnr().mean, report.psnr().std,
       report.ssim().mean, report.ssim().std);
  line(out, "baseline   PSNR %.4f +- %.4f dB  SSIM %.4f +- %.4f", baseline.psnr().mean, baseline.psnr().std,
       baseline.ssim().mean, baseline.ssim().std);
  return kExitOk;
}

struct ScheduleArgs {
  ScheduleParams params;
};

int cmd_schedule(const ScheduleArgs& a, std::ostream& out) {
  const auto s = as_usage([&] { return a.params.build(); });
  out << "t\tgamma\talpha\talpha_bar\n";
  for (int t : s.grid()) line(out, "%d\t%.8f\t%.8f\t%.8f", t, s.gamma(t), s.alpha(t), s.alpha_bar(t));
  return kExitOk;
}

}  // namespace

void apply_config_json(const std::string& text, TrainConfig& config) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw UsageError(std::string("config file is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw UsageError("config file must hold a JSON object");
  for (const auto& [key, value] : j.items()) {
    const auto it = std::find_if(fields().begin(), fields().end(), [&](const Field& f) { return key == f.key; });
    if (it == fields().end()) throw UsageError("unknown config key '" + key + "'");
    std::visit(
        [&](auto* dst) {
          using V = std::remove_pointer_t<decltype(dst)>;
          if constexpr (std::is_same_v<V, double>) {
            if (!value.is_number()) throw UsageError("config key '" + key + "' must be a number");
          } else if constexpr (std::is_same_v<V, std::uint64_t>) {
            if (!value.is_number_unsigned()) throw UsageError("config key '" + key + "' must be a non-negative integer");
          } else {
            if (!value.is_number_integer()) throw UsageError("config key '" + key + "' must be an integer");
          }
          *dst = value.get<V>();
        },
        it->ref(config));
  }
}

std::string config_to_json(const TrainConfig& config) {
  auto copy = config;
  nlohmann::ordered_json j;
  for (const auto& f : fields()) std::visit([&](auto* p) { j[f.key] = *p; }, f.ref(copy));
  return j.dump();
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Unpaired two-modality image translation with adversarial diffusion", "syndiff"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  SynthArgs synth;
  auto* s_cmd = app.add_subcommand("synthdata", "Generate the synthetic two-modality dataset");
  s_cmd->add_option("--seed", synth.seed, "dataset seed");
  s_cmd->add_option("--n-train", synth.n_train, "training images per modality");
  s_cmd->add_option("--n-eval", synth.n_eval, "paired evaluation images");
  s_cmd->add_option("--size", synth.size, "image side length (power of two, at least 16)");
  s_cmd->add_option("--out", synth.out, "output directory")->required();

  TrainArgs train_args;
  auto* t_cmd = app.add_subcommand("train", "Train all networks on the unpaired pools of a dataset directory");
  t_cmd->add_option("--data", train_args.data, "dataset directory with trainA/ and trainB/")->required();
  t_cmd->add_option("--config", train_args.config_file, "JSON file with flat TrainConfig keys; flags take precedence");
  t_cmd->add_option("--out", train_args.out, "checkpoint path, rewritten after every epoch")->required();
  t_cmd->add_option("--log", train_args.log, "loss log TSV (default: <out>.loss.tsv)");
  const TrainConfig defaults;
  for (std::size_t i = 0; i < fields().size(); ++i) {
    const auto& f = fields()[i];
    auto copy = defaults;
    const auto shown = std::string(f.key) == "image_size" ? std::string("from data") : render(f.ref(copy));
    auto* opt = std::visit(
        [&](auto* p) { return t_cmd->add_option(f.flag, *p, f.help); }, f.ref(train_args.storage[0]));
    opt->default_str(shown);
    train_args.overrides.emplace_back(opt, i);
  }

  TranslateArgs tr;
  auto* x_cmd = app.add_subcommand("translate", "Translate one image with a trained checkpoint");
  x_cmd->add_option("--ckpt", tr.ckpt, "checkpoint file")->required();
  x_cmd->add_option("--input", tr.input, "source image (.pgm or .f32)")->required();
  x_cmd->add_option("--direction", tr.direction, "A2B or B2A");
  x_cmd->add_option("--seed", tr.seed, "sampling seed");
  x_cmd->add_option("--out", tr.out, "output image (.pgm or .f32)")->required();

  EvalArgs ev;
  auto* e_cmd = app.add_subcommand("eval", "Score translations of the eval pairs with PSNR and SSIM");
  e_cmd->add_option("--ckpt", ev.ckpt, "checkpoint file")->required();
  e_cmd->add_option("--data", ev.data, "dataset directory with evalA/ and evalB/")->required();
  e_cmd->add_option("--direction", ev.direction, "A2B or B2A");
  e_cmd->add_option("--seed", ev.seed, "sampling seed");
  e_cmd->add_option("--out", ev.out, "metric TSV path")->required();

  ScheduleArgs sc;
  auto* c_cmd = app.add_subcommand("schedule", "Print the noise schedule as TSV");
  c_cmd->add_option("--T", sc.params.total_steps, "diffusion length");
  c_cmd->add_option("--k", sc.params.step, "diffusion step size");
  c_cmd->add_option("--beta-min", sc.params.beta_min, "lower noise bound");
  c_cmd->add_option("--beta-max", sc.params.beta_max, "upper noise bound");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (s_cmd->parsed()) return cmd_synthdata(synth, out);
    if (t_cmd->parsed()) return cmd_train(train_args, out);
    if (x_cmd->parsed()) return cmd_translate(tr, out);
    if (e_cmd->parsed()) return cmd_eval(ev, out);
    return cmd_schedule(sc, out);
  } catch (const UsageError& e) {
    err << "syndiff: error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "syndiff: error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace syndiff::cli
