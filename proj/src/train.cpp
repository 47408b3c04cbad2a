#include "syndiff/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "syndiff/diffusion.hpp"

namespace syndiff {

void TrainConfig::validate() const {
  if (epochs <= 0) throw std::invalid_argument("epochs must be positive, got " + std::to_string(epochs));
  if (batch_size <= 0) throw std::invalid_argument("batch_size must be positive, got " + std::to_string(batch_size));
  if (!(learning_rate > 0) || !std::isfinite(learning_rate))
    throw std::invalid_argument("learning rate must be positive and finite");
  if (!(adam_beta1 >= 0 && adam_beta1 < 1) || !(adam_beta2 >= 0 && adam_beta2 < 1))
    throw std::invalid_argument("Adam betas must lie in [0, 1)");
  weights.validate();
  net.validate();
  (void)schedule.build();
}

template <typename T>
void adam_step(const std::vector<BasicTensor<T>>& params, const Gradients<T>& grads, AdamState<T>& state,
               const AdamOptions& opts) {
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.numel(), 0.0);
      state.v.emplace_back(p.numel(), 0.0);
    }
  }
  if (state.m.size() != params.size()) throw std::logic_error("adam_step: parameter list changed between steps");
  ++state.steps;
  const double c1 = 1.0 - std::pow(opts.beta1, static_cast<double>(state.steps));
  const double c2 = 1.0 - std::pow(opts.beta2, static_cast<double>(state.steps));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i];
    auto& m = state.m[i];
    auto& v = state.v[i];
    auto data = p.mutable_data();
    const bool reached = grads.reached(p);
    const auto g = reached ? grads.of(p) : BasicTensor<T>();
    for (std::size_t j = 0; j < data.size(); ++j) {
      const double gj = reached ? static_cast<double>(g.data()[j]) : 0.0;
      m[j] = opts.beta1 * m[j] + (1.0 - opts.beta1) * gj;
      v[j] = opts.beta2 * v[j] + (1.0 - opts.beta2) * gj * gj;
      const double update = opts.learning_rate * (m[j] / c1) / (std::sqrt(v[j] / c2) + opts.eps);
      data[j] = static_cast<T>(static_cast<double>(data[j]) - update);
    }
  }
}

template void adam_step<float>(const std::vector<Tensor>&, const Gradients<float>&, AdamState<float>&,
                               const AdamOptions&);
template void adam_step<double>(const std::vector<Tensor64>&, const Gradients<double>&, AdamState<double>&,
                                const AdamOptions&);

std::vector<double> LossReport::components() const {
  return {g_diff_a, g_diff_b, g_nondiff_a, g_nondiff_b, d_diff_a, d_diff_b, d_nondiff_a, d_nondiff_b, cycle};
}

bool LossReport::finite() const {
  const auto c = components();
  return std::all_of(c.begin(), c.end(), [](double v) { return std::isfinite(v); }) && std::isfinite(g_total) &&
         std::isfinite(d_total);
}

std::string loss_log_header() {
  return "epoch\titer\tt\tL_G_total\tL_D_total\tL_cyc\tL_G_diff_A\tL_G_diff_B\tL_G_nondiff_A\tL_G_nondiff_B"
         "\tL_D_diff_A\tL_D_diff_B\tL_D_nondiff_A\tL_D_nondiff_B";
}

std::string loss_log_row(int epoch, int iteration, const LossReport& r) {
  std::string out = std::to_string(epoch) + "\t" + std::to_string(iteration) + "\t" + std::to_string(r.t);
  char buf[32];
  for (double v : {r.g_total, r.d_total, r.cycle, r.g_diff_a, r.g_diff_b, r.g_nondiff_a, r.g_nondiff_b, r.d_diff_a,
                   r.d_diff_b, r.d_nondiff_a, r.d_nondiff_b}) {
    std::snprintf(buf, sizeof buf, "\t%.6f", v);
    out += buf;
  }
  return out;
}

// ---------------------------------------------------------------------------


Trainer::Trainer(SynDiffModel& model, const TrainConfig& config)
    : model_(model),
      config_(config),
      schedule_(config.schedule.build()),
      gen_params_(model.generator_parameters()),
      disc_params_(model.discriminator_parameters()) {
  config_.validate();
  if (!(config.net == model.config)) throw std::invalid_argument("trainer config does not match the model");
}

Trainer::~Trainer() = default;

std::unique_ptr<Trainer::Pass> Trainer::begin(const Tensor& x0_a, const Tensor& x0_b, Rng& rng) const {
  auto pass = std::make_unique<Pass>();
  std::uniform_int_distribution<int> pick(1, schedule_.num_steps());
  pass->t = pick(rng) * schedule_.step();
  pass->report.t = pass->t;
  pass->x0_a = x0_a.detach();
  pass->x0_b = x0_b.detach();
  pass->xt_a = forward_marginal(pass->x0_a, pass->t, schedule_, rng);
  pass->xt_b = forward_marginal(pass->x0_b, pass->t, schedule_, rng);

  GraphScope<float> scope(pass->graph);
  pass->source_b = model_.nondiff_gen_a2b.forward(pass->x0_a);
  pass->source_a = model_.nondiff_gen_b2a.forward(pass->x0_b);
  pass->est_a = model_.diff_gen_to_a.forward(pass->xt_a, pass->source_b, pass->t);
  pass->est_b = model_.diff_gen_to_b.forward(pass->xt_b, pass->source_a, pass->t);
  pass->fake_prev_a = posterior_sample(posterior_params(pass->xt_a, pass->est_a, pass->t, schedule_), rng);
  pass->fake_prev_b = posterior_sample(posterior_params(pass->xt_b, pass->est_b, pass->t, schedule_), rng);
  return pass;
}

void Trainer::update_discriminators(Pass& pass, Rng& rng) {
  Graph graph;
  GraphScope<float> scope(graph);
  const double gp = config_.weights.gp_weight;
  auto diffusive = [&](const DiscriminatorNet<float>& disc, const Tensor& x0, const Tensor& xt, const Tensor& fake) {
    Tensor real;
    {
      NoGradGuard ng;
      real = posterior_sample(posterior_params(xt, x0, pass.t, schedule_), rng);
    }
    real.requires_grad_();
    auto real_logits = disc.forward(real, xt, pass.t);
    auto fake_logits = disc.forward(fake.detach(), xt, pass.t);
    auto penalty = gp > 0 ? grad_norm_sq(graph, real_logits, real) : Tensor();
    return loss_d_adv(real_logits, fake_logits, penalty, gp);
  };
  auto non_diffusive = [&](const DiscriminatorNet<float>& disc, const Tensor& real, const Tensor& fake) {
    return loss_d_adv(disc.forward(real), disc.forward(fake.detach()), Tensor(), 0.0);
  };
  auto d_diff_a = diffusive(model_.diff_disc_a, pass.x0_a, pass.xt_a, pass.fake_prev_a);
  auto d_diff_b = diffusive(model_.diff_disc_b, pass.x0_b, pass.xt_b, pass.fake_prev_b);
  auto d_nondiff_a = non_diffusive(model_.nondiff_disc_a, pass.x0_a, pass.source_a);
  auto d_nondiff_b = non_diffusive(model_.nondiff_disc_b, pass.x0_b, pass.source_b);
  auto total = total_d(d_diff_a, d_diff_b, d_nondiff_a, d_nondiff_b);

  auto& r = pass.report;
  r.d_diff_a = d_diff_a.item();
  r.d_diff_b = d_diff_b.item();
  r.d_nondiff_a = d_nondiff_a.item();
  r.d_nondiff_b = d_nondiff_b.item();
  r.d_total = total.item();

  const auto grads = backward(graph, total);
  const AdamOptions opts{config_.learning_rate, config_.adam_beta1, config_.adam_beta2, 1e-8};
  adam_step(disc_params_, grads, disc_state_, opts);
}

void Trainer::update_generators(Pass& pass) {
  GraphScope<float> scope(pass.graph);
  auto g_diff_a = loss_g_adv(model_.diff_disc_a.forward(pass.fake_prev_a, pass.xt_a, pass.t));
  auto g_diff_b = loss_g_adv(model_.diff_disc_b.forward(pass.fake_prev_b, pass.xt_b, pass.t));
  auto g_nondiff_a = loss_g_adv(model_.nondiff_disc_a.forward(pass.source_a));
  auto g_nondiff_b = loss_g_adv(model_.nondiff_disc_b.forward(pass.source_b));
  auto recon_a = model_.nondiff_gen_b2a.forward(pass.source_b);
  auto recon_b = model_.nondiff_gen_a2b.forward(pass.source_a);
  auto cycle = loss_cycle(pass.x0_a, pass.x0_b, recon_a, recon_b, pass.est_a, pass.est_b);
  auto total = total_g(g_diff_a, g_diff_b, g_nondiff_a, g_nondiff_b, cycle, config_.weights.lambda_cyc);

  auto& r = pass.report;
  r.g_diff_a = g_diff_a.item();
  r.g_diff_b = g_diff_b.item();
  r.g_nondiff_a = g_nondiff_a.item();
  r.g_nondiff_b = g_nondiff_b.item();
  r.cycle = cycle.item();
  r.g_total = total.item();

  const auto grads = backward(pass.graph, total);
  const AdamOptions opts{config_.learning_rate, config_.adam_beta1, config_.adam_beta2, 1e-8};
  adam_step(gen_params_, grads, gen_state_, opts);
}

LossReport Trainer::finish(Pass& pass) const { return pass.report; }

LossReport Trainer::iteration(const Tensor& x0_a, const Tensor& x0_b, Rng& rng) {
  auto pass = begin(x0_a, x0_b, rng);
  update_discriminators(*pass, rng);
  update_generators(*pass);
  return finish(*pass);
}

// ---------------------------------------------------------------------------

BatchSampler::BatchSampler(std::size_t pool_size, Rng& rng) : size_(pool_size), rng_(rng), order_(pool_size) {
  if (pool_size == 0) throw std::invalid_argument("BatchSampler: empty pool");
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  std::shuffle(order_.begin(), order_.end(), rng_);
}

std::vector<std::size_t> BatchSampler::next(int batch_size) {
  std::vector<std::size_t> out;
  out.reserve(static_cast<std::size_t>(batch_size));
  for (int i = 0; i < batch_size; ++i) {
    if (pos_ == size_) {
      std::shuffle(order_.begin(), order_.end(), rng_);
      pos_ = 0;
    }
    out.push_back(order_[pos_++]);
  }
  return out;
}

int iterations_per_epoch(const UnpairedPools& pools, int batch_size) {
  const auto n = std::max(pools.pool_a().size(), pools.pool_b().size());
  return static_cast<int>((n + static_cast<std::size_t>(batch_size) - 1) / static_cast<std::size_t>(batch_size));
}

namespace {

Tensor gather(const std::vector<Image>& pool, const std::vector<std::size_t>& idx) {
  std::vector<const Image*> ptrs;
  for (auto i : idx) ptrs.push_back(&pool[i]);
  return stack_images(ptrs);
}

}  // namespace

TrainSummary train(SynDiffModel& model, const UnpairedPools& pools, const TrainConfig& config,
                   const TrainOutputs& outputs) {
  config.validate();
  if (pools.image_size() != config.net.image_size)
    throw std::invalid_argument("training images are " + std::to_string(pools.image_size()) +
                                " pixels wide, network expects " + std::to_string(config.net.image_size));
  Trainer trainer(model, config);
  Rng rng = stream_rng(config.seed, Stream::Train);
  BatchSampler sample_a(pools.pool_a().size(), rng);
  BatchSampler sample_b(pools.pool_b().size(), rng);
  const int per_epoch = iterations_per_epoch(pools, config.batch_size);
  if (outputs.loss_log) *outputs.loss_log << loss_log_header() << '\n';

  TrainSummary summary;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    for (int it = 0; it < per_epoch; ++it) {
      const auto xa = gather(pools.pool_a(), sample_a.next(config.batch_size));
      const auto xb = gather(pools.pool_b(), sample_b.next(config.batch_size));
      summary.last = trainer.iteration(xa, xb, rng);
      ++summary.iterations;
      if (outputs.loss_log) *outputs.loss_log << loss_log_row(epoch, summary.iterations, summary.last) << '\n';
    }
    if (outputs.loss_log) outputs.loss_log->flush();
    if (!outputs.checkpoint.empty()) save_model(outputs.checkpoint, model, config.schedule);
    if (outputs.on_epoch) outputs.on_epoch(epoch, summary.last);
  }
  return summary;
}

// ---------------------------------------------------------------------------

DdpmTrainer::DdpmTrainer(const NetConfig& net, const ScheduleParams& schedule, const AdamOptions& adam, Rng& init)
    : net_(net, init, OutputActivation::None),
      schedule_(schedule.build()),
      adam_(adam),
      params_(net_.parameters().tensors()) {
  if (schedule_.step() != 1) throw ScheduleError("the noise-prediction baseline requires k = 1");
}

double DdpmTrainer::iteration(const Tensor& x0, const Tensor& y, Rng& rng) {
  Graph graph;
  GraphScope<float> scope(graph);
  ConditionalNoiseFn<float> fn = [this](const Tensor& x_t, const Tensor& cond, int t) {
    return net_.forward(x_t, cond, t);
  };
  auto loss = ddpm_eps_loss(fn, x0, y, schedule_, rng);
  const double value = loss.item();
  adam_step(params_, backward(graph, loss), state_, adam_);
  return value;
}

}  // namespace syndiff
