#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <ostream>

#include "syndiff/data.hpp"
#include "syndiff/losses.hpp"
#include "syndiff/model.hpp"

namespace syndiff {

struct TrainConfig {
  int epochs = 50;
  double learning_rate = 1e-4;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.9;
  int batch_size = 4;
  ScheduleParams schedule;
  LossWeights weights;
  std::uint64_t seed = 0;
  NetConfig net;

  /// Throws std::invalid_argument (ScheduleError for schedule parameters).
  void validate() const;
};

/// First and second moment buffers for one parameter list.
template <typename T>
struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::int64_t steps = 0;
};

struct AdamOptions {
  double learning_rate = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.9;
  double eps = 1e-8;
};

/// One bias-corrected Adam update of `params` in place. Parameters the
/// gradients never reached are treated as having a zero gradient.
template <typename T>
void adam_step(const std::vector<BasicTensor<T>>& params, const Gradients<T>& grads, AdamState<T>& state,
               const AdamOptions& opts);

/// Scalar components of one iteration, evaluated before the updates they drive.
struct LossReport {
  int t = 0;
  double g_diff_a = 0, g_diff_b = 0, g_nondiff_a = 0, g_nondiff_b = 0;
  double d_diff_a = 0, d_diff_b = 0, d_nondiff_a = 0, d_nondiff_b = 0;
  double cycle = 0;
  double g_total = 0, d_total = 0;

  std::vector<double> components() const;
  bool finite() const;
};

/// Column header of the training log, tab separated.
std::string loss_log_header();
std::string loss_log_row(int epoch, int iteration, const LossReport& r);

/// Adversarial updates of the full model. Each iteration draws one t from
/// {k, ..., T} for the whole batch, updates the discriminators on detached
/// generator outputs, then updates the generators against the new
/// discriminators.
class Trainer {
 public:
  Trainer(SynDiffModel& model, const TrainConfig& config);
  ~Trainer();
  Trainer(const Trainer&) = delete;
  Trainer& operator=(const Trainer&) = delete;

  /// Generator forward pass shared by both updates.
  struct Pass {
    Graph graph;
    int t = 0;
    Tensor x0_a, x0_b, xt_a, xt_b;
    Tensor source_a, source_b;  // non-diffusive estimates in each domain
    Tensor est_a, est_b;        // diffusive x0 estimates
    Tensor fake_prev_a, fake_prev_b;
    LossReport report;
  };
  std::unique_ptr<Pass> begin(const Tensor& x0_a, const Tensor& x0_b, Rng& rng) const;
  void update_discriminators(Pass& pass, Rng& rng);
  void update_generators(Pass& pass);
  LossReport finish(Pass& pass) const;

  LossReport iteration(const Tensor& x0_a, const Tensor& x0_b, Rng& rng);

  const FastSchedule& schedule() const { return schedule_; }

 private:
  SynDiffModel& model_;
  TrainConfig config_;
  FastSchedule schedule_;
  std::vector<Tensor> gen_params_;
  std::vector<Tensor> disc_params_;
  AdamState<float> gen_state_;
  AdamState<float> disc_state_;
};

/// Shuffled cyclic index stream over one pool.
class BatchSampler {
 public:
  BatchSampler(std::size_t pool_size, Rng& rng);
  std::vector<std::size_t> next(int batch_size);

 private:
  std::size_t size_;
  Rng& rng_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

struct TrainOutputs {
  /// Written after every epoch and at the end; empty to skip.
  std::filesystem::path checkpoint;
  /// Per-iteration loss rows; null to skip.
  std::ostream* loss_log = nullptr;
  std::function<void(int epoch, const LossReport& last)> on_epoch;
};

struct TrainSummary {
  int iterations = 0;
  LossReport last;
};

/// Iterations per epoch cover the larger pool once; the smaller pool cycles.
int iterations_per_epoch(const UnpairedPools& pools, int batch_size);

/// Fresh model initialized from config.seed, trained in place.
TrainSummary train(SynDiffModel& model, const UnpairedPools& pools, const TrainConfig& config,
                   const TrainOutputs& outputs);

/// Conditional noise-prediction baseline on a k = 1 schedule.
class DdpmTrainer {
 public:
  DdpmTrainer(const NetConfig& net, const ScheduleParams& schedule, const AdamOptions& adam, Rng& init);
  /// One update on a batch of targets with their conditioning images.
  double iteration(const Tensor& x0, const Tensor& y, Rng& rng);
  const GeneratorNet<float>& network() const { return net_; }
  const FastSchedule& schedule() const { return schedule_; }

 private:
  GeneratorNet<float> net_;
  FastSchedule schedule_;
  AdamOptions adam_;
  std::vector<Tensor> params_;
  AdamState<float> state_;
};

}  // namespace syndiff
