#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "fsep/data.hpp"
#include "fsep/embed.hpp"
#include "fsep/episodes.hpp"
#include "fsep/protonet.hpp"

namespace fsep {

struct TrainConfig {
  int way = 5;
  int shot = 1;
  int query = 15;
  int episodes_per_iter = 1;
  DistanceKind distance = DistanceKind::sq_euclidean;
  double lr0 = 1e-3;
  int schedule_multiplier = 1;  // halve the lr every 2000*m iterations, m in {1,3,5}
  int64_t max_iters = 450000;
  int64_t val_every = 100;
  int64_t val_episodes = 100;
  int64_t patience = 20;  // consecutive non-improving validations before stopping
  int val_way = 0;        // 0 = validate at `way`; pretraining monitors a lower way
  uint64_t seed = 0;

  void validate() const;
};

/// lr0 * 0.5^floor(iter / (2000*m)). Exact halving (power-of-two scaling).
double lr_at(int64_t iter, double lr0, int schedule_multiplier);

/// Default iteration budgets: E = 1/3/5 -> 450000/150000/90000, so every
/// setting processes the same 450000 episodes.
int64_t default_max_iters(int episodes_per_iter);

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int64_t t = 0;
  std::vector<TensorF> m;  // aligned with ParamSet entries
  std::vector<TensorF> v;

  static AdamState init_like(const ParamSet& params);
};

/// One optimizer update from an E-episode minibatch. The loss is the mean
/// NLL over all E*K*Q query examples (each episode scored against its own
/// prototypes). Returns that loss.
double step(const EmbedderSpec& spec, ParamSet& params, AdamState& opt, const Dataset& data,
            const Minibatch& mb, DistanceKind distance, double lr);

struct MetricPoint {
  int64_t iter = 0;  // completed iterations
  double lr = 0;     // learning rate used at that iteration
  double train_loss = 0;
  double val_loss = 0;
  double val_acc = 0;
};

struct Checkpoint {
  static constexpr uint32_t kVersion = 1;

  EmbedderSpec spec;
  TrainConfig config;
  ParamSet params;                    // state at `iteration`
  std::optional<ParamSet> best_params;  // parameters at the best validation
  AdamState opt;
  int64_t iteration = 0;
  std::string sampling_rng_state;
  std::string validation_rng_state;
  double best_val_loss = std::numeric_limits<double>::infinity();
  int64_t best_val_iter = -1;
  int64_t bad_validations = 0;

  /// Parameters to evaluate / hand off: best-validation ones when a
  /// validation ever ran, otherwise the current ones.
  const ParamSet& eval_params() const { return best_params ? *best_params : params; }
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<MetricPoint> metrics;
};

using ValidationHook = std::function<void(const MetricPoint&)>;

/// Validation-monitored training: runs up to config.max_iters steps,
/// validating every val_every iterations on val_episodes fresh episodes
/// from a dedicated stream, tracking best-validation parameters and
/// stopping early after `patience` consecutive non-improving validations.
TrainResult train(const Dataset& train_set, const Dataset& val_set, const EmbedderSpec& spec,
                  const TrainConfig& config, const ValidationHook& on_validation = {});

/// Continues a run from a checkpoint; reproduces the uninterrupted run
/// exactly (same seeds). `max_iters_override` extends the budget.
TrainResult resume_train(const Checkpoint& ckpt, const Dataset& train_set, const Dataset& val_set,
                         std::optional<int64_t> max_iters_override = {},
                         const ValidationHook& on_validation = {});

/// Cross-way pretraining: phase 1 trains at pre_config.way (validation
/// monitored at target way when the validation set has fewer classes), then
/// either fine-tunes at target_config.way from the phase-1 best parameters
/// (fresh optimizer state, iteration cap min(target max_iters, 20000)) or
/// returns the phase-1 checkpoint unchanged.
TrainResult pretrain_then_finetune(const Dataset& train_set, const Dataset& val_set,
                                   const EmbedderSpec& spec, const TrainConfig& pre_config,
                                   const TrainConfig& target_config, bool finetune,
                                   const ValidationHook& on_validation = {});

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Shortest round-trip decimal formatting (used by every CSV writer so
/// reruns are byte-identical).
std::string format_double(double v);

std::string metrics_csv_header();
std::string metrics_csv_row(const MetricPoint& p);
void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricPoint>& series);

}  // namespace fsep
