#include "fsep/train.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>

#include "fsep/error.hpp"

namespace fsep {

void TrainConfig::validate() const {
  if (way < 1 || shot < 1 || query < 1) {
    raise(ErrorCode::InvalidValue, "way/shot/query must be >= 1");
  }
  if (episodes_per_iter < 1) raise(ErrorCode::InvalidValue, "episodes_per_iter must be >= 1");
  if (lr0 <= 0) raise(ErrorCode::InvalidValue, "lr0 must be > 0");
  if (schedule_multiplier != 1 && schedule_multiplier != 3 && schedule_multiplier != 5) {
    raise(ErrorCode::InvalidValue, "schedule multiplier must be 1, 3 or 5");
  }
  if (max_iters < 1) raise(ErrorCode::InvalidValue, "max_iters must be >= 1");
  if (val_every < 1 || val_episodes < 1 || patience < 1) {
    raise(ErrorCode::InvalidValue, "val_every/val_episodes/patience must be >= 1");
  }
  if (val_way < 0) raise(ErrorCode::InvalidValue, "val_way must be >= 0");
}

double lr_at(int64_t iter, double lr0, int schedule_multiplier) {
  const int64_t period = 2000 * static_cast<int64_t>(schedule_multiplier);
  const int64_t halvings = iter / period;
  return std::ldexp(lr0, -static_cast<int>(halvings));
}

int64_t default_max_iters(int episodes_per_iter) {
  switch (episodes_per_iter) {
    case 1: return 450000;
    case 3: return 150000;
    case 5: return 90000;
    default:
      raise(ErrorCode::InvalidValue,
            "no default iteration budget for E = " + std::to_string(episodes_per_iter) +
                "; set max_iters explicitly");
  }
}

AdamState AdamState::init_like(const ParamSet& params) {
  AdamState s;
  s.m.reserve(params.entries.size());
  s.v.reserve(params.entries.size());
  for (const auto& [name, tensor] : params.entries) {
    s.m.emplace_back(tensor.shape());
    s.v.emplace_back(tensor.shape());
  }
  return s;
}

namespace {

void adam_update(ParamSet& params, AdamState& opt, const GradMap<float>& grads, double lr) {
  opt.t += 1;
  const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.t));
  const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.t));
  const float b1 = static_cast<float>(opt.beta1);
  const float b2 = static_cast<float>(opt.beta2);
  const float inv_bc1 = static_cast<float>(1.0 / bc1);
  const float inv_bc2 = static_cast<float>(1.0 / bc2);
  const float flr = static_cast<float>(lr);
  const float feps = static_cast<float>(opt.eps);
  for (size_t i = 0; i < params.entries.size(); ++i) {
    TensorF& p = params.entries[i].second;
    TensorF& m = opt.m[i];
    TensorF& v = opt.v[i];
    const TensorF& g = grads.grads[i];
    for (int64_t j = 0; j < p.size(); ++j) {
      m[j] = b1 * m[j] + (1.0f - b1) * g[j];
      v[j] = b2 * v[j] + (1.0f - b2) * g[j] * g[j];
      const float mhat = m[j] * inv_bc1;
      const float vhat = v[j] * inv_bc2;
      p[j] -= flr * mhat / (std::sqrt(vhat) + feps);
    }
  }
}

void check_class_disjoint(const Dataset& a, const Dataset& b) {
  std::set<std::string> labels;
  for (const ClassRecord& c : a.classes) labels.insert(c.label);
  for (const ClassRecord& c : b.classes) {
    if (labels.count(c.label)) {
      raise(ErrorCode::OverlappingSplits, "class " + c.label + " appears in train and validation sets");
    }
  }
}

struct ValScore {
  double loss = 0;
  double acc = 0;
};

ValScore run_validation(const EmbedderSpec& spec, const ParamSet& params, const Dataset& val_set,
                        const TrainConfig& config, Rng& val_rng) {
  const int way = config.val_way > 0 ? config.val_way : config.way;
  ValScore total;
  for (int64_t e = 0; e < config.val_episodes; ++e) {
    Episode ep = sample_episode(val_set, way, config.shot, config.query, val_rng);
    EpisodeScore s = score_episode(spec, params, val_set, ep, config.distance);
    total.loss += s.loss;
    total.acc += s.accuracy;
  }
  total.loss /= static_cast<double>(config.val_episodes);
  total.acc /= static_cast<double>(config.val_episodes);
  return total;
}

TrainResult run_loop(Checkpoint state, const Dataset& train_set, const Dataset& val_set,
                     int64_t max_iters, const ValidationHook& on_validation) {
  const EmbedderSpec& spec = state.spec;
  const TrainConfig& config = state.config;
  check_class_disjoint(train_set, val_set);

  Rng sampler(0);
  sampler.restore_state(state.sampling_rng_state);
  Rng validator(0);
  validator.restore_state(state.validation_rng_state);

  TrainResult result;
  bool stopped = false;
  for (int64_t t = state.iteration + 1; t <= max_iters && !stopped; ++t) {
    const double lr = lr_at(t - 1, config.lr0, config.schedule_multiplier);
    Minibatch mb = sample_minibatch(train_set, config.episodes_per_iter, config.way, config.shot,
                                    config.query, sampler);
    double loss;
    try {
      loss = step(spec, state.params, state.opt, train_set, mb, config.distance, lr);
    } catch (const Error& err) {
      if (err.code() == ErrorCode::NonFiniteLoss) {
        raise(ErrorCode::NonFiniteLoss, "at iteration " + std::to_string(t));
      }
      throw;
    }
    state.iteration = t;

    if (t % config.val_every == 0) {
      const ValScore val = run_validation(spec, state.params, val_set, config, validator);
      MetricPoint point{t, lr, loss, val.loss, val.acc};
      result.metrics.push_back(point);
      if (on_validation) on_validation(point);
      if (val.loss < state.best_val_loss) {
        state.best_val_loss = val.loss;
        state.best_val_iter = t;
        state.best_params = state.params;
        state.bad_validations = 0;
      } else {
        state.bad_validations += 1;
        if (state.bad_validations >= config.patience) stopped = true;
      }
    }
  }

  state.sampling_rng_state = sampler.state_string();
  state.validation_rng_state = validator.state_string();
  result.checkpoint = std::move(state);
  return result;
}

Checkpoint fresh_state(const Dataset& train_set, const EmbedderSpec& spec, const TrainConfig& config) {
  config.validate();
  spec.validate();
  if (config.way > train_set.num_classes()) {
    raise(ErrorCode::WayExceedsClasses, "way " + std::to_string(config.way) + " > " +
                                            std::to_string(train_set.num_classes()) + " train classes");
  }
  Checkpoint state;
  state.spec = spec;
  state.config = config;
  Rng init = Rng::for_stream(config.seed, Stream::init);
  state.params = init_params<float>(spec, init);
  state.opt = AdamState::init_like(state.params);
  state.iteration = 0;
  state.sampling_rng_state = Rng::for_stream(config.seed, Stream::sampling).state_string();
  state.validation_rng_state = Rng::for_stream(config.seed, Stream::validation).state_string();
  return state;
}

}  // namespace

double step(const EmbedderSpec& spec, ParamSet& params, AdamState& opt, const Dataset& data,
            const Minibatch& mb, DistanceKind distance, double lr) {
  if (mb.episodes.empty()) raise(ErrorCode::InvalidArgument, "empty minibatch");
  if (lr <= 0) raise(ErrorCode::InvalidArgument, "learning rate must be > 0");
  Graph<float> g;
  ParamNodes<float> nodes = insert_params(g, params);
  NodeId total{-1};
  for (const Episode& e : mb.episodes) {
    NodeId loss = episode_loss(g, spec, nodes, data, e, distance);
    total = total.valid() ? g.add(total, loss) : loss;
  }
  const size_t count = mb.episodes.size();
  if (count > 1) total = g.scalar_mul(total, 1.0 / static_cast<double>(count));

  const double loss = static_cast<double>(g.value(total)[0]);
  if (!std::isfinite(loss)) raise(ErrorCode::NonFiniteLoss, "training loss is not finite");

  GradMap<float> grads = g.backward(total);
  adam_update(params, opt, grads, lr);
  return loss;
}

TrainResult train(const Dataset& train_set, const Dataset& val_set, const EmbedderSpec& spec,
                  const TrainConfig& config, const ValidationHook& on_validation) {
  return run_loop(fresh_state(train_set, spec, config), train_set, val_set, config.max_iters,
                  on_validation);
}

TrainResult resume_train(const Checkpoint& ckpt, const Dataset& train_set, const Dataset& val_set,
                         std::optional<int64_t> max_iters_override, const ValidationHook& on_validation) {
  Checkpoint state = ckpt;
  const int64_t budget = max_iters_override.value_or(state.config.max_iters);
  if (max_iters_override) state.config.max_iters = budget;
  return run_loop(std::move(state), train_set, val_set, budget, on_validation);
}

TrainResult pretrain_then_finetune(const Dataset& train_set, const Dataset& val_set,
                                   const EmbedderSpec& spec, const TrainConfig& pre_config,
                                   const TrainConfig& target_config, bool finetune,
                                   const ValidationHook& on_validation) {
  if (pre_config.way <= target_config.way) {
    raise(ErrorCode::WayOrderingViolated,
          "pretraining way " + std::to_string(pre_config.way) + " must exceed target way " +
              std::to_string(target_config.way));
  }
  if (pre_config.way >= train_set.num_classes()) {
    raise(ErrorCode::WayOrderingViolated, "pretraining way must be below the class count " +
                                              std::to_string(train_set.num_classes()));
  }

  TrainConfig phase1 = pre_config;
  if (val_set.num_classes() < pre_config.way) {
    // Not enough validation classes for the higher way: monitor the target way.
    phase1.val_way = target_config.way;
  }
  TrainResult pre = train(train_set, val_set, spec, phase1, on_validation);
  if (!finetune) return pre;

  TrainConfig phase2 = target_config;
  phase2.max_iters = std::min<int64_t>(target_config.max_iters, 20000);
  phase2.validate();

  Checkpoint state;
  state.spec = spec;
  state.config = phase2;
  state.params = pre.checkpoint.eval_params();  // theta_0 from pretraining
  state.opt = AdamState::init_like(state.params);
  state.iteration = 0;
  state.sampling_rng_state = Rng::for_stream(phase2.seed, Stream::sampling).state_string();
  state.validation_rng_state = Rng::for_stream(phase2.seed, Stream::validation).state_string();

  TrainResult fine = run_loop(std::move(state), train_set, val_set, phase2.max_iters, on_validation);
  return fine;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string metrics_csv_header() { return "iter,lr,train_loss,val_loss,val_acc"; }

std::string metrics_csv_row(const MetricPoint& p) {
  return std::to_string(p.iter) + "," + format_double(p.lr) + "," + format_double(p.train_loss) + "," +
         format_double(p.val_loss) + "," + format_double(p.val_acc);
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricPoint>& series) {
  std::ofstream out(path, std::ios::binary);
  if (!out) raise(ErrorCode::IoFailure, "cannot write " + path.string());
  out << metrics_csv_header() << "\n";
  for (const MetricPoint& p : series) out << metrics_csv_row(p) << "\n";
}

}  // namespace fsep
