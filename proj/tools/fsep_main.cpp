#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "fsep/episodes.hpp"
#include "fsep/error.hpp"
#include "fsep/evalreport.hpp"
#include "fsep/runconfig.hpp"
#include "fsep/spectrum.hpp"
#include "fsep/train.hpp"

namespace {

namespace fs = std::filesystem;

struct CommonFlags {
  std::optional<std::string> config_path;
  std::optional<std::string> data;
  std::optional<std::string> checkpoint;
  std::optional<std::string> out;
  std::optional<int> way, shot, query, episodes_per_iter, schedule;
  std::optional<std::string> distance;
  std::optional<int64_t> max_iters;
  std::optional<uint64_t> seed;
};

void add_common_flags(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config_path, "run config JSON (flags override file values)");
  cmd->add_option("--data", f.data, "dataset: image folder or synth description .json");
  cmd->add_option("--checkpoint", f.checkpoint, "checkpoint file path");
  cmd->add_option("--out", f.out, "output directory (default .)");
  cmd->add_option("--way", f.way, "classes per episode (default 5)");
  cmd->add_option("--shot", f.shot, "support examples per class (default 1)");
  cmd->add_option("--query", f.query, "query examples per class (default 15)");
  cmd->add_option("--episodes-per-iter", f.episodes_per_iter, "episodes per minibatch E (default 1)");
  cmd->add_option("--distance", f.distance, "euclid or cosine (default euclid)")
      ->check(CLI::IsMember({"euclid", "cosine"}));
  cmd->add_option("--schedule", f.schedule, "halve lr every 2000*m iterations, m in {1,3,5} (default 1)")
      ->check(CLI::IsMember({1, 3, 5}));
  cmd->add_option("--max-iters", f.max_iters,
                  "iteration budget (default 450000/150000/90000 for E=1/3/5)");
  cmd->add_option("--seed", f.seed, "run seed (default 0)");
}

fsep::RunConfig resolve_config(const CommonFlags& f, bool require_config) {
  fsep::RunConfig cfg;
  if (f.config_path) {
    cfg = fsep::parse_config_file(*f.config_path);
  } else if (require_config) {
    fsep::raise(fsep::ErrorCode::InvalidValue, "--config is required for this command");
  }
  if (f.data) {
    cfg.data_path = *f.data;
    cfg.synth.reset();
  }
  if (f.out) cfg.out_dir = *f.out;
  if (f.checkpoint) cfg.checkpoint_path = *f.checkpoint;
  if (f.way) cfg.train.way = *f.way;
  if (f.shot) cfg.train.shot = *f.shot;
  if (f.query) cfg.train.query = *f.query;
  if (f.episodes_per_iter) {
    cfg.train.episodes_per_iter = *f.episodes_per_iter;
    if (!f.max_iters && !f.config_path) {
      cfg.train.max_iters = fsep::default_max_iters(*f.episodes_per_iter);
    }
  }
  if (f.distance) cfg.train.distance = fsep::distance_kind_from_name(*f.distance);
  if (f.schedule) cfg.train.schedule_multiplier = *f.schedule;
  if (f.max_iters) cfg.train.max_iters = *f.max_iters;
  if (f.seed) cfg.train.seed = *f.seed;
  return cfg;
}

/// Streams one CSV row per validation so long runs can be watched and the
/// file survives interruption.
class MetricsStream {
 public:
  explicit MetricsStream(const fs::path& path) : out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) fsep::raise(fsep::ErrorCode::IoFailure, "cannot write " + path.string());
    out_ << fsep::metrics_csv_header() << "\n";
    out_.flush();
  }
  void operator()(const fsep::MetricPoint& p) {
    out_ << fsep::metrics_csv_row(p) << "\n";
    out_.flush();
  }

 private:
  std::ofstream out_;
};

int cmd_train(const CommonFlags& flags) {
  fsep::RunConfig cfg = resolve_config(flags, true);
  cfg.validate();
  const fsep::Dataset full = fsep::load_dataset(cfg);
  const auto splits = fsep::apply_splits(cfg, full);

  fs::create_directories(cfg.out_dir);
  MetricsStream metrics(fs::path(cfg.out_dir) / "metrics.csv");
  fsep::TrainResult result = fsep::train(splits[0], splits[1], cfg.embedder, cfg.train,
                                         [&metrics](const fsep::MetricPoint& p) { metrics(p); });

  const fs::path ckpt_path =
      cfg.checkpoint_path ? fs::path(*cfg.checkpoint_path) : fs::path(cfg.out_dir) / "checkpoint.fsep";
  fsep::save_checkpoint(result.checkpoint, ckpt_path);
  std::cout << "trained " << result.checkpoint.iteration << " iterations; best validation loss "
            << fsep::format_double(result.checkpoint.best_val_loss) << " at iteration "
            << result.checkpoint.best_val_iter << "\n";
  std::cout << "checkpoint: " << ckpt_path.string() << "\n";
  return 0;
}

int cmd_pretrain(const CommonFlags& flags) {
  fsep::RunConfig cfg = resolve_config(flags, true);
  cfg.validate();
  if (!cfg.pretrain) {
    fsep::raise(fsep::ErrorCode::InvalidValue, "pretrain command needs a 'pretrain' config block");
  }
  const fsep::Dataset full = fsep::load_dataset(cfg);
  const auto splits = fsep::apply_splits(cfg, full);

  fsep::TrainConfig pre = cfg.train;
  pre.way = cfg.pretrain->way;
  pre.query = cfg.pretrain->query;
  pre.episodes_per_iter = 1;  // cross-way phase runs one episode per iteration
  pre.max_iters = cfg.pretrain->max_iters;

  fs::create_directories(cfg.out_dir);
  MetricsStream metrics(fs::path(cfg.out_dir) / "metrics.csv");
  fsep::TrainResult result =
      fsep::pretrain_then_finetune(splits[0], splits[1], cfg.embedder, pre, cfg.train,
                                   cfg.pretrain->finetune,
                                   [&metrics](const fsep::MetricPoint& p) { metrics(p); });

  const fs::path ckpt_path =
      cfg.checkpoint_path ? fs::path(*cfg.checkpoint_path) : fs::path(cfg.out_dir) / "checkpoint.fsep";
  fsep::save_checkpoint(result.checkpoint, ckpt_path);
  std::cout << (cfg.pretrain->finetune ? "fine-tuned" : "pretrained") << " checkpoint: "
            << ckpt_path.string() << "\n";
  return 0;
}

int cmd_eval(const CommonFlags& flags, int64_t episodes) {
  fsep::RunConfig cfg = resolve_config(flags, false);
  if (!cfg.checkpoint_path) {
    fsep::raise(fsep::ErrorCode::InvalidValue, "--checkpoint is required for eval");
  }
  if (!fs::exists(*cfg.checkpoint_path)) {
    fsep::raise(fsep::ErrorCode::IoFailure, "checkpoint not found: " + *cfg.checkpoint_path);
  }
  const fsep::Checkpoint ckpt = fsep::load_checkpoint(*cfg.checkpoint_path);

  fsep::Dataset test_set;
  if (flags.config_path && !cfg.test_labels.empty()) {
    test_set = fsep::apply_splits(cfg, fsep::load_dataset(cfg))[2];
  } else {
    // no split list: the whole --data source is the test set
    test_set = fsep::load_dataset(cfg);
  }

  const int query = flags.query.value_or(15);
  const uint64_t seed = flags.seed.value_or(0);
  const fsep::EvalReport report = fsep::evaluate(ckpt, test_set, episodes, query, seed);

  fs::create_directories(cfg.out_dir);
  const fs::path out_path = fs::path(cfg.out_dir) / "eval.csv";
  std::ofstream out(out_path, std::ios::binary);
  if (!out) fsep::raise(fsep::ErrorCode::IoFailure, "cannot write " + out_path.string());
  out << fsep::report_to_csv(report);
  std::cout << "accuracy " << fsep::format_double(report.mean) << " +- "
            << fsep::format_double(report.ci95_halfwidth) << " over " << episodes << " episodes ("
            << out_path.string() << ")\n";
  return 0;
}

int cmd_hessian(const CommonFlags& flags, int episodes, int topk, double tol, int64_t max_power_iters) {
  fsep::RunConfig cfg = resolve_config(flags, false);
  if (!cfg.checkpoint_path) {
    fsep::raise(fsep::ErrorCode::InvalidValue, "--checkpoint is required for hessian");
  }
  const fsep::Checkpoint ckpt = fsep::load_checkpoint(*cfg.checkpoint_path);

  fsep::Dataset data;
  if (flags.config_path && !cfg.train_labels.empty()) {
    data = fsep::apply_splits(cfg, fsep::load_dataset(cfg))[0];
  } else {
    data = fsep::load_dataset(cfg);
  }

  const uint64_t seed = flags.seed.value_or(0);
  const fsep::SpectrumReport report =
      fsep::spectrum_of_checkpoint(ckpt, data, episodes, topk, tol, max_power_iters, seed);

  fs::create_directories(cfg.out_dir);
  const fs::path out_path = fs::path(cfg.out_dir) / "hessian.csv";
  std::ofstream out(out_path, std::ios::binary);
  if (!out) fsep::raise(fsep::ErrorCode::IoFailure, "cannot write " + out_path.string());
  out << fsep::spectrum_to_csv(report);
  std::cout << report.description << "\n";
  for (size_t i = 0; i < report.eigenvalues.size(); ++i) {
    std::cout << "lambda_" << (i + 1) << " = " << fsep::format_double(report.eigenvalues[i])
              << (report.converged[i] ? "" : " (unconverged)") << "\n";
  }
  std::cout << "report: " << out_path.string() << "\n";
  return 0;
}

int cmd_counts(int64_t L, int64_t K, int64_t H, int64_t S) {
  std::cout << "task_classes " << fsep::count_task_classes(L, K) << "\n";
  std::cout << "task_examples_per_class " << fsep::count_task_examples_per_class(H, S, K) << "\n";
  return 0;
}

int cmd_synth(const fsep::SynthParams& params, const std::string& out_file) {
  fsep::write_synth_description(out_file, params);
  std::cout << "synth description: " << out_file << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Episodic few-shot classification: prototypical networks with multi-episode "
               "minibatches and cross-way pretraining"};
  app.require_subcommand(1);

  CommonFlags train_flags;
  CLI::App* train_cmd = app.add_subcommand("train", "train from a run config");
  add_common_flags(train_cmd, train_flags);

  CommonFlags pretrain_flags;
  CLI::App* pretrain_cmd =
      app.add_subcommand("pretrain", "cross-way pretraining with optional fine-tuning");
  add_common_flags(pretrain_cmd, pretrain_flags);

  CommonFlags eval_flags;
  int64_t eval_episodes = 1000;
  CLI::App* eval_cmd = app.add_subcommand("eval", "episode-averaged accuracy with a 95% CI");
  add_common_flags(eval_cmd, eval_flags);
  eval_cmd->add_option("--episodes", eval_episodes, "test episodes to average (default 1000)");

  CommonFlags hessian_flags;
  int hessian_episodes = 100;
  int hessian_topk = 10;
  double hessian_tol = 1e-4;
  int64_t hessian_iters = 5000;
  CLI::App* hessian_cmd = app.add_subcommand("hessian", "top-k Hessian eigenvalues at a checkpoint");
  add_common_flags(hessian_cmd, hessian_flags);
  hessian_cmd->add_option("--episodes", hessian_episodes,
                          "episodes defining the analyzed loss (default 100)");
  hessian_cmd->add_option("--topk", hessian_topk, "eigenvalues to estimate (default 10)");
  hessian_cmd->add_option("--tol", hessian_tol, "relative-change tolerance (default 1e-4)");
  hessian_cmd->add_option("--max-power-iters", hessian_iters, "power iteration cap (default 5000)");

  int64_t counts_L = 0, counts_K = 0, counts_H = 0, counts_S = 0;
  CLI::App* counts_cmd = app.add_subcommand("counts", "exact task-class and task-example counts");
  counts_cmd->add_option("--L", counts_L, "dataset classes")->required();
  counts_cmd->add_option("--K", counts_K, "way")->required();
  counts_cmd->add_option("--H", counts_H, "examples per class")->required();
  counts_cmd->add_option("--S", counts_S, "shot")->required();

  fsep::SynthParams synth_params;
  synth_params.classes = 30;
  synth_params.examples_per_class = 20;
  synth_params.dim = 16;
  synth_params.separation = 5;
  synth_params.noise = 1;
  std::string synth_out = "synth.json";
  CLI::App* synth_cmd = app.add_subcommand("synth", "write a synthetic dataset description file");
  synth_cmd->add_option("--classes", synth_params.classes, "class count (default 30)");
  synth_cmd->add_option("--examples-per-class", synth_params.examples_per_class,
                        "examples per class (default 20)");
  synth_cmd->add_option("--dim", synth_params.dim, "feature dimension (default 16)");
  synth_cmd->add_option("--separation", synth_params.separation, "class mean radius (default 5)");
  synth_cmd->add_option("--noise", synth_params.noise, "within-class stddev (default 1)");
  synth_cmd->add_option("--seed", synth_params.seed, "generator seed (default 0)");
  synth_cmd->add_option("--out", synth_out, "output file (default synth.json)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train_cmd->parsed()) return cmd_train(train_flags);
    if (pretrain_cmd->parsed()) return cmd_pretrain(pretrain_flags);
    if (eval_cmd->parsed()) return cmd_eval(eval_flags, eval_episodes);
    if (hessian_cmd->parsed()) {
      return cmd_hessian(hessian_flags, hessian_episodes, hessian_topk, hessian_tol, hessian_iters);
    }
    if (counts_cmd->parsed()) return cmd_counts(counts_L, counts_K, counts_H, counts_S);
    if (synth_cmd->parsed()) return cmd_synth(synth_params, synth_out);
  } catch (const fsep::Error& e) {
    std::cerr << "fsep: " << e.what() << "\n";
    return fsep::is_usage_error(e.code()) ? 1 : 2;
  } catch (const std::exception& e) {
    std::cerr << "fsep: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
