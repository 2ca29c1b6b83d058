#include "fsep/runconfig.hpp"

#include <cstdio>
#include <fstream>
#include <set>

#include "fsep/error.hpp"
#include "json_util.hpp"

namespace fsep {

namespace {

using nlohmann::json;

void reject_unknown_keys(const json& j, const std::set<std::string>& known, const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) raise(ErrorCode::UnknownKey, "'" + key + "' in " + where);
  }
}

template <typename T>
T get_or(const json& j, const std::string& key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    raise(ErrorCode::InvalidValue, "'" + key + "' has the wrong type");
  }
}

SynthParams synth_from_json(const json& j) {
  reject_unknown_keys(j, {"classes", "examples_per_class", "dim", "separation", "noise", "seed"},
                      "synth block");
  SynthParams p;
  p.classes = get_or<int64_t>(j, "classes", 0);
  p.examples_per_class = get_or<int64_t>(j, "examples_per_class", 0);
  p.dim = get_or<int64_t>(j, "dim", 0);
  p.separation = get_or<double>(j, "separation", 0);
  p.noise = get_or<double>(j, "noise", 0);
  p.seed = get_or<uint64_t>(j, "seed", 0);
  if (p.classes < 2 || p.examples_per_class < 2 || p.dim < 2 || p.separation <= 0 || p.noise <= 0) {
    raise(ErrorCode::InvalidValue,
          "synth needs classes >= 2, examples_per_class >= 2, dim >= 2, separation > 0, noise > 0");
  }
  return p;
}

json synth_to_json(const SynthParams& p) {
  json j;
  j["classes"] = p.classes;
  j["examples_per_class"] = p.examples_per_class;
  j["dim"] = p.dim;
  j["separation"] = p.separation;
  j["noise"] = p.noise;
  j["seed"] = p.seed;
  return j;
}

EmbedderSpec embedder_from_json(const json& j) {
  reject_unknown_keys(j, {"kind", "input_shape", "width", "hidden", "output_dim"}, "embedder block");
  EmbedderSpec spec;
  spec.kind = embedder_kind_from_name(get_or<std::string>(j, "kind", "convnet4"));
  spec.input_shape = get_or<Shape>(j, "input_shape", {});
  spec.width = get_or<int>(j, "width", 64);
  spec.hidden = get_or<std::vector<int>>(j, "hidden", {});
  spec.output_dim = get_or<int>(j, "output_dim", 0);
  if (spec.input_shape.empty()) {
    raise(ErrorCode::InvalidValue, "embedder.input_shape is required");
  }
  spec.validate();
  return spec;
}

PretrainBlock pretrain_from_json(const json& j) {
  reject_unknown_keys(j, {"way", "query", "max_iters", "finetune"}, "pretrain block");
  PretrainBlock p;
  p.way = get_or<int>(j, "way", 0);
  p.query = get_or<int>(j, "query", 15);
  p.max_iters = get_or<int64_t>(j, "max_iters", 450000);
  p.finetune = get_or<bool>(j, "finetune", true);
  if (p.way < 2) raise(ErrorCode::InvalidValue, "pretrain.way must be >= 2");
  if (p.query < 1) raise(ErrorCode::InvalidValue, "pretrain.query must be >= 1");
  if (p.max_iters < 1) raise(ErrorCode::InvalidValue, "pretrain.max_iters must be >= 1");
  return p;
}

}  // namespace

void RunConfig::validate() const {
  if (data_path.has_value() == synth.has_value()) {
    raise(ErrorCode::InvalidValue, "exactly one dataset source ('data' or 'synth') is required");
  }
  embedder.validate();
  train.validate();
  if (pretrain && pretrain->way <= train.way) {
    raise(ErrorCode::InvalidValue, "pretrain.way must exceed way");
  }
}

RunConfig parse_config_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    raise(ErrorCode::InvalidValue, std::string("config is not valid JSON: ") + e.what());
  }
  static const std::set<std::string> known = {
      "data",       "synth",        "rotations",   "train_labels", "val_labels",
      "test_labels", "embedder",    "way",         "shot",         "query",
      "episodes_per_iter", "distance", "lr0",      "schedule",     "max_iters",
      "val_every",  "val_episodes", "patience",    "seed",         "pretrain",
      "out",        "checkpoint"};
  reject_unknown_keys(j, known, "run config");

  RunConfig c;
  if (j.contains("data")) c.data_path = j.at("data").get<std::string>();
  if (j.contains("synth")) c.synth = synth_from_json(j.at("synth"));
  c.rotations = get_or<bool>(j, "rotations", false);
  c.train_labels = get_or<std::vector<std::string>>(j, "train_labels", {});
  c.val_labels = get_or<std::vector<std::string>>(j, "val_labels", {});
  c.test_labels = get_or<std::vector<std::string>>(j, "test_labels", {});
  if (!j.contains("embedder")) raise(ErrorCode::InvalidValue, "missing 'embedder' block");
  c.embedder = embedder_from_json(j.at("embedder"));

  c.train.way = get_or<int>(j, "way", 5);
  c.train.shot = get_or<int>(j, "shot", 1);
  c.train.query = get_or<int>(j, "query", 15);
  c.train.episodes_per_iter = get_or<int>(j, "episodes_per_iter", 1);
  c.train.distance = distance_kind_from_name(get_or<std::string>(j, "distance", "euclid"));
  c.train.lr0 = get_or<double>(j, "lr0", 1e-3);
  c.train.schedule_multiplier = get_or<int>(j, "schedule", 1);
  c.train.max_iters = j.contains("max_iters") ? j.at("max_iters").get<int64_t>()
                                              : default_max_iters(c.train.episodes_per_iter);
  c.train.val_every = get_or<int64_t>(j, "val_every", 100);
  c.train.val_episodes = get_or<int64_t>(j, "val_episodes", 100);
  c.train.patience = get_or<int64_t>(j, "patience", 20);
  c.train.seed = get_or<uint64_t>(j, "seed", 0);

  if (j.contains("pretrain")) c.pretrain = pretrain_from_json(j.at("pretrain"));
  c.out_dir = get_or<std::string>(j, "out", ".");
  if (j.contains("checkpoint")) c.checkpoint_path = j.at("checkpoint").get<std::string>();

  c.validate();
  return c;
}

RunConfig parse_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) raise(ErrorCode::InvalidValue, "cannot open config " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_config_text(text);
}

Dataset load_dataset(const RunConfig& config) {
  if (config.synth) {
    const SynthParams& p = *config.synth;
    return synth_gaussians(p.classes, p.examples_per_class, p.dim, p.separation, p.noise, p.seed);
  }
  const std::filesystem::path path = *config.data_path;
  if (path.extension() == ".json") {
    const SynthParams p = read_synth_description(path);
    return synth_gaussians(p.classes, p.examples_per_class, p.dim, p.separation, p.noise, p.seed);
  }
  Dataset d = load_image_folder(path);
  if (config.rotations) d = augment_rotations(d);
  return d;
}

std::array<Dataset, 3> apply_splits(const RunConfig& config, const Dataset& full) {
  return split(full, config.train_labels, config.val_labels, config.test_labels);
}

void write_synth_description(const std::filesystem::path& path, const SynthParams& params) {
  json j = synth_to_json(params);
  j["type"] = "fsep-synth";
  json labels = json::array();
  for (int64_t i = 0; i < params.classes; ++i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "c%03d", static_cast<int>(i));
    labels.push_back(std::string(buf));
  }
  j["labels"] = std::move(labels);
  std::ofstream out(path, std::ios::binary);
  if (!out) raise(ErrorCode::IoFailure, "cannot write " + path.string());
  out << j.dump(2) << "\n";
}

SynthParams read_synth_description(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) raise(ErrorCode::InvalidValue, "cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    raise(ErrorCode::InvalidValue, path.string() + ": " + e.what());
  }
  if (get_or<std::string>(j, "type", "") != "fsep-synth") {
    raise(ErrorCode::InvalidValue, path.string() + " is not a synth description file");
  }
  json body = j;
  body.erase("type");
  body.erase("labels");
  return synth_from_json(body);
}

}  // namespace fsep
