#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fsep/data.hpp"
#include "fsep/embed.hpp"
#include "fsep/train.hpp"

namespace fsep {

struct SynthParams {
  int64_t classes = 0;
  int64_t examples_per_class = 0;
  int64_t dim = 0;
  double separation = 0;
  double noise = 0;
  uint64_t seed = 0;
};

struct PretrainBlock {
  int way = 0;          // K-hat, must exceed the target way
  int query = 15;
  int64_t max_iters = 450000;
  bool finetune = true;
};

/// One run's full description: dataset source (exactly one), class-disjoint
/// split lists, embedder, training settings, optional pretraining phase.
struct RunConfig {
  std::optional<std::string> data_path;  // image folder or synth description .json
  std::optional<SynthParams> synth;
  bool rotations = false;
  std::vector<std::string> train_labels;
  std::vector<std::string> val_labels;
  std::vector<std::string> test_labels;
  EmbedderSpec embedder;
  TrainConfig train;
  std::optional<PretrainBlock> pretrain;
  std::string out_dir = ".";
  std::optional<std::string> checkpoint_path;

  void validate() const;
};

/// Strict JSON parse: unknown keys are rejected, every value is validated.
/// Defaults follow the standard settings (query 15, lr0 1e-3, 1x schedule,
/// iteration budget 450000/E for E in {1,3,5}).
RunConfig parse_config_file(const std::filesystem::path& path);

/// Same validation/default pass applied to an in-memory JSON string.
RunConfig parse_config_text(const std::string& text);

/// Resolves the configured source: image folder (optionally rotation
/// augmented, before splitting) or synthetic Gaussians.
Dataset load_dataset(const RunConfig& config);

/// Applies the three label lists; empty lists give empty datasets.
std::array<Dataset, 3> apply_splits(const RunConfig& config, const Dataset& full);

/// Synth description file round-trip (written by `fsep synth`, accepted by
/// --data).
void write_synth_description(const std::filesystem::path& path, const SynthParams& params);
SynthParams read_synth_description(const std::filesystem::path& path);

}  // namespace fsep
