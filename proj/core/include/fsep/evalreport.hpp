#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fsep/data.hpp"
#include "fsep/train.hpp"

namespace fsep {

/// Episode-averaged test accuracy with a 95% confidence interval
/// (1.96 * sample stddev / sqrt(n), n-1 denominator).
struct EvalReport {
  int64_t n_episodes = 0;
  std::vector<double> per_episode_accuracy;
  double mean = 0;
  double ci95_halfwidth = 0;
  int way = 0;
  int shot = 0;
  int query = 0;
  DistanceKind distance = DistanceKind::sq_euclidean;
  uint64_t seed = 0;
};

/// mean and 1.96 * s / sqrt(n) over per-episode accuracies (s = 0 for a
/// single episode).
std::pair<double, double> summarize_accuracies(const std::vector<double>& accuracies);

/// Scores n_episodes fresh episodes from a dedicated evaluation stream,
/// using the checkpoint's best-validation parameters. Q defaults to the
/// 15 test points per class of the standard protocol.
EvalReport evaluate(const Checkpoint& ckpt, const Dataset& test_set, int64_t n_episodes,
                    int query = 15, uint64_t seed = 0);

/// Header `episode,accuracy`, one row per episode, then a summary row
/// `mean,<m>,ci95,<c>`.
std::string report_to_csv(const EvalReport& report);

}  // namespace fsep
