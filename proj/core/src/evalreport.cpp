#include "fsep/evalreport.hpp"

#include <cmath>
#include <cstdio>

#include "fsep/error.hpp"

namespace fsep {

std::pair<double, double> summarize_accuracies(const std::vector<double>& accuracies) {
  if (accuracies.empty()) raise(ErrorCode::InvalidArgument, "no accuracies to summarize");
  const int64_t n = static_cast<int64_t>(accuracies.size());
  double sum = 0;
  for (double a : accuracies) sum += a;
  const double mean = sum / static_cast<double>(n);
  double ci = 0;
  if (n > 1) {
    double ss = 0;
    for (double a : accuracies) {
      const double d = a - mean;
      ss += d * d;
    }
    const double stddev = std::sqrt(ss / static_cast<double>(n - 1));
    ci = 1.96 * stddev / std::sqrt(static_cast<double>(n));
  }
  return {mean, ci};
}

EvalReport evaluate(const Checkpoint& ckpt, const Dataset& test_set, int64_t n_episodes, int query,
                    uint64_t seed) {
  if (n_episodes < 1) raise(ErrorCode::InvalidArgument, "need at least one evaluation episode");
  if (query < 1) raise(ErrorCode::InvalidArgument, "query must be >= 1");

  EvalReport report;
  report.n_episodes = n_episodes;
  report.way = ckpt.config.way;
  report.shot = ckpt.config.shot;
  report.query = query;
  report.distance = ckpt.config.distance;
  report.seed = seed;

  const ParamSet& params = ckpt.eval_params();
  Rng rng = Rng::for_stream(seed, Stream::evaluation);
  report.per_episode_accuracy.reserve(static_cast<size_t>(n_episodes));
  for (int64_t e = 0; e < n_episodes; ++e) {
    Episode ep = sample_episode(test_set, report.way, report.shot, query, rng);
    EpisodeScore s = score_episode(ckpt.spec, params, test_set, ep, report.distance);
    report.per_episode_accuracy.push_back(s.accuracy);
  }

  const auto [mean, ci] = summarize_accuracies(report.per_episode_accuracy);
  report.mean = mean;
  report.ci95_halfwidth = ci;
  return report;
}

std::string report_to_csv(const EvalReport& report) {
  std::string out = "episode,accuracy\n";
  char buf[32];
  for (size_t i = 0; i < report.per_episode_accuracy.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.6f", report.per_episode_accuracy[i]);
    out += std::to_string(i) + "," + buf + "\n";
  }
  out += "mean," + format_double(report.mean) + ",ci95," + format_double(report.ci95_halfwidth) + "\n";
  return out;
}

}  // namespace fsep
