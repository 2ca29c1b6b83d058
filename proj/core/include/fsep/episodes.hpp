#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fsep/data.hpp"
#include "fsep/rng.hpp"
#include "fsep/tensor.hpp"

namespace fsep {

/// One sampled few-shot task: a class subset with per-class support and
/// query example indices. Per class, support and query indices are disjoint.
struct Episode {
  int way = 0;
  int shot = 0;
  int query = 0;
  std::vector<int64_t> class_subset;               // K distinct class ids
  std::vector<std::vector<int64_t>> support;       // K lists of S indices
  std::vector<std::vector<int64_t>> query_set;     // K lists of Q indices

  void validate(const Dataset& d) const;
};

struct Minibatch {
  std::vector<Episode> episodes;
};

/// n distinct indices from [0, population_size), every n-subset equally
/// likely (partial Fisher-Yates), returned in draw order.
std::vector<int64_t> random_sample(int64_t population_size, int64_t n, Rng& rng);

Episode sample_episode(const Dataset& d, int way, int shot, int query, Rng& rng);

/// E independent sample_episode draws from the same stream, in order.
Minibatch sample_minibatch(const Dataset& d, int episodes, int way, int shot, int query, Rng& rng);

/// Exact C(L,K) as a decimal string (arbitrary precision).
std::string count_task_classes(int64_t L, int64_t K);

/// Exact (C(H,S))^K * K * (H-S) as a decimal string. Assumes uniform
/// per-class example count H.
std::string count_task_examples_per_class(int64_t H, int64_t S, int64_t K);

/// One enumerated (support-set choice, query example) pair. Indices refer
/// to positions within each class of `class_subset`.
struct TaskExample {
  std::vector<std::vector<int64_t>> support;  // per class, S example indices (ascending)
  int64_t query_class = 0;                    // position within the class subset
  int64_t query_index = 0;                    // example index in that class
};

/// Exhaustively enumerates every task example of the task class
/// `class_subset`, calling `visit` for each when provided, and returns the
/// total count. Refuses to run when the predicted count exceeds `cap`.
uint64_t enumerate_task_examples(const Dataset& d, const std::vector<int64_t>& class_subset,
                                 int shot, uint64_t cap = 10'000'000,
                                 const std::function<void(const TaskExample&)>& visit = {});

/// Stacks one episode's examples into a single batch tensor:
/// support rows class-major first (K*S), then query rows class-major (K*Q).
template <typename T>
Tensor<T> episode_batch(const Dataset& d, const Episode& e);

extern template Tensor<float> episode_batch<float>(const Dataset&, const Episode&);
extern template Tensor<double> episode_batch<double>(const Dataset&, const Episode&);

}  // namespace fsep
