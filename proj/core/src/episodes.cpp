#include "fsep/episodes.hpp"

#include <algorithm>
#include <numeric>
#include <set>

#include "fsep/error.hpp"

namespace fsep {

// counting.cpp; exact product over the actual per-class counts.
std::string predict_enumeration_count(const Dataset& d, const std::vector<int64_t>& class_subset,
                                      int shot);

void Episode::validate(const Dataset& d) const {
  if (static_cast<int>(class_subset.size()) != way) {
    raise(ErrorCode::InvalidArgument, "episode class subset size != way");
  }
  std::set<int64_t> distinct(class_subset.begin(), class_subset.end());
  if (static_cast<int>(distinct.size()) != way) {
    raise(ErrorCode::InvalidArgument, "episode class subset has repeats");
  }
  for (int k = 0; k < way; ++k) {
    const int64_t cls = class_subset[static_cast<size_t>(k)];
    if (cls < 0 || cls >= d.num_classes()) raise(ErrorCode::InvalidArgument, "class id out of range");
    const auto& sup = support[static_cast<size_t>(k)];
    const auto& qry = query_set[static_cast<size_t>(k)];
    if (static_cast<int>(sup.size()) != shot || static_cast<int>(qry.size()) != query) {
      raise(ErrorCode::InvalidArgument, "support/query sizes do not match shot/query");
    }
    std::set<int64_t> used;
    for (int64_t i : sup) {
      if (i < 0 || i >= d.examples_in(cls)) raise(ErrorCode::InvalidArgument, "support index out of range");
      if (!used.insert(i).second) raise(ErrorCode::InvalidArgument, "duplicate support index");
    }
    for (int64_t i : qry) {
      if (i < 0 || i >= d.examples_in(cls)) raise(ErrorCode::InvalidArgument, "query index out of range");
      if (!used.insert(i).second) {
        raise(ErrorCode::InvalidArgument, "query index repeats or collides with support");
      }
    }
  }
}

std::vector<int64_t> random_sample(int64_t population_size, int64_t n, Rng& rng) {
  if (n < 0 || n > population_size) {
    raise(ErrorCode::SampleTooLarge, "cannot draw " + std::to_string(n) + " distinct from " +
                                         std::to_string(population_size));
  }
  std::vector<int64_t> pool(static_cast<size_t>(population_size));
  std::iota(pool.begin(), pool.end(), int64_t{0});
  // Partial Fisher-Yates: slot i swaps with a uniform pick from [i, pop).
  for (int64_t i = 0; i < n; ++i) {
    const int64_t j = i + static_cast<int64_t>(rng.uniform_below(static_cast<uint64_t>(population_size - i)));
    std::swap(pool[static_cast<size_t>(i)], pool[static_cast<size_t>(j)]);
  }
  pool.resize(static_cast<size_t>(n));
  return pool;
}

Episode sample_episode(const Dataset& d, int way, int shot, int query, Rng& rng) {
  if (way < 1 || shot < 1 || query < 1) {
    raise(ErrorCode::InvalidArgument, "way, shot and query must be positive");
  }
  if (way > d.num_classes()) {
    raise(ErrorCode::WayExceedsClasses, "way " + std::to_string(way) + " > " +
                                            std::to_string(d.num_classes()) + " classes");
  }
  Episode e;
  e.way = way;
  e.shot = shot;
  e.query = query;
  e.class_subset = random_sample(d.num_classes(), way, rng);
  for (int64_t cls : e.class_subset) {
    const int64_t h = d.examples_in(cls);
    if (h < shot + query) {
      raise(ErrorCode::InsufficientExamples,
            "class " + d.classes[static_cast<size_t>(cls)].label + " has " + std::to_string(h) +
                " examples, needs " + std::to_string(shot + query));
    }
    std::vector<int64_t> sup = random_sample(h, shot, rng);
    // Query pool is the class minus the support, in index order.
    std::vector<int64_t> pool;
    pool.reserve(static_cast<size_t>(h - shot));
    std::set<int64_t> taken(sup.begin(), sup.end());
    for (int64_t i = 0; i < h; ++i) {
      if (!taken.count(i)) pool.push_back(i);
    }
    std::vector<int64_t> qpos = random_sample(static_cast<int64_t>(pool.size()), query, rng);
    std::vector<int64_t> qry;
    qry.reserve(static_cast<size_t>(query));
    for (int64_t p : qpos) qry.push_back(pool[static_cast<size_t>(p)]);
    e.support.push_back(std::move(sup));
    e.query_set.push_back(std::move(qry));
  }
  return e;
}

Minibatch sample_minibatch(const Dataset& d, int episodes, int way, int shot, int query, Rng& rng) {
  if (episodes < 1) raise(ErrorCode::InvalidArgument, "episode count must be >= 1");
  Minibatch mb;
  mb.episodes.reserve(static_cast<size_t>(episodes));
  for (int e = 0; e < episodes; ++e) mb.episodes.push_back(sample_episode(d, way, shot, query, rng));
  return mb;
}

uint64_t enumerate_task_examples(const Dataset& d, const std::vector<int64_t>& class_subset,
                                 int shot, uint64_t cap,
                                 const std::function<void(const TaskExample&)>& visit) {
  const int64_t K = static_cast<int64_t>(class_subset.size());
  if (K < 1 || shot < 1) raise(ErrorCode::InvalidArgument, "need at least one class and shot >= 1");
  for (int64_t cls : class_subset) {
    if (cls < 0 || cls >= d.num_classes()) raise(ErrorCode::InvalidArgument, "class id out of range");
    if (d.examples_in(cls) <= shot) {
      raise(ErrorCode::InsufficientExamples,
            "class " + d.classes[static_cast<size_t>(cls)].label + " needs more than S examples");
    }
  }
  {
    const std::string predicted = predict_enumeration_count(d, class_subset, shot);
    const std::string cap_str = std::to_string(cap);
    const bool too_large = predicted.size() > cap_str.size() ||
                           (predicted.size() == cap_str.size() && predicted > cap_str);
    if (too_large) {
      raise(ErrorCode::EnumerationTooLarge, predicted + " task examples exceeds cap " + cap_str);
    }
  }

  // Per class: iterate over all ascending S-subsets with the classic
  // odometer increment.
  std::vector<std::vector<int64_t>> combos(static_cast<size_t>(K));
  for (int64_t k = 0; k < K; ++k) {
    combos[static_cast<size_t>(k)].resize(static_cast<size_t>(shot));
    std::iota(combos[static_cast<size_t>(k)].begin(), combos[static_cast<size_t>(k)].end(), int64_t{0});
  }
  auto next_combo = [](std::vector<int64_t>& c, int64_t h) -> bool {
    const int64_t s = static_cast<int64_t>(c.size());
    int64_t i = s - 1;
    while (i >= 0 && c[static_cast<size_t>(i)] == h - s + i) --i;
    if (i < 0) return false;
    ++c[static_cast<size_t>(i)];
    for (int64_t j = i + 1; j < s; ++j) c[static_cast<size_t>(j)] = c[static_cast<size_t>(j - 1)] + 1;
    return true;
  };

  uint64_t count = 0;
  TaskExample ex;
  while (true) {
    // All (query class, query example) choices for this support assignment.
    for (int64_t k = 0; k < K; ++k) {
      const int64_t cls = class_subset[static_cast<size_t>(k)];
      const auto& sup = combos[static_cast<size_t>(k)];
      for (int64_t q = 0; q < d.examples_in(cls); ++q) {
        if (std::binary_search(sup.begin(), sup.end(), q)) continue;
        ++count;
        if (visit) {
          ex.support = combos;
          ex.query_class = k;
          ex.query_index = q;
          visit(ex);
        }
      }
    }
    // Advance the K-digit odometer of combinations.
    int64_t k = K - 1;
    while (k >= 0 &&
           !next_combo(combos[static_cast<size_t>(k)], d.examples_in(class_subset[static_cast<size_t>(k)]))) {
      std::iota(combos[static_cast<size_t>(k)].begin(), combos[static_cast<size_t>(k)].end(), int64_t{0});
      --k;
    }
    if (k < 0) break;
  }
  return count;
}

template <typename T>
Tensor<T> episode_batch(const Dataset& d, const Episode& e) {
  const int64_t rows = static_cast<int64_t>(e.way) * (e.shot + e.query);
  Shape shape;
  shape.push_back(rows);
  for (int64_t dim : d.feature_shape) shape.push_back(dim);
  Tensor<T> out(shape);
  const int64_t stride = shape_size(d.feature_shape);

  int64_t row = 0;
  auto emit = [&](int64_t cls, int64_t idx) {
    const TensorF& src = d.classes[static_cast<size_t>(cls)].examples[static_cast<size_t>(idx)];
    T* dst = out.data() + row * stride;
    for (int64_t i = 0; i < stride; ++i) dst[i] = static_cast<T>(src[i]);
    ++row;
  };
  for (int k = 0; k < e.way; ++k) {
    for (int64_t idx : e.support[static_cast<size_t>(k)]) emit(e.class_subset[static_cast<size_t>(k)], idx);
  }
  for (int k = 0; k < e.way; ++k) {
    for (int64_t idx : e.query_set[static_cast<size_t>(k)]) emit(e.class_subset[static_cast<size_t>(k)], idx);
  }
  return out;
}

template Tensor<float> episode_batch<float>(const Dataset&, const Episode&);
template Tensor<double> episode_batch<double>(const Dataset&, const Episode&);

}  // namespace fsep
