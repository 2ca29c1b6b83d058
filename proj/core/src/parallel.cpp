#include "fsep/parallel.hpp"

#include <cstdlib>
#include <thread>
#include <vector>

namespace fsep {

int max_threads() {
  static const int cached = [] {
    const char* env = std::getenv("FSEP_THREADS");
    if (!env) return 0;
    const long v = std::strtol(env, nullptr, 10);
    if (v < 0) return 0;
    return static_cast<int>(v);
  }();
  return cached;
}

void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn) {
  if (n <= 0) return;
  const int threads = max_threads();
  if (threads <= 1 || n < 2 * threads) {
    fn(0, n);
    return;
  }
  const int64_t t = threads;
  const int64_t chunk = (n + t - 1) / t;
  std::vector<std::thread> workers;
  workers.reserve(static_cast<size_t>(t) - 1);
  for (int64_t i = 1; i < t; ++i) {
    const int64_t begin = i * chunk;
    if (begin >= n) break;
    const int64_t end = std::min(n, begin + chunk);
    workers.emplace_back([&fn, begin, end] { fn(begin, end); });
  }
  fn(0, std::min(n, chunk));
  for (auto& w : workers) w.join();
}

}  // namespace fsep
