#pragma once

#include <cstdint>
#include <functional>

namespace fsep {

/// Thread cap from FSEP_THREADS (0 = sequential reference mode). Read once
/// per process.
int max_threads();

/// Runs fn over [0, n) in contiguous index blocks, possibly on several
/// threads. Callers must only write to locations owned by their index so
/// results are bit-identical for every thread-count setting.
void parallel_for(int64_t n, const std::function<void(int64_t begin, int64_t end)>& fn);

}  // namespace fsep
