#include <gmpxx.h>

#include <algorithm>

#include "fsep/episodes.hpp"
#include "fsep/error.hpp"

namespace fsep {

namespace {

// C(n, k) by the exact multiplicative recurrence; every division is exact.
mpz_class binomial(int64_t n, int64_t k) {
  if (k < 0 || k > n) raise(ErrorCode::InvalidArgument, "binomial needs 0 <= k <= n");
  k = std::min(k, n - k);
  mpz_class c = 1;
  for (int64_t i = 1; i <= k; ++i) {
    c *= n - k + i;
    c /= i;
  }
  return c;
}

}  // namespace

std::string count_task_classes(int64_t L, int64_t K) {
  if (L < 0 || K < 0 || K > L) {
    raise(ErrorCode::InvalidArgument, "count_task_classes needs 0 <= K <= L");
  }
  return binomial(L, K).get_str();
}

std::string count_task_examples_per_class(int64_t H, int64_t S, int64_t K) {
  if (S < 1 || S >= H || K < 1) {
    raise(ErrorCode::InvalidArgument, "count_task_examples_per_class needs 1 <= S < H and K >= 1");
  }
  mpz_class g;
  mpz_pow_ui(g.get_mpz_t(), binomial(H, S).get_mpz_t(), static_cast<unsigned long>(K));
  g *= K;
  g *= H - S;
  return g.get_str();
}

std::string predict_enumeration_count(const Dataset& d, const std::vector<int64_t>& class_subset,
                                      int shot) {
  mpz_class supports = 1;
  mpz_class queries = 0;
  for (int64_t cls : class_subset) {
    const int64_t h = d.examples_in(cls);
    supports *= binomial(h, shot);
    queries += h - shot;
  }
  return mpz_class(supports * queries).get_str();
}

}  // namespace fsep
