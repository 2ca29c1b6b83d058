#include "fsep/rng.hpp"

#include <cmath>
#include <locale>
#include <numbers>
#include <sstream>

#include "fsep/error.hpp"

namespace fsep {

uint64_t Rng::uniform_below(uint64_t bound) {
  if (bound == 0) raise(ErrorCode::InvalidArgument, "uniform_below(0)");
  // Rejection on the top of the range keeps every residue equally likely.
  const uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % bound;
}

double Rng::normal() {
  // u1 in (0,1] so the log is finite.
  const double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
  const double u2 = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::string Rng::state_string() const {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os << engine_;
  return os.str();
}

void Rng::restore_state(const std::string& state) {
  std::istringstream is(state);
  is.imbue(std::locale::classic());
  is >> engine_;
  if (is.fail()) raise(ErrorCode::CorruptFile, "bad rng state string");
}

}  // namespace fsep
