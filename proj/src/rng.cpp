#include "iscc/rng.hpp"

#include <cmath>

namespace iscc {

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

RngStream::RngStream(std::uint64_t master_seed, std::string_view name) {
  std::uint64_t tag = fnv1a(name);
  std::seed_seq seq{static_cast<std::uint32_t>(master_seed),
                    static_cast<std::uint32_t>(master_seed >> 32),
                    static_cast<std::uint32_t>(tag),
                    static_cast<std::uint32_t>(tag >> 32)};
  gen_.seed(seq);
}

double RngStream::uniform() {
  return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
}

double RngStream::normal() {
  if (has_cached_) {
    has_cached_ = false;
    return cached_;
  }
  double u1 = uniform();
  double u2 = uniform();
  double r = std::sqrt(-2.0 * std::log1p(-u1));
  double a = 2.0 * kPi * u2;
  cached_ = r * std::sin(a);
  has_cached_ = true;
  return r * std::cos(a);
}

cxd RngStream::cnormal() {
  double u1 = uniform();
  double u2 = uniform();
  double r = std::sqrt(-std::log1p(-u1));
  double a = 2.0 * kPi * u2;
  return {r * std::cos(a), r * std::sin(a)};
}

int RngStream::uniform_int(int n) {
  // rejection from the top 32 bits keeps the draw unbiased and portable
  const std::uint64_t un = static_cast<std::uint64_t>(n);
  const std::uint64_t span = (1ull << 32) - ((1ull << 32) % un);
  for (;;) {
    std::uint64_t v = gen_() >> 32;
    if (v < span) return static_cast<int>(v % un);
  }
}

}  // namespace iscc
