#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "iscc/types.hpp"

namespace iscc {

// Deterministic substream of a master seed, keyed by name. All draws go
// through fixed arithmetic on the raw 64-bit output so results are identical
// across standard library implementations.
class RngStream {
 public:
  RngStream(std::uint64_t master_seed, std::string_view name);

  std::uint64_t next_u64() { return gen_(); }
  double uniform();              // [0, 1)
  double normal();               // standard normal
  cxd cnormal();                 // circular complex normal, unit variance
  int uniform_int(int n);        // {0, ..., n-1}

 private:
  std::mt19937_64 gen_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace iscc
