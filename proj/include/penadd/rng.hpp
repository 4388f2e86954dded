#pragma once

#include <array>
#include <cstdint>

namespace penadd {

/// Philox4x32-10 block function (Salmon et al., counter-based).
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

/// Deterministic substream keyed by (seed, stream id). Replications use
/// stream = (replication << 8) | purpose so parallel execution cannot
/// change the draws.
class RandomStream {
 public:
  RandomStream(std::uint64_t seed, std::uint64_t stream);

  std::uint32_t next_u32();
  std::uint64_t next_u64();
  double uniform();      // [0, 1)
  double normal();       // standard Gaussian, Box-Muller

 private:
  void refill();
  std::array<std::uint32_t, 2> key_;
  std::array<std::uint32_t, 4> counter_;
  std::array<std::uint32_t, 4> buffer_{};
  int have_ = 0;
  double cached_normal_ = 0.0;
  bool have_normal_ = false;
};

}  // namespace penadd
