#pragma once

#include <cstdint>
#include <random>

namespace davsp {

// Deterministic RNG. Draw helpers avoid std::*_distribution so streams are
// identical across standard library implementations, not just across runs.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0,1).
  double next_double() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  // Uniform integer in [0, n).
  std::uint64_t next_index(std::uint64_t n);

  // Standard normal via Box-Muller on the portable uniform draws.
  double next_gaussian();

  // Derive an independent stream for a named sub-task.
  Rng fork(std::uint64_t stream_id);

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace davsp
