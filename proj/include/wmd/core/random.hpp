// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "wmd/core/dense.hpp"

#include <cstdint>
#include <random>

namespace wmd {

/// Seeded random stream. Draw sequences depend only on the seed, never on the
/// standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller; consumes exactly two 64-bit draws.
  double normal();

  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n);

  Vector normal_vector(Eigen::Index n);
  Matrix normal_matrix(Eigen::Index rows, Eigen::Index cols);

  /// Child stream for `stream_id`; the same (seed, id) pair always yields the
  /// same child.
  static Rng derived(std::uint64_t seed, std::uint64_t stream_id) {
    return Rng(mix(seed, stream_id));
  }
  static std::uint64_t mix(std::uint64_t seed, std::uint64_t stream_id);

 private:
  std::mt19937_64 engine_;
};

}  // namespace wmd
