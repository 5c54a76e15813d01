#pragma once

#include <array>
#include <cstddef>
#include <cstdint>

#include "deft/matrix.hpp"

namespace deft {

/// xoshiro256** seeded through splitmix64.
///
/// The integer stream depends only on the seed. Gaussian samples use the
/// Box–Muller transform and therefore go through std::log / std::cos, whose
/// last-ulp behavior is libm-specific; everything before that is exact.
/// An Rng has a single owner: it is movable but not copyable.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  Rng(const Rng&) = delete;
  Rng& operator=(const Rng&) = delete;
  Rng(Rng&&) noexcept = default;
  Rng& operator=(Rng&&) noexcept = default;

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64() noexcept;
  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept;
  /// Standard normal.
  double normal() noexcept;

 private:
  std::uint64_t seed_;
  std::array<std::uint64_t, 4> s_{};
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// i.i.d. N(0, stddev²) entries, filled row-major. stddev == 0 yields an
/// exact (+0.0) zero matrix without consuming the stream.
Matrix gaussian(Rng& rng, std::size_t rows, std::size_t cols, double stddev);

/// i.i.d. uniform [lo, hi) entries, filled row-major.
Matrix uniform(Rng& rng, std::size_t rows, std::size_t cols, double lo = 0.0, double hi = 1.0);

/// Matrix with orthonormal columns spanning a random r-dimensional subspace of ℝ^m.
Matrix random_orthonormal(Rng& rng, std::size_t m, std::size_t r);

}  // namespace deft
