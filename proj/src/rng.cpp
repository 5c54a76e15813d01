#include "deft/rng.hpp"

#include <cmath>
#include <numbers>

#include "deft/decompose.hpp"
#include "deft/errors.hpp"

namespace deft {

namespace {

std::uint64_t splitmix64(std::uint64_t& x) noexcept {
  std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept { return (x << k) | (x >> (64 - k)); }

}  // namespace

Rng::Rng(std::uint64_t seed) : seed_(seed) {
  std::uint64_t x = seed;
  for (auto& word : s_) word = splitmix64(x);
}

std::uint64_t Rng::next_u64() noexcept {
  const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double Rng::uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::normal() noexcept {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // u1 in (0, 1] keeps the log finite.
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

Matrix gaussian(Rng& rng, std::size_t rows, std::size_t cols, double stddev) {
  if (!(stddev >= 0.0)) throw PreconditionError("gaussian: stddev must be non-negative");
  Matrix out(rows, cols);
  if (stddev == 0.0) return out;
  for (double& v : out.data()) v = stddev * rng.normal();
  return out;
}

Matrix uniform(Rng& rng, std::size_t rows, std::size_t cols, double lo, double hi) {
  Matrix out(rows, cols);
  for (double& v : out.data()) v = lo + (hi - lo) * rng.uniform();
  return out;
}

Matrix random_orthonormal(Rng& rng, std::size_t m, std::size_t r) {
  if (r > m) throw ShapeError("random_orthonormal: r exceeds ambient dimension");
  return qr_decompose(gaussian(rng, m, r, 1.0)).p_factor;
}

}  // namespace deft
