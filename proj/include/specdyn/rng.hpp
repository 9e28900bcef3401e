#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "specdyn/linalg.hpp"

namespace specdyn {

// SplitMix64: the fixed 64-bit generator behind every experiment. All fixtures
// and reports are keyed to this exact algorithm so seeds stay portable.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in (0, 1].
  double next_unit() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller; the second variate is cached.
  double next_gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = next_unit();
    const double u2 = next_unit();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  Vec gaussian_vec(std::size_t n, double scale = 1.0) {
    Vec v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = scale * next_gaussian();
    return v;
  }

  Mat gaussian_mat(std::size_t rows, std::size_t cols, double scale = 1.0) {
    Mat m(rows, cols);
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) m(i, j) = scale * next_gaussian();
    return m;
  }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

// Deterministic substream derivation: substream k of a base seed.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t k) {
  SplitMix64 g(base ^ (0xd6e8feb86659fd93ULL * (k + 1)));
  return g.next_u64();
}

inline std::uint64_t fnv1a64(const std::string& text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace specdyn
