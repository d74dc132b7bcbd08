#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string_view>
#include <vector>

namespace densematch {

// All randomness in the library flows from a master seed through named
// streams: every consumer builds its own engine from derive_seed(), so
// results do not depend on call order or scheduling.

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace detail

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  return detail::splitmix64(detail::splitmix64(master) ^ stream);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::string_view name,
                                 std::uint64_t index = 0) {
  return detail::splitmix64(derive_seed(master, detail::fnv1a(name)) ^ index);
}

inline std::mt19937_64 make_engine(std::uint64_t seed) {
  return std::mt19937_64(seed);
}

// Uniform direction on the unit sphere in `dim` dimensions.
inline std::vector<double> random_unit_vector(std::mt19937_64& rng, int dim) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> v(static_cast<std::size_t>(dim));
  double norm_sq = 0.0;
  do {
    norm_sq = 0.0;
    for (auto& x : v) {
      x = normal(rng);
      norm_sq += x * x;
    }
  } while (norm_sq < 1e-24);
  const double inv = 1.0 / std::sqrt(norm_sq);
  for (auto& x : v) x *= inv;
  return v;
}

// First k entries of a partial Fisher-Yates shuffle of 0..n-1.
inline std::vector<int> sample_without_replacement(std::mt19937_64& rng, int n,
                                                  int k) {
  if (k < 0 || k > n) {
    throw std::invalid_argument(
        "sample_without_replacement: need 0 <= k <= n");
  }
  std::vector<int> idx(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
  for (int i = 0; i < k; ++i) {
    std::uniform_int_distribution<int> pick(i, n - 1);
    std::swap(idx[static_cast<std::size_t>(i)],
              idx[static_cast<std::size_t>(pick(rng))]);
  }
  idx.resize(static_cast<std::size_t>(k));
  return idx;
}

}  // namespace densematch
