#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

namespace lamkit {

/// Mixes a master seed with task coordinates (splitmix64 finaliser).
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b = 0);

/// Uniform integer in [0, bound) without modulo bias.
std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t bound);

/// Fisher-Yates shuffle driven by mt19937_64. Unlike std::shuffle the result
/// does not depend on the standard library implementation.
template <typename T>
void seeded_shuffle(std::vector<T>& items, std::mt19937_64& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform_below(rng, i));
    std::swap(items[i - 1], items[j]);
  }
}

std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed);

}  // namespace lamkit
