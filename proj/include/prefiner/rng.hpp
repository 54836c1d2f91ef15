#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace prefiner {

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t fnv1a(std::string_view text);

/// Seed of the named sub-stream of `seed` ("dataset", "init", "shuffle", ...).
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream);

inline std::mt19937_64 make_rng(std::uint64_t seed, std::string_view stream) {
  return std::mt19937_64(derive_seed(seed, stream));
}

}  // namespace prefiner
