#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace burnscar {

using Rng = std::mt19937_64;

// splitmix64 finalizer
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Seed for a named component derived from the run's root seed.
/// Every stochastic component draws from its own stream so that adding a
/// consumer never shifts the random sequence seen by another.
constexpr std::uint64_t derive_seed(std::uint64_t root, std::string_view component) noexcept {
  return mix64(root ^ mix64(fnv1a(component)));
}

constexpr std::uint64_t derive_seed(std::uint64_t root, std::string_view component,
                                    std::uint64_t index) noexcept {
  return mix64(derive_seed(root, component) + mix64(index));
}

}  // namespace burnscar
