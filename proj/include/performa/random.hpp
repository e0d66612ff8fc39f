#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace performa {

using Rng = std::mt19937_64;

// splitmix64 finalizer; used to decorrelate derived seeds.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return mix64(seed ^ mix64(stream + 0x632be59bd9b4e019ULL));
}

constexpr std::uint64_t hash_string(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Fixed stream offsets for one deployment draw. Labels and each class get
// their own substream so class draws do not depend on the deployed theta.
namespace stream {
inline constexpr std::uint64_t labels = 1;
inline constexpr std::uint64_t class0 = 2;
inline constexpr std::uint64_t class1 = 3;
}  // namespace stream

}  // namespace performa
