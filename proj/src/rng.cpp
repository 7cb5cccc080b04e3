#include "neurocodec/rng.hpp"

#include <numeric>

namespace neurocodec {

std::vector<int> Rng::sample_without_replacement(int n, int k) {
  std::vector<int> pool(static_cast<size_t>(n));
  std::iota(pool.begin(), pool.end(), 0);
  if (k > n) k = n;
  for (int i = 0; i < k; ++i) {
    const int j = i + static_cast<int>(next_below(static_cast<uint64_t>(n - i)));
    std::swap(pool[static_cast<size_t>(i)], pool[static_cast<size_t>(j)]);
  }
  pool.resize(static_cast<size_t>(k));
  return pool;
}

uint64_t derive_seed(uint64_t parent, std::string_view tag, uint64_t a, uint64_t b) {
  // FNV-1a over the tag, then splitmix-style avalanche with the qualifiers.
  uint64_t h = 0xcbf29ce484222325ULL;
  for (const char c : tag) {
    h ^= static_cast<uint64_t>(static_cast<unsigned char>(c));
    h *= 0x100000001b3ULL;
  }
  uint64_t z = parent ^ h;
  z ^= a + 0x9E3779B97F4A7C15ULL + (z << 6) + (z >> 2);
  z ^= b + 0xD1B54A32D192ED03ULL + (z << 6) + (z >> 2);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace neurocodec
