#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace mimor::detail {

// The standard distributions are implementation-defined; these helpers keep
// seeded runs identical across standard libraries. mt19937_64 itself is
// fully specified.
inline std::uint64_t uniform_index(std::mt19937_64& rng, std::uint64_t n) {
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % n;
}

template <class T>
void shuffle(std::vector<T>& items, std::mt19937_64& rng) {
  for (std::size_t i = items.size(); i > 1; --i)
    std::swap(items[i - 1], items[uniform_index(rng, i)]);
}

}  // namespace mimor::detail
