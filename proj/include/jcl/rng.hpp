#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace jcl {

using Rng = std::mt19937_64;

// Child seed for a named stream. Streams with different names are independent
// for practical purposes; the mapping is fixed so runs are replayable.
std::uint64_t derive_seed(std::uint64_t root, std::string_view stream);
std::uint64_t derive_seed(std::uint64_t root, std::uint64_t index);

inline Rng make_rng(std::uint64_t root, std::string_view stream) {
  return Rng(derive_seed(root, stream));
}

}  // namespace jcl
