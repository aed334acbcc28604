#pragma once

#include <cstdint>
#include <string_view>

namespace aeae {

/// SplitMix64 finaliser.
std::uint64_t mix64(std::uint64_t x);

/// Stable sub-seed for one consumer of randomness. Depends only on the
/// master seed and the purpose string, so new purposes never shift others.
std::uint64_t derive_seed(std::uint64_t master, std::string_view purpose);

}  // namespace aeae
