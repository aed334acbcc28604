#include <span>

#include "aeae/binary_io.hpp"
#include "aeae/seeding.hpp"

namespace aeae {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t master, std::string_view purpose) {
  const auto* bytes = reinterpret_cast<const std::uint8_t*>(purpose.data());
  return mix64(master ^ fnv1a64(std::span<const std::uint8_t>(bytes, purpose.size())));
}

}  // namespace aeae
