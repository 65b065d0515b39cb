#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace qkd {

/// One bit per element, values 0 or 1. Keys are short enough (< 10^7 bits)
/// that byte-per-bit storage keeps random access and flips trivial.
using Bits = std::vector<std::uint8_t>;

/// XOR of bits[begin, end).
std::uint8_t parity(std::span<const std::uint8_t> bits);

/// Packs into 64-bit words, bit i at word i/64, position i%64.
std::vector<std::uint64_t> pack_words(std::span<const std::uint8_t> bits);

/// Most-significant-bit-first byte packing, zero padded at the tail.
std::vector<std::uint8_t> pack_msb(std::span<const std::uint8_t> bits);
Bits unpack_msb(std::span<const std::uint8_t> bytes, std::size_t n_bits);

/// "0110" style rendering, used by tests and key files.
std::string to_string(std::span<const std::uint8_t> bits);
Bits from_string(const std::string& s);

/// Counter-based 64-bit mixer (SplitMix64 finalizer). Stateless, so any
/// cycle's random choice can be recomputed from (seed, index) alone.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return mix64(seed ^ mix64(stream + 0x632be59bd9b4e019ULL));
}

}  // namespace qkd
