#include "qkd/privacy_amp.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace qkd {

ToeplitzSeed ToeplitzSeed::random(std::size_t n, std::size_t m, std::uint64_t seed) {
  ToeplitzSeed s;
  if (n == 0 || m == 0) return s;
  s.bits.resize(n + m - 1);
  std::uint64_t word = 0;
  for (std::size_t i = 0; i < s.bits.size(); ++i) {
    if (i % 64 == 0) word = mix64(seed ^ (i / 64) * 0x9e3779b97f4a7c15ULL);
    s.bits[i] = (word >> (i % 64)) & 1U;
  }
  return s;
}

double tau(double e) {
  if (!(e >= 0.0 && e < 0.5)) throw std::invalid_argument("tau: e must lie in [0, 0.5)");
  return std::log2(1.0 + 4.0 * e - 4.0 * e * e);
}

std::size_t final_length(std::size_t n, double e, std::uint64_t leak_bits, std::size_t safety_bits) {
  if (n == 0) throw std::invalid_argument("final_length: n must be >= 1");
  if (!(e < 0.11)) throw std::invalid_argument("final_length: QBER at or above the 0.11 threshold");
  const double m = std::floor(static_cast<double>(n) * (1.0 - tau(e)) - static_cast<double>(leak_bits) -
                              static_cast<double>(safety_bits));
  return m <= 0.0 ? 0 : static_cast<std::size_t>(m);
}

double multiphoton_fraction(double p_multiphoton, double detection_rate_per_cycle) {
  if (detection_rate_per_cycle <= 0.0) return 1.0;
  return std::min(1.0, p_multiphoton / detection_rate_per_cycle);
}

Bits toeplitz_hash_reference(std::span<const std::uint8_t> key, const ToeplitzSeed& seed, std::size_t m) {
  const std::size_t n = key.size();
  if (!seed.fits(n, m)) throw std::invalid_argument("toeplitz seed length must be n + m - 1");
  Bits out(m, 0);
  for (std::size_t i = 0; i < m; ++i) {
    std::uint8_t acc = 0;
    for (std::size_t j = 0; j < n; ++j) acc ^= seed.bits[i + n - 1 - j] & key[j];
    out[i] = acc;
  }
  return out;
}

// Column j of the matrix is the seed window [n - 1 - j, n - 1 - j + m), so the
// output is the XOR of the windows selected by the key's set bits. One
// pre-shifted copy of the seed per bit offset makes every window word-aligned.
Bits toeplitz_hash(std::span<const std::uint8_t> key, const ToeplitzSeed& seed, std::size_t m) {
  const std::size_t n = key.size();
  if (!seed.fits(n, m)) throw std::invalid_argument("toeplitz seed length must be n + m - 1");

  const std::size_t out_words = (m + 63) / 64;
  std::vector<std::vector<std::uint64_t>> shifted(64);
  for (std::size_t offset = 0; offset < 64 && offset < n; ++offset) {
    shifted[offset] = pack_words(std::span<const std::uint8_t>(seed.bits).subspan(offset));
    shifted[offset].resize(shifted[offset].size() + out_words + 1, 0);
  }

  std::vector<std::uint64_t> acc(out_words, 0);
  for (std::size_t j = 0; j < n; ++j) {
    if (!(key[j] & 1U)) continue;
    const std::size_t start = n - 1 - j;
    const std::uint64_t* window = shifted[start % 64].data() + start / 64;
    for (std::size_t w = 0; w < out_words; ++w) acc[w] ^= window[w];
  }

  Bits out(m);
  for (std::size_t i = 0; i < m; ++i) out[i] = (acc[i / 64] >> (i % 64)) & 1U;
  return out;
}

}  // namespace qkd
