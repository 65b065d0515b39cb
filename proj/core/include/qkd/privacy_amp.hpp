#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>

#include "qkd/bits.hpp"
#include "qkd/cascade.hpp"

namespace qkd {

/// Defining bits of an m x n Toeplitz matrix, T[i][j] = bits[i - j + n - 1].
struct ToeplitzSeed {
  Bits bits;

  static ToeplitzSeed random(std::size_t n, std::size_t m, std::uint64_t seed);
  bool fits(std::size_t n, std::size_t m) const { return m > 0 && n > 0 && bits.size() == n + m - 1; }
};

struct KeyReport {
  std::uint64_t sifted_bits = 0;
  std::uint64_t reconciled_bits = 0;  // n
  std::uint64_t final_bits = 0;       // m
  LeakLedger leak;
  double qber_estimate = 0.0;
  double qber_measured = 0.0;

  friend bool operator==(const KeyReport&, const KeyReport&) = default;
};

struct SecretKey {
  Bits bits;
  std::uint64_t session_id = 0;
  KeyReport report;
};

/// Compression fraction log2(1 + 4e - 4e^2). Throws for e outside [0, 0.5).
double tau(double e);

/// floor(n (1 - tau(e)) - leak - safety), clamped at 0. Throws for e >= 0.11
/// or n == 0.
std::size_t final_length(std::size_t n, double e, std::uint64_t leak_bits, std::size_t safety_bits);

/// Multi-photon deduction for the optional unconditional mode: the fraction
/// of sifted bits attributable to multi-photon pulses, bounded by 1.
double multiphoton_fraction(double p_multiphoton, double detection_rate_per_cycle);

/// GF(2) product of the Toeplitz matrix with the key. Throws
/// std::invalid_argument on a seed of the wrong length.
Bits toeplitz_hash(std::span<const std::uint8_t> key, const ToeplitzSeed& seed, std::size_t m);

/// Plain row-by-row evaluation, kept as the test oracle for toeplitz_hash.
Bits toeplitz_hash_reference(std::span<const std::uint8_t> key, const ToeplitzSeed& seed, std::size_t m);

}  // namespace qkd
