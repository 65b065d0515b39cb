#pragma once

#include <cstdint>
#include <numbers>

namespace qkd {

enum class Basis : std::uint8_t { Z = 0, X = 1 };

/// Four-phase BB84 assignment: bit adds pi, the X basis adds pi/2.
constexpr double encode(std::uint8_t bit, Basis basis) {
  return (bit & 1U) * std::numbers::pi + (basis == Basis::X ? std::numbers::pi / 2 : 0.0);
}

/// Bob's measurement phase for a basis choice.
constexpr double measurement_phase(Basis basis) {
  return basis == Basis::X ? std::numbers::pi / 2 : 0.0;
}

struct EncodingRecord {
  std::uint64_t cycle_index = 0;
  std::uint8_t bit = 0;
  Basis basis = Basis::Z;
  double phase() const { return encode(bit, basis); }
};

struct DetectionRecord {
  std::uint64_t cycle_index = 0;
  Basis bob_basis = Basis::Z;
  std::uint8_t bit = 0;

  friend bool operator==(const DetectionRecord&, const DetectionRecord&) = default;
};

}  // namespace qkd
