#pragma once

// Random message and byte-string generators shared by the codec tests and
// the acceptance fuzz run.

#include <random>
#include <vector>

#include "qkd/wire.hpp"

namespace wire_gen {

inline qkd::Bits bits(std::mt19937_64& rng, std::size_t max_len) {
  qkd::Bits b(rng() % (max_len + 1));
  for (auto& x : b) x = rng() & 1U;
  return b;
}

inline std::vector<std::uint64_t> increasing(std::mt19937_64& rng, std::size_t max_len) {
  std::vector<std::uint64_t> v(rng() % (max_len + 1));
  std::uint64_t at = rng() % 1000;
  for (auto& x : v) {
    // Mix small and very large gaps to exercise multi-byte varints.
    at += 1 + (rng() % 4 == 0 ? rng() % (1ULL << 40) : rng() % 300);
    x = at;
  }
  return v;
}

inline qkd::wire::Message message(std::mt19937_64& rng) {
  using namespace qkd::wire;
  switch (rng() % 12) {
    case 0:
      return Hello{static_cast<std::uint16_t>(rng()), rng()};
    case 1: {
      Detections d;
      d.cycles = increasing(rng, 200);
      d.bases.resize(d.cycles.size());
      for (auto& b : d.bases) b = rng() & 1U;
      return d;
    }
    case 2:
      return BasisMatch{bits(rng, 300)};
    case 3:
      return SampleRequest{increasing(rng, 100)};
    case 4:
      return SampleBits{bits(rng, 300)};
    case 5:
      return CascadeShuffle{static_cast<std::uint8_t>(rng()), rng()};
    case 6: {
      CascadeParityReq r;
      r.ranges.resize(rng() % 50);
      for (auto& q : r.ranges) q = {static_cast<std::uint32_t>(rng() % 256), rng() >> (rng() % 64), rng() % 100000};
      return r;
    }
    case 7:
      return CascadeParityResp{bits(rng, 300)};
    case 8:
      return PaSeed{static_cast<std::uint32_t>(rng()), bits(rng, 500)};
    case 9:
      return VerifyHash{rng(), rng() >> (64 - qkd::kVerifyHashBits)};
    case 10:
      return Abort{static_cast<AbortReason>(1 + rng() % 12)};
    default: {
      Done d;
      d.digest.resize(1 + rng() % 40);
      for (auto& b : d.digest) b = static_cast<std::uint8_t>(rng());
      return d;
    }
  }
}

/// Fuzz input: pure noise, a valid frame with random mutations, a
/// truncated valid frame, or a valid header in front of random payload.
inline std::vector<std::uint8_t> fuzz_input(std::mt19937_64& rng) {
  const int kind = static_cast<int>(rng() % 4);
  if (kind == 0) {
    std::vector<std::uint8_t> v(rng() % 64);
    for (auto& b : v) b = static_cast<std::uint8_t>(rng());
    return v;
  }
  auto frame = qkd::wire::encode_frame(message(rng));
  if (kind == 1) {
    const int flips = 1 + static_cast<int>(rng() % 4);
    for (int i = 0; i < flips; ++i) frame[rng() % frame.size()] ^= static_cast<std::uint8_t>(1U << (rng() % 8));
    return frame;
  }
  if (kind == 2) {
    frame.resize(rng() % frame.size());
    return frame;
  }
  std::vector<std::uint8_t> payload(rng() % 48);
  for (auto& b : payload) b = static_cast<std::uint8_t>(rng());
  std::vector<std::uint8_t> out(frame.begin(), frame.begin() + 5);
  const auto len = static_cast<std::uint32_t>(payload.size());
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(len >> s));
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

/// Decodes and checks the result is either a typed error or a message that
/// re-encodes to the bytes consumed. Any exception propagates to the caller.
inline bool decode_is_well_behaved(const std::vector<std::uint8_t>& input) {
  const auto d = qkd::wire::decode_frame(input);
  if (!d.ok()) return true;
  if (d.consumed > input.size()) return false;
  const auto again = qkd::wire::decode_frame(qkd::wire::encode_frame(d.message()));
  return again.ok() && again.message() == d.message();
}

}  // namespace wire_gen
