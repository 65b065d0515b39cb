#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "qkd/bits.hpp"

namespace qkd {

struct CascadeConfig {
  int n_passes = 4;
  // Zero selects ceil(0.73 / e_est).
  std::size_t k1_override = 0;

  void validate() const;
  /// ceil(0.73 / e), e clamped below at 1/n, result clamped to [4, n/2].
  static std::size_t initial_block_size(double e_est, std::size_t n);
};

/// Key-correlated bits disclosed on the classical channel.
struct LeakLedger {
  std::uint64_t parity_bits_disclosed = 0;
  std::uint64_t sample_bits_disclosed = 0;
  std::uint64_t verify_bits_disclosed = 0;

  /// Bits disclosed about the key that survives sampling.
  std::uint64_t reconciliation_total() const { return parity_bits_disclosed + verify_bits_disclosed; }
  std::uint64_t total() const { return reconciliation_total() + sample_bits_disclosed; }

  friend bool operator==(const LeakLedger&, const LeakLedger&) = default;
};

/// A parity request over positions [start, start + length) of one pass's
/// shuffled ordering.
struct ParityQuery {
  std::uint32_t pass = 0;
  std::uint64_t start = 0;
  std::uint64_t length = 0;

  friend bool operator==(const ParityQuery&, const ParityQuery&) = default;
};

/// Bob's view of Alice during Cascade. Implementations either talk to a
/// remote Alice or wrap a local responder.
class ParityChannel {
 public:
  virtual ~ParityChannel() = default;
  /// Shuffle seed Alice chose for a pass (passes are 1-based, pass 1 is
  /// never shuffled and never asked for).
  virtual std::uint64_t shuffle_seed(std::uint32_t pass) = 0;
  virtual Bits parities(std::span<const ParityQuery> queries) = 0;
};

/// Deterministic Fisher-Yates permutation; identical on both endpoints.
std::vector<std::uint32_t> pass_permutation(std::size_t n, std::uint64_t seed);

/// Alice's side: answers parity queries against her key.
class CascadeResponder {
 public:
  explicit CascadeResponder(Bits key);

  void begin_pass(std::uint32_t pass, std::uint64_t seed);
  /// Throws std::out_of_range on a query for an unknown pass or range.
  Bits answer(std::span<const ParityQuery> queries) const;
  const Bits& key() const { return key_; }

 private:
  Bits key_;
  std::vector<std::vector<std::uint32_t>> perms_;
};

/// In-process channel around a responder, with a parity counter.
class LocalParityChannel : public ParityChannel {
 public:
  LocalParityChannel(Bits alice_key, std::uint64_t seed);
  std::uint64_t shuffle_seed(std::uint32_t pass) override;
  Bits parities(std::span<const ParityQuery> queries) override;
  std::uint64_t disclosed() const { return disclosed_; }
  std::uint64_t exchanges() const { return exchanges_; }

 private:
  CascadeResponder responder_;
  std::uint64_t seed_;
  std::uint64_t disclosed_ = 0;
  std::uint64_t exchanges_ = 0;
};

std::uint8_t block_parity(std::span<const std::uint8_t> bits, std::size_t begin, std::size_t end);

struct BinarySearchResult {
  std::size_t index = 0;
  std::size_t exchanges = 0;
};

/// Locates one differing bit in a block whose parity differs from Alice's.
/// alice_parity(start, length) asks Alice for one sub-block parity.
/// Throws std::logic_error when the relative parity is even.
BinarySearchResult binary_search_error(std::span<const std::uint8_t> bob_block, std::uint8_t alice_block_parity,
                                       const std::function<std::uint8_t(std::size_t, std::size_t)>& alice_parity);

struct CascadeResult {
  Bits corrected;
  LeakLedger ledger;
  std::size_t block_size_first = 0;
  std::vector<std::size_t> corrections_per_pass;
  std::size_t total_corrections() const;
};

/// Multi-pass Cascade from Bob's side. Binary searches of all odd blocks
/// advance in lockstep so each round is one parity exchange; every
/// correction re-examines the blocks containing it in all earlier passes.
CascadeResult run_cascade(Bits bob_key, double e_est, const CascadeConfig& config, ParityChannel& channel);

/// 50-bit random-subset parity hash keyed by salt.
constexpr int kVerifyHashBits = 50;
std::uint64_t verify_hash(std::span<const std::uint8_t> key, std::uint64_t salt);

}  // namespace qkd
