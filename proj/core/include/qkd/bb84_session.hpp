#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "qkd/bits.hpp"
#include "qkd/cascade.hpp"
#include "qkd/encoding.hpp"
#include "qkd/event_sim.hpp"
#include "qkd/link_model.hpp"
#include "qkd/privacy_amp.hpp"
#include "qkd/transport.hpp"
#include "qkd/wire.hpp"

namespace qkd {

inline constexpr std::uint16_t kProtocolVersion = 1;

enum class Role : std::uint8_t { alice, bob };

enum class SessionPhase : std::uint8_t { idle, quantum_tx, sifting, qber_estimate, reconcile, amplify, done, aborted };
std::string_view to_string(SessionPhase phase);

/// Phase in which a message type may be sent; nullopt for ABORT.
std::optional<SessionPhase> phase_of(wire::MsgType type);

/// Key bits with the cycle each came from.
struct SiftedKey {
  Bits bits;
  std::vector<std::uint64_t> source_cycles;
};

/// Everything both endpoints must agree on; hashed into HELLO.
struct SessionConfig {
  LinkParams link;
  std::uint64_t n_cycles = 0;
  SimMode sim_mode = SimMode::aggregate;
  DriftState drift;
  AttackConfig attack;
  SimOptions sim;
  std::uint64_t seed = 0;
  double sample_fraction = 0.1;
  std::size_t sample_floor = 200;
  std::size_t safety_bits = 30;
  CascadeConfig cascade;
  // Deduct the multi-photon fraction before compression.
  bool unconditional = false;
  std::uint16_t protocol_version = kProtocolVersion;
  std::chrono::milliseconds timeout = std::chrono::seconds(30);

  void validate() const;
  std::uint64_t params_hash() const;
};

/// Kept positions: indices into Bob's detection list whose basis matches
/// Alice's. Throws std::out_of_range for a cycle Alice never sent.
Bits sift(std::span<const std::uint64_t> detected_cycles, std::span<const std::uint8_t> bob_bases,
          const ChoiceSource& alice, std::uint64_t n_cycles);

/// Sample size for QBER estimation: max(floor, ceil(fraction n)), at most n/2.
std::size_t sample_size(std::size_t n, double fraction, std::size_t floor_bits);

/// Uniform random subset of [0, n) of the given size, sorted.
std::vector<std::uint64_t> choose_sample(std::size_t n, std::size_t count, std::uint64_t seed);

struct QberEstimate {
  double estimate = 0.0;
  std::vector<std::uint64_t> disclosed;
};

/// Compares a random subset of positions, then removes them from both keys.
/// Throws std::invalid_argument if the keys are shorter than 100 bits or
/// differ in length, or the fraction is outside (0, 1).
QberEstimate estimate_qber(Bits& alice, Bits& bob, double sample_fraction, std::uint64_t seed,
                           std::size_t floor_bits = 200);

/// Removes sorted positions from a key.
void remove_positions(Bits& key, std::span<const std::uint64_t> sorted_positions);

struct SentMessage {
  SessionPhase phase;
  wire::MsgType type;
};

struct SessionOutcome {
  Role role = Role::alice;
  bool completed = false;
  std::optional<wire::AbortReason> abort_reason;
  SecretKey key;
  KeyReport report;
  SiftedKey sifted;
  std::vector<SessionPhase> phases;
  std::vector<SentMessage> sent;
};

/// One endpoint's protocol state machine. start() performs the handshake,
/// each step() advances one phase, finish() returns the outcome.
class SessionEndpoint {
 public:
  SessionEndpoint(Role role, SessionConfig config, FramedChannel& channel);

  void start();
  /// Returns false once the session is done or aborted.
  bool step();
  SessionOutcome finish();
  SessionPhase phase() const { return phase_; }

 private:
  struct Abort {
    wire::AbortReason reason;
    bool notify_peer;
  };
  friend class WireParityChannel;

  void enter(SessionPhase next);
  void send(const wire::Message& msg);
  wire::Message receive();
  template <class T>
  T expect();
  [[noreturn]] void fail(wire::AbortReason reason, bool notify_peer = true);
  void abort_with(wire::AbortReason reason, bool notify_peer);

  void handshake();
  void quantum_tx();
  void sifting();
  void qber_estimate();
  void reconcile();
  void amplify();
  void alice_reconcile();
  void bob_reconcile();

  std::uint64_t stream_seed(std::uint64_t stream) const;
  std::vector<std::uint8_t> report_digest() const;

  Role role_;
  SessionConfig config_;
  FramedChannel& channel_;
  SessionPhase phase_ = SessionPhase::idle;
  SessionOutcome outcome_;

  std::vector<DetectionRecord> detections_;
  Bits key_;
  double qber_estimate_ = 0.0;
  std::size_t corrections_ = 0;
  LeakLedger ledger_;
  std::uint64_t sifted_bits_ = 0;
};

/// Runs one endpoint to completion.
SessionOutcome run_session(Role role, const SessionConfig& config, FramedChannel& channel);

/// Ledger rebuilt from recorded frames alone.
LeakLedger reconstruct_ledger(const std::vector<std::vector<std::uint8_t>>& frames);

}  // namespace qkd
