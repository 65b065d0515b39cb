#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <thread>

#include "oracles.hpp"
#include "qkd/bb84_session.hpp"

using qkd::Role;
using qkd::SessionConfig;
using qkd::SessionOutcome;
using qkd::SessionPhase;
using qkd::wire::AbortReason;
using qkd::wire::MsgType;

namespace {

struct Pair {
  SessionOutcome alice;
  SessionOutcome bob;
  std::vector<std::vector<std::uint8_t>> frames;
};

Pair run_pair(const SessionConfig& alice_cfg, const SessionConfig& bob_cfg) {
  auto tap = std::make_shared<qkd::WireTap>();
  auto [a, b] = qkd::make_pipe_pair();
  qkd::FramedChannel ca(std::move(a), std::chrono::seconds(10));
  qkd::FramedChannel cb(std::move(b), std::chrono::seconds(10));
  ca.set_tap(tap);
  cb.set_tap(tap);
  Pair out;
  std::thread alice([&] {
    out.alice = qkd::run_session(Role::alice, alice_cfg, ca);
    ca.close();
  });
  out.bob = qkd::run_session(Role::bob, bob_cfg, cb);
  alice.join();
  cb.close();
  out.frames = tap->frames();
  return out;
}

Pair run_pair(const SessionConfig& cfg) { return run_pair(cfg, cfg); }

SessionConfig config_at(double length_km, std::uint64_t cycles, std::uint64_t seed) {
  SessionConfig c;
  c.link.length_km = length_km;
  c.n_cycles = cycles;
  c.seed = seed;
  return c;
}

void expect_symmetric_abort(const Pair& p, AbortReason reason) {
  EXPECT_FALSE(p.alice.completed);
  EXPECT_FALSE(p.bob.completed);
  ASSERT_TRUE(p.alice.abort_reason);
  ASSERT_TRUE(p.bob.abort_reason);
  EXPECT_EQ(*p.alice.abort_reason, reason) << qkd::wire::to_string(*p.alice.abort_reason);
  EXPECT_EQ(*p.bob.abort_reason, reason) << qkd::wire::to_string(*p.bob.abort_reason);
}

}  // namespace

TEST(Sift, HandExample) {
  // Find a seed whose Alice bases at cycles 2, 5, 9 are all Z.
  std::uint64_t seed = 0;
  for (;; ++seed) {
    const auto a = qkd::alice_choices(seed);
    if (a.basis(2) == qkd::Basis::Z && a.basis(5) == qkd::Basis::Z && a.basis(9) == qkd::Basis::Z) break;
  }
  const std::vector<std::uint64_t> cycles{2, 5, 9};
  const qkd::Bits bob_bases{0, 1, 0};  // Z, X, Z
  const auto kept = qkd::sift(cycles, bob_bases, qkd::alice_choices(seed), 10);
  EXPECT_EQ(kept, (qkd::Bits{1, 0, 1}));
}

TEST(Sift, UnknownCycleIsProtocolError) {
  const std::vector<std::uint64_t> cycles{3, 10};
  const qkd::Bits bases{0, 0};
  EXPECT_THROW(qkd::sift(cycles, bases, qkd::alice_choices(1), 10), std::out_of_range);
}

TEST(Sift, EmptyDetections) { EXPECT_TRUE(qkd::sift({}, {}, qkd::alice_choices(1), 10).empty()); }

TEST(Sample, SizeRule) {
  EXPECT_EQ(qkd::sample_size(10000, 0.1, 200), 1000u);
  EXPECT_EQ(qkd::sample_size(1500, 0.1, 200), 200u);
  EXPECT_EQ(qkd::sample_size(300, 0.1, 200), 150u);
}

TEST(Sample, UniformSubsetIsSortedAndDistinct) {
  const auto s = qkd::choose_sample(1000, 300, 5);
  ASSERT_EQ(s.size(), 300u);
  EXPECT_TRUE(std::is_sorted(s.begin(), s.end()));
  EXPECT_EQ(std::set<std::uint64_t>(s.begin(), s.end()).size(), 300u);
  EXPECT_LT(s.back(), 1000u);
  EXPECT_EQ(s, qkd::choose_sample(1000, 300, 5));
}

TEST(EstimateQber, IdenticalAndComplementaryKeys) {
  std::mt19937_64 rng(1);
  qkd::Bits a(2000);
  for (auto& x : a) x = rng() & 1U;
  qkd::Bits b = a;
  const auto same = qkd::estimate_qber(a, b, 0.1, 3);
  EXPECT_DOUBLE_EQ(same.estimate, 0.0);
  EXPECT_EQ(same.disclosed.size(), 200u);
  EXPECT_EQ(a.size(), 1800u);
  EXPECT_EQ(b.size(), 1800u);

  qkd::Bits c = a;
  for (auto& x : c) x ^= 1U;
  EXPECT_DOUBLE_EQ(qkd::estimate_qber(a, c, 0.2, 4).estimate, 1.0);
}

TEST(EstimateQber, RemovesDisclosedPositions) {
  qkd::Bits a(500), b(500);
  for (std::size_t i = 0; i < 500; ++i) a[i] = b[i] = static_cast<std::uint8_t>(i % 2);
  const qkd::Bits original = a;
  const auto est = qkd::estimate_qber(a, b, 0.1, 9);
  std::set<std::uint64_t> gone(est.disclosed.begin(), est.disclosed.end());
  qkd::Bits expected;
  for (std::size_t i = 0; i < 500; ++i) {
    if (!gone.count(i)) expected.push_back(original[i]);
  }
  EXPECT_EQ(a, expected);
}

TEST(EstimateQber, BinomialAccuracy) {
  std::mt19937_64 rng(17);
  std::bernoulli_distribution flip(0.089);
  int outside = 0;
  for (int t = 0; t < 100; ++t) {
    qkd::Bits a(10000), b(10000);
    for (std::size_t i = 0; i < 10000; ++i) {
      a[i] = rng() & 1U;
      b[i] = a[i] ^ static_cast<std::uint8_t>(flip(rng));
    }
    // True error rate of this pair, not the generating probability.
    std::size_t diff = 0;
    for (std::size_t i = 0; i < 10000; ++i) diff += a[i] != b[i];
    const double truth = static_cast<double>(diff) / 10000.0;
    const auto est = qkd::estimate_qber(a, b, 0.1, static_cast<std::uint64_t>(t));
    outside += std::abs(est.estimate - truth) > 3.0 * std::sqrt(0.089 * 0.911 / 1000.0);
  }
  EXPECT_LE(outside, 2);
}

TEST(EstimateQber, Preconditions) {
  qkd::Bits a(99, 0), b(99, 0);
  EXPECT_THROW(qkd::estimate_qber(a, b, 0.1, 1), std::invalid_argument);
  qkd::Bits c(200, 0), d(201, 0);
  EXPECT_THROW(qkd::estimate_qber(c, d, 0.1, 1), std::invalid_argument);
  qkd::Bits e(200, 0), f(200, 0);
  EXPECT_THROW(qkd::estimate_qber(e, f, 1.0, 1), std::invalid_argument);
}

TEST(PhaseOf, MessageTypes) {
  EXPECT_EQ(qkd::phase_of(MsgType::hello), SessionPhase::idle);
  EXPECT_EQ(qkd::phase_of(MsgType::detections), SessionPhase::sifting);
  EXPECT_EQ(qkd::phase_of(MsgType::sample_bits), SessionPhase::qber_estimate);
  EXPECT_EQ(qkd::phase_of(MsgType::cascade_parity_req), SessionPhase::reconcile);
  EXPECT_EQ(qkd::phase_of(MsgType::pa_seed), SessionPhase::amplify);
  EXPECT_FALSE(qkd::phase_of(MsgType::abort).has_value());
}

TEST(Session, NoiselessLinkGivesIdenticalKeys) {
  auto cfg = config_at(2.0, 2'000'000, 7);
  cfg.link.p_err_cycle = 0.0;
  cfg.link.p_dark_cycle = 0.0;
  cfg.link.e_mod = 0.0;
  const auto p = run_pair(cfg);
  ASSERT_TRUE(p.alice.completed);
  ASSERT_TRUE(p.bob.completed);
  EXPECT_EQ(p.alice.key.bits, p.bob.key.bits);
  EXPECT_FALSE(p.bob.key.bits.empty());
  EXPECT_DOUBLE_EQ(p.bob.report.qber_estimate, 0.0);
  EXPECT_DOUBLE_EQ(p.bob.report.qber_measured, 0.0);
}

TEST(Session, ShortFiberOperatingPoint) {
  const auto p = run_pair(config_at(4.4, 20'000'000, 3));
  ASSERT_TRUE(p.bob.completed);
  EXPECT_EQ(p.alice.key.bits, p.bob.key.bits);
  EXPECT_EQ(p.alice.key.bits.size(), p.bob.report.final_bits);
  EXPECT_EQ(p.alice.sifted.source_cycles, p.bob.sifted.source_cycles);
  const double ratio = static_cast<double>(p.bob.report.final_bits) / static_cast<double>(p.bob.report.sifted_bits);
  EXPECT_GT(ratio, 0.40);
  EXPECT_LT(ratio, 0.60);
  EXPECT_NEAR(p.bob.report.qber_measured, 0.0332, 0.005);
}

TEST(Session, LongFiberOperatingPoint) {
  // Four hours of key exchange at 122 km so finite-size overhead is small.
  const auto p = run_pair(config_at(122.0, 2'000'000ULL * 14400, 5));
  ASSERT_TRUE(p.bob.completed);
  EXPECT_EQ(p.alice.key.bits, p.bob.key.bits);
  const double ratio = static_cast<double>(p.bob.report.final_bits) / static_cast<double>(p.bob.report.sifted_bits);
  EXPECT_GT(ratio, 0.03);
  EXPECT_LT(ratio, 0.15);
}

TEST(Session, WireTapLedgerMatchesEndpoints) {
  const auto p = run_pair(config_at(20.0, 8'000'000, 11));
  ASSERT_TRUE(p.bob.completed);
  const auto tapped = qkd::reconstruct_ledger(p.frames);
  EXPECT_EQ(tapped, p.bob.report.leak);
  EXPECT_EQ(tapped, p.alice.report.leak);
  EXPECT_EQ(tapped.verify_bits_disclosed, 50u);
  EXPECT_GT(tapped.parity_bits_disclosed, 0u);
  EXPECT_EQ(tapped.sample_bits_disclosed,
            qkd::sample_size(p.bob.report.sifted_bits, 0.1, 200));
}

TEST(Session, OnlyAuditedMessagesCrossTheWire) {
  const auto p = run_pair(config_at(10.0, 4'000'000, 12));
  ASSERT_TRUE(p.bob.completed);
  const std::set<MsgType> allowed = {MsgType::hello,           MsgType::detections,         MsgType::basis_match,
                                     MsgType::sample_request,  MsgType::sample_bits,        MsgType::cascade_shuffle,
                                     MsgType::cascade_parity_req, MsgType::cascade_parity_resp, MsgType::pa_seed,
                                     MsgType::verify_hash,     MsgType::done};
  std::size_t pa_seed_frames = 0;
  for (const auto& f : p.frames) {
    const auto d = qkd::wire::decode_frame(f);
    ASSERT_TRUE(d.ok());
    const auto type = qkd::wire::type_of(d.message());
    EXPECT_TRUE(allowed.count(type)) << qkd::wire::to_string(type);
    if (const auto* s = std::get_if<qkd::wire::PaSeed>(&d.message())) {
      ++pa_seed_frames;
      EXPECT_EQ(s->m, p.bob.report.final_bits);
      EXPECT_EQ(s->seed.size(), p.bob.report.reconciled_bits + p.bob.report.final_bits - 1);
    }
  }
  EXPECT_EQ(pa_seed_frames, 1u);
}

TEST(Session, PhasesAdvanceInOrderAndMessagesStayInPhase) {
  const auto p = run_pair(config_at(15.0, 4'000'000, 13));
  ASSERT_TRUE(p.bob.completed);
  for (const auto* o : {&p.alice, &p.bob}) {
    const std::vector<SessionPhase> expected = {SessionPhase::idle,          SessionPhase::quantum_tx,
                                                SessionPhase::sifting,       SessionPhase::qber_estimate,
                                                SessionPhase::reconcile,     SessionPhase::amplify,
                                                SessionPhase::done};
    EXPECT_EQ(o->phases, expected);
    for (const auto& sent : o->sent) {
      const auto allowed = qkd::phase_of(sent.type);
      ASSERT_TRUE(allowed);
      EXPECT_LE(static_cast<int>(*allowed), static_cast<int>(sent.phase)) << qkd::wire::to_string(sent.type);
      EXPECT_EQ(*allowed, sent.phase) << qkd::wire::to_string(sent.type);
    }
  }
}

TEST(Session, VersionMismatch) {
  auto a = config_at(5.0, 1'000'000, 1);
  auto b = a;
  b.protocol_version = 2;
  expect_symmetric_abort(run_pair(a, b), AbortReason::version_mismatch);
}

TEST(Session, ConfigMismatch) {
  auto a = config_at(5.0, 1'000'000, 1);
  auto b = a;
  b.safety_bits = 31;
  expect_symmetric_abort(run_pair(a, b), AbortReason::config_mismatch);
}

TEST(Session, NoDetections) {
  auto cfg = config_at(5.0, 100000, 1);
  cfg.link.mu = 0.0;
  cfg.link.p_err_cycle = 0.0;
  cfg.link.p_dark_cycle = 0.0;
  expect_symmetric_abort(run_pair(cfg), AbortReason::no_bits);
}

TEST(Session, TooFewSiftedBits) {
  expect_symmetric_abort(run_pair(config_at(0.0, 20000, 1)), AbortReason::insufficient_bits);
}

TEST(Session, ThresholdAbortAt140Km) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    expect_symmetric_abort(run_pair(config_at(140.0, 240'000'000, seed)), AbortReason::qber_threshold);
  }
}

TEST(Session, InterceptResendAborts) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto cfg = config_at(10.0, 4'000'000, seed);
    cfg.attack = qkd::AttackConfig::intercept_resend(1.0);
    expect_symmetric_abort(run_pair(cfg), AbortReason::qber_threshold);
  }
}

TEST(Session, ResidualErrorsCaughtByVerifyHash) {
  // A single pass with huge blocks leaves errors behind.
  auto cfg = config_at(5.0, 4'000'000, 21);
  cfg.cascade.n_passes = 2;
  cfg.cascade.k1_override = 2000;
  const auto p = run_pair(cfg);
  expect_symmetric_abort(p, AbortReason::reconciliation_failed);
}

TEST(Session, NoSecureBits) {
  auto cfg = config_at(10.0, 1'000'000, 2);
  cfg.safety_bits = 100000;
  expect_symmetric_abort(run_pair(cfg), AbortReason::no_secure_bits);
}

TEST(Session, UnconditionalModeTakesFewerBits) {
  auto cfg = config_at(5.0, 1'000'000, 4);
  cfg.link.eta_bob = 0.5;
  const auto plain = run_pair(cfg);
  cfg.unconditional = true;
  const auto strict = run_pair(cfg);
  ASSERT_TRUE(plain.bob.completed);
  ASSERT_TRUE(strict.bob.completed);
  EXPECT_LT(strict.bob.report.final_bits, plain.bob.report.final_bits);
  EXPECT_EQ(strict.alice.key.bits, strict.bob.key.bits);
}

TEST(Session, UnconditionalModeYieldsNothingOnAsBuiltReceiver) {
  // Every detection could come from a multi-photon pulse at 4.5% efficiency.
  auto cfg = config_at(0.0, 4'000'000, 4);
  cfg.unconditional = true;
  expect_symmetric_abort(run_pair(cfg), AbortReason::no_secure_bits);
}

TEST(Session, DeterministicForSeed) {
  const auto cfg = config_at(25.0, 3'000'000, 99);
  const auto x = run_pair(cfg);
  const auto y = run_pair(cfg);
  ASSERT_TRUE(x.bob.completed);
  EXPECT_EQ(x.bob.key.bits, y.bob.key.bits);
  EXPECT_EQ(x.frames, y.frames);
}

TEST(Session, PeerVanishing) {
  auto [a, b] = qkd::make_pipe_pair();
  qkd::FramedChannel cb(std::move(b), std::chrono::milliseconds(500));
  a->close();
  const auto out = qkd::run_session(Role::bob, config_at(5.0, 100000, 1), cb);
  EXPECT_FALSE(out.completed);
  ASSERT_TRUE(out.abort_reason);
  EXPECT_EQ(*out.abort_reason, AbortReason::channel_closed);
}

TEST(Session, SilentPeerTimesOut) {
  auto [a, b] = qkd::make_pipe_pair();
  auto cfg = config_at(5.0, 100000, 1);
  cfg.timeout = std::chrono::milliseconds(100);
  qkd::FramedChannel cb(std::move(b), cfg.timeout);
  const auto out = qkd::run_session(Role::bob, cfg, cb);
  ASSERT_TRUE(out.abort_reason);
  EXPECT_EQ(*out.abort_reason, AbortReason::timeout);
}

TEST(Session, GarbageFromPeer) {
  auto [a, b] = qkd::make_pipe_pair();
  qkd::FramedChannel cb(std::move(b), std::chrono::seconds(2));
  const std::vector<std::uint8_t> junk(16, 0x55);
  a->write_all(junk);
  const auto out = qkd::run_session(Role::bob, config_at(5.0, 100000, 1), cb);
  ASSERT_TRUE(out.abort_reason);
  EXPECT_EQ(*out.abort_reason, AbortReason::malformed_frame);
}

TEST(Session, OutOfOrderMessageIsProtocolError) {
  auto [a, b] = qkd::make_pipe_pair();
  qkd::FramedChannel ca(std::move(a), std::chrono::seconds(2));
  qkd::FramedChannel cb(std::move(b), std::chrono::seconds(2));
  ca.send(qkd::wire::PaSeed{1, qkd::Bits{1}});
  const auto out = qkd::run_session(Role::bob, config_at(5.0, 100000, 1), cb);
  ASSERT_TRUE(out.abort_reason);
  EXPECT_EQ(*out.abort_reason, AbortReason::protocol_error);
  // Bob tells the peer why.
  const auto reply = ca.receive();
  EXPECT_EQ(reply, qkd::wire::Message(qkd::wire::Abort{AbortReason::protocol_error}));
}
