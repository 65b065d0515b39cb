#include "qkd/bb84_session.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

#include "qkd/security.hpp"

namespace qkd {

namespace {

constexpr std::uint64_t kQuantumStream = 100;
constexpr std::uint64_t kSampleStream = 101;
constexpr std::uint64_t kShuffleStream = 102;
constexpr std::uint64_t kSaltStream = 103;
constexpr std::uint64_t kToeplitzStream = 104;

class Fnv {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h_ ^= b[i];
      h_ *= 0x100000001b3ULL;
    }
  }
  void u64(std::uint64_t v) {
    for (int s = 56; s >= 0; s -= 8) {
      const auto b = static_cast<std::uint8_t>(v >> s);
      bytes(&b, 1);
    }
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  std::uint64_t value() const { return h_; }

 private:
  std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

}  // namespace

std::string_view to_string(SessionPhase phase) {
  switch (phase) {
    case SessionPhase::idle: return "idle";
    case SessionPhase::quantum_tx: return "quantum_tx";
    case SessionPhase::sifting: return "sifting";
    case SessionPhase::qber_estimate: return "qber_estimate";
    case SessionPhase::reconcile: return "reconcile";
    case SessionPhase::amplify: return "amplify";
    case SessionPhase::done: return "done";
    case SessionPhase::aborted: return "aborted";
  }
  return "unknown";
}

std::optional<SessionPhase> phase_of(wire::MsgType type) {
  using wire::MsgType;
  switch (type) {
    case MsgType::hello: return SessionPhase::idle;
    case MsgType::detections:
    case MsgType::basis_match: return SessionPhase::sifting;
    case MsgType::sample_request:
    case MsgType::sample_bits: return SessionPhase::qber_estimate;
    case MsgType::cascade_shuffle:
    case MsgType::cascade_parity_req:
    case MsgType::cascade_parity_resp:
    case MsgType::verify_hash: return SessionPhase::reconcile;
    case MsgType::pa_seed:
    case MsgType::done: return SessionPhase::amplify;
    case MsgType::abort: return std::nullopt;
  }
  return std::nullopt;
}

void SessionConfig::validate() const {
  link.validate();
  attack.validate();
  cascade.validate();
  if (n_cycles == 0) throw std::invalid_argument("n_cycles must be >= 1");
  if (!(sample_fraction > 0.0 && sample_fraction < 1.0)) throw std::invalid_argument("sample_fraction must lie in (0, 1)");
}

std::uint64_t SessionConfig::params_hash() const {
  Fnv h;
  for (double v : {link.mu, link.alpha_db_per_km, link.length_km, link.eta_bob, link.p_err_cycle, link.p_dark_cycle,
                   link.clock_hz, link.gate_ns, link.e_mod, link.reference_signal_ratio, drift.phase_offset_deg,
                   drift.drift_rate_deg_per_s, attack.fraction, sim.interferometer_visibility, sample_fraction}) {
    h.f64(v);
  }
  for (std::uint64_t v :
       {n_cycles, static_cast<std::uint64_t>(sim_mode), static_cast<std::uint64_t>(drift.enabled),
        static_cast<std::uint64_t>(attack.mode), static_cast<std::uint64_t>(sim.noise), seed,
        static_cast<std::uint64_t>(sample_floor), static_cast<std::uint64_t>(safety_bits),
        static_cast<std::uint64_t>(cascade.n_passes), static_cast<std::uint64_t>(cascade.k1_override),
        static_cast<std::uint64_t>(unconditional)}) {
    h.u64(v);
  }
  return h.value();
}

Bits sift(std::span<const std::uint64_t> detected_cycles, std::span<const std::uint8_t> bob_bases,
          const ChoiceSource& alice, std::uint64_t n_cycles) {
  if (detected_cycles.size() != bob_bases.size()) throw std::invalid_argument("sift: one basis per detection");
  Bits kept(detected_cycles.size());
  for (std::size_t i = 0; i < detected_cycles.size(); ++i) {
    if (detected_cycles[i] >= n_cycles) throw std::out_of_range("sift: unknown cycle index");
    kept[i] = static_cast<std::uint8_t>(alice.basis(detected_cycles[i])) == (bob_bases[i] & 1U);
  }
  return kept;
}

std::size_t sample_size(std::size_t n, double fraction, std::size_t floor_bits) {
  const auto wanted = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n)));
  return std::min(std::max(wanted, floor_bits), n / 2);
}

std::vector<std::uint64_t> choose_sample(std::size_t n, std::size_t count, std::uint64_t seed) {
  if (count > n) throw std::invalid_argument("choose_sample: count exceeds n");
  // Floyd's algorithm: count draws, exactly uniform over subsets.
  std::mt19937_64 rng(seed);
  std::unordered_set<std::uint64_t> chosen;
  chosen.reserve(count * 2);
  for (std::size_t j = n - count; j < n; ++j) {
    const std::uint64_t t = rng() % (j + 1);
    if (!chosen.insert(t).second) chosen.insert(j);
  }
  std::vector<std::uint64_t> out(chosen.begin(), chosen.end());
  std::sort(out.begin(), out.end());
  return out;
}

void remove_positions(Bits& key, std::span<const std::uint64_t> sorted_positions) {
  std::size_t next = 0, w = 0;
  for (std::size_t i = 0; i < key.size(); ++i) {
    if (next < sorted_positions.size() && sorted_positions[next] == i) {
      ++next;
      continue;
    }
    key[w++] = key[i];
  }
  key.resize(w);
}

QberEstimate estimate_qber(Bits& alice, Bits& bob, double sample_fraction, std::uint64_t seed,
                           std::size_t floor_bits) {
  if (alice.size() != bob.size()) throw std::invalid_argument("estimate_qber: keys differ in length");
  if (alice.size() < 100) throw std::invalid_argument("insufficient_bits");
  if (!(sample_fraction > 0.0 && sample_fraction < 1.0)) throw std::invalid_argument("sample_fraction must lie in (0, 1)");
  QberEstimate q;
  q.disclosed = choose_sample(alice.size(), sample_size(alice.size(), sample_fraction, floor_bits), seed);
  std::size_t mismatches = 0;
  for (auto i : q.disclosed) mismatches += alice[i] != bob[i];
  q.estimate = static_cast<double>(mismatches) / static_cast<double>(q.disclosed.size());
  remove_positions(alice, q.disclosed);
  remove_positions(bob, q.disclosed);
  return q;
}

// Bob's Cascade transport: CASCADE_SHUFFLE and PARITY_REQ/RESP round trips.
class WireParityChannel : public ParityChannel {
 public:
  explicit WireParityChannel(SessionEndpoint& ep) : ep_(ep) {}

  std::uint64_t shuffle_seed(std::uint32_t pass) override {
    ep_.send(wire::CascadeShuffle{static_cast<std::uint8_t>(pass), 0});
    const auto reply = ep_.expect<wire::CascadeShuffle>();
    if (reply.pass != pass) ep_.fail(wire::AbortReason::protocol_error);
    return reply.seed;
  }

  Bits parities(std::span<const ParityQuery> queries) override {
    ep_.send(wire::CascadeParityReq{{queries.begin(), queries.end()}});
    auto reply = ep_.expect<wire::CascadeParityResp>();
    if (reply.parities.size() != queries.size()) ep_.fail(wire::AbortReason::protocol_error);
    return std::move(reply.parities);
  }

 private:
  SessionEndpoint& ep_;
};

SessionEndpoint::SessionEndpoint(Role role, SessionConfig config, FramedChannel& channel)
    : role_(role), config_(std::move(config)), channel_(channel) {
  outcome_.role = role;
}

std::uint64_t SessionEndpoint::stream_seed(std::uint64_t stream) const { return derive_seed(config_.seed, stream); }

void SessionEndpoint::enter(SessionPhase next) {
  phase_ = next;
  outcome_.phases.push_back(next);
}

void SessionEndpoint::send(const wire::Message& msg) {
  outcome_.sent.push_back({phase_, wire::type_of(msg)});
  try {
    channel_.send(msg);
  } catch (const WireFailure& f) {
    throw Abort{f.reason(), false};
  }
}

wire::Message SessionEndpoint::receive() {
  wire::Message msg;
  try {
    msg = channel_.receive();
  } catch (const WireFailure& f) {
    throw Abort{f.reason(), f.reason() != wire::AbortReason::channel_closed};
  }
  if (const auto* a = std::get_if<wire::Abort>(&msg)) throw Abort{a->reason, false};
  if (phase_of(wire::type_of(msg)) != phase_) fail(wire::AbortReason::protocol_error);
  return msg;
}

template <class T>
T SessionEndpoint::expect() {
  wire::Message msg = receive();
  if (auto* m = std::get_if<T>(&msg)) return std::move(*m);
  fail(wire::AbortReason::protocol_error);
}

void SessionEndpoint::fail(wire::AbortReason reason, bool notify_peer) { throw Abort{reason, notify_peer}; }

void SessionEndpoint::abort_with(wire::AbortReason reason, bool notify_peer) {
  if (notify_peer) {
    try {
      outcome_.sent.push_back({phase_, wire::MsgType::abort});
      channel_.send(wire::Abort{reason});
    } catch (const WireFailure&) {
    }
  }
  outcome_.abort_reason = reason;
  enter(SessionPhase::aborted);
}

void SessionEndpoint::start() {
  if (!outcome_.phases.empty()) return;
  enter(SessionPhase::idle);
  try {
    config_.validate();
    handshake();
    enter(SessionPhase::quantum_tx);
  } catch (const Abort& a) {
    abort_with(a.reason, a.notify_peer);
  }
}

bool SessionEndpoint::step() {
  if (outcome_.phases.empty()) start();
  try {
    switch (phase_) {
      case SessionPhase::idle:
        return true;
      case SessionPhase::quantum_tx:
        quantum_tx();
        enter(SessionPhase::sifting);
        return true;
      case SessionPhase::sifting:
        sifting();
        enter(SessionPhase::qber_estimate);
        return true;
      case SessionPhase::qber_estimate:
        qber_estimate();
        enter(SessionPhase::reconcile);
        return true;
      case SessionPhase::reconcile:
        reconcile();
        enter(SessionPhase::amplify);
        return true;
      case SessionPhase::amplify:
        amplify();
        enter(SessionPhase::done);
        return false;
      case SessionPhase::done:
      case SessionPhase::aborted:
        return false;
    }
  } catch (const Abort& a) {
    abort_with(a.reason, a.notify_peer);
  }
  return false;
}

SessionOutcome SessionEndpoint::finish() {
  while (step()) {
  }
  outcome_.completed = phase_ == SessionPhase::done;
  outcome_.report.sifted_bits = sifted_bits_;
  outcome_.report.leak = ledger_;
  if (role_ == Role::bob) {
    outcome_.report.qber_estimate = qber_estimate_;
    if (outcome_.report.reconciled_bits > 0) {
      outcome_.report.qber_measured =
          static_cast<double>(corrections_) / static_cast<double>(outcome_.report.reconciled_bits);
    }
  }
  outcome_.key.report = outcome_.report;
  outcome_.key.session_id = config_.params_hash();
  return outcome_;
}

void SessionEndpoint::handshake() {
  const wire::Hello mine{config_.protocol_version, config_.params_hash()};
  auto check = [&](const wire::Hello& theirs) {
    if (theirs.version != mine.version) fail(wire::AbortReason::version_mismatch);
    if (theirs.params_hash != mine.params_hash) fail(wire::AbortReason::config_mismatch);
  };
  if (role_ == Role::alice) {
    send(mine);
    check(expect<wire::Hello>());
  } else {
    check(expect<wire::Hello>());
    send(mine);
  }
}

void SessionEndpoint::quantum_tx() {
  // Alice's encodings are recomputed per cycle from the shared seed, so
  // only Bob has work to do here.
  if (role_ == Role::bob) {
    detections_ = detect(config_.link, config_.n_cycles, config_.sim_mode, config_.drift, config_.attack,
                         stream_seed(kQuantumStream), config_.sim);
  }
}

void SessionEndpoint::sifting() {
  Bits kept;
  std::vector<std::uint64_t> cycles;
  if (role_ == Role::bob) {
    wire::Detections d;
    d.cycles.reserve(detections_.size());
    d.bases.reserve(detections_.size());
    for (const auto& r : detections_) {
      d.cycles.push_back(r.cycle_index);
      d.bases.push_back(static_cast<std::uint8_t>(r.bob_basis));
    }
    send(d);
    kept = expect<wire::BasisMatch>().kept;
    if (kept.size() != detections_.size()) fail(wire::AbortReason::protocol_error);
    for (std::size_t i = 0; i < kept.size(); ++i) {
      if (!kept[i]) continue;
      key_.push_back(detections_[i].bit);
      cycles.push_back(detections_[i].cycle_index);
    }
  } else {
    const auto d = expect<wire::Detections>();
    const ChoiceSource alice = alice_choices(stream_seed(kQuantumStream));
    try {
      kept = sift(d.cycles, d.bases, alice, config_.n_cycles);
    } catch (const std::out_of_range&) {
      fail(wire::AbortReason::protocol_error);
    }
    send(wire::BasisMatch{kept});
    for (std::size_t i = 0; i < kept.size(); ++i) {
      if (!kept[i]) continue;
      key_.push_back(alice.bit(d.cycles[i]));
      cycles.push_back(d.cycles[i]);
    }
  }
  sifted_bits_ = key_.size();
  outcome_.sifted = {key_, std::move(cycles)};
  if (key_.empty()) fail(wire::AbortReason::no_bits, false);
  if (key_.size() < 100) fail(wire::AbortReason::insufficient_bits, false);
}

void SessionEndpoint::qber_estimate() {
  const std::size_t n = key_.size();
  if (role_ == Role::bob) {
    wire::SampleRequest req;
    req.indices = choose_sample(n, sample_size(n, config_.sample_fraction, config_.sample_floor),
                                stream_seed(kSampleStream));
    send(req);
    const auto reply = expect<wire::SampleBits>();
    if (reply.bits.size() != req.indices.size()) fail(wire::AbortReason::protocol_error);
    std::size_t mismatches = 0;
    for (std::size_t i = 0; i < req.indices.size(); ++i) mismatches += reply.bits[i] != key_[req.indices[i]];
    qber_estimate_ = static_cast<double>(mismatches) / static_cast<double>(req.indices.size());
    remove_positions(key_, req.indices);
    ledger_.sample_bits_disclosed += req.indices.size();
    if (qber_estimate_ >= kQberThreshold) fail(wire::AbortReason::qber_threshold);
  } else {
    const auto req = expect<wire::SampleRequest>();
    if (req.indices.empty() || req.indices.back() >= n || req.indices.size() > n / 2) {
      fail(wire::AbortReason::protocol_error);
    }
    wire::SampleBits reply;
    reply.bits.reserve(req.indices.size());
    for (auto i : req.indices) reply.bits.push_back(key_[i]);
    send(reply);
    remove_positions(key_, req.indices);
    ledger_.sample_bits_disclosed += req.indices.size();
  }
}

void SessionEndpoint::reconcile() {
  if (role_ == Role::bob) {
    bob_reconcile();
  } else {
    alice_reconcile();
  }
}

void SessionEndpoint::bob_reconcile() {
  WireParityChannel channel(*this);
  CascadeResult result;
  try {
    result = run_cascade(std::move(key_), qber_estimate_, config_.cascade, channel);
  } catch (const std::runtime_error&) {
    fail(wire::AbortReason::protocol_error);
  }
  key_ = std::move(result.corrected);
  corrections_ = result.total_corrections();
  ledger_.parity_bits_disclosed += result.ledger.parity_bits_disclosed;

  std::mt19937_64 rng(stream_seed(kSaltStream));
  const std::uint64_t salt = rng();
  const wire::VerifyHash sent{salt, verify_hash(key_, salt)};
  send(sent);
  ledger_.verify_bits_disclosed += kVerifyHashBits;
  if (expect<wire::VerifyHash>() != sent) fail(wire::AbortReason::protocol_error);
}

void SessionEndpoint::alice_reconcile() {
  CascadeResponder responder(key_);
  std::uint32_t passes = 1;
  while (true) {
    wire::Message msg = receive();
    if (const auto* s = std::get_if<wire::CascadeShuffle>(&msg)) {
      if (s->pass != passes + 1 || s->pass > config_.cascade.n_passes) fail(wire::AbortReason::protocol_error);
      const std::uint64_t seed = derive_seed(stream_seed(kShuffleStream), s->pass);
      responder.begin_pass(s->pass, seed);
      ++passes;
      send(wire::CascadeShuffle{s->pass, seed});
    } else if (const auto* req = std::get_if<wire::CascadeParityReq>(&msg)) {
      wire::CascadeParityResp resp;
      try {
        resp.parities = responder.answer(req->ranges);
      } catch (const std::out_of_range&) {
        fail(wire::AbortReason::protocol_error);
      }
      ledger_.parity_bits_disclosed += resp.parities.size();
      send(resp);
    } else if (const auto* v = std::get_if<wire::VerifyHash>(&msg)) {
      ledger_.verify_bits_disclosed += kVerifyHashBits;
      if (verify_hash(key_, v->salt) != v->hash) fail(wire::AbortReason::reconciliation_failed);
      send(*v);
      return;
    } else {
      fail(wire::AbortReason::protocol_error);
    }
  }
}

std::vector<std::uint8_t> SessionEndpoint::report_digest() const {
  Fnv h;
  for (std::uint64_t v : {outcome_.report.reconciled_bits, outcome_.report.final_bits, ledger_.parity_bits_disclosed,
                          ledger_.sample_bits_disclosed, ledger_.verify_bits_disclosed, sifted_bits_}) {
    h.u64(v);
  }
  std::vector<std::uint8_t> out(8);
  for (int i = 0; i < 8; ++i) out[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(h.value() >> (56 - 8 * i));
  return out;
}

void SessionEndpoint::amplify() {
  const std::size_t n = key_.size();
  outcome_.report.reconciled_bits = n;
  if (role_ == Role::bob) {
    const double e = n ? static_cast<double>(corrections_) / static_cast<double>(n) : 0.0;
    if (e >= kQberThreshold) fail(wire::AbortReason::qber_threshold);
    std::uint64_t leak = ledger_.reconciliation_total();
    if (config_.unconditional) {
      const double click_rate = static_cast<double>(detections_.size()) / static_cast<double>(config_.n_cycles);
      leak += static_cast<std::uint64_t>(
          std::ceil(multiphoton_fraction(p_multiphoton(config_.link.mu), click_rate) * static_cast<double>(n)));
    }
    const std::size_t m = n ? final_length(n, e, leak, config_.safety_bits) : 0;
    if (m == 0) fail(wire::AbortReason::no_secure_bits);
    wire::PaSeed seed{static_cast<std::uint32_t>(m), ToeplitzSeed::random(n, m, stream_seed(kToeplitzStream)).bits};
    send(seed);
    outcome_.key.bits = toeplitz_hash(key_, ToeplitzSeed{std::move(seed.seed)}, m);
    outcome_.report.final_bits = m;
    const auto theirs = expect<wire::Done>();
    if (theirs.digest != report_digest()) fail(wire::AbortReason::digest_mismatch);
    send(wire::Done{report_digest()});
  } else {
    auto seed = expect<wire::PaSeed>();
    if (seed.m == 0 || seed.seed.size() != n + seed.m - 1) fail(wire::AbortReason::protocol_error);
    outcome_.key.bits = toeplitz_hash(key_, ToeplitzSeed{std::move(seed.seed)}, seed.m);
    outcome_.report.final_bits = seed.m;
    send(wire::Done{report_digest()});
    if (expect<wire::Done>().digest != report_digest()) fail(wire::AbortReason::digest_mismatch, false);
  }
}

SessionOutcome run_session(Role role, const SessionConfig& config, FramedChannel& channel) {
  SessionEndpoint ep(role, config, channel);
  ep.start();
  return ep.finish();
}

LeakLedger reconstruct_ledger(const std::vector<std::vector<std::uint8_t>>& frames) {
  LeakLedger ledger;
  std::unordered_set<std::uint64_t> salts;
  for (const auto& f : frames) {
    const auto d = wire::decode_frame(f);
    if (!d.ok()) continue;
    const auto& m = d.message();
    if (const auto* s = std::get_if<wire::SampleBits>(&m)) ledger.sample_bits_disclosed += s->bits.size();
    if (const auto* p = std::get_if<wire::CascadeParityResp>(&m)) ledger.parity_bits_disclosed += p->parities.size();
    if (const auto* v = std::get_if<wire::VerifyHash>(&m)) {
      if (salts.insert(v->salt).second) ledger.verify_bits_disclosed += kVerifyHashBits;
    }
  }
  return ledger;
}

}  // namespace qkd
