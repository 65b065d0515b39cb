#include "qkd/event_sim.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace qkd {

namespace {

constexpr std::uint64_t kAliceStream = 1;
constexpr std::uint64_t kBobStream = 2;
constexpr std::uint64_t kPhysicsStream = 3;
constexpr std::uint64_t kDriftStream = 4;
constexpr std::uint64_t kAggregateStream = 5;

double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

constexpr double kDegToRad = std::numbers::pi / 180.0;

// Which physical processes fired in one gate.
struct GateEvents {
  bool signal = false;
  bool noise0 = false;
  bool noise1 = false;
};

struct Click {
  Outcome outcome = Outcome::none;
  Origin origin = Origin::none;
};

class Physics {
 public:
  Physics(const LinkParams& params, const AttackConfig& attack, const SimOptions& options)
      : rate_(signal_rate_per_cycle(params)),
        p_err_(params.p_err_cycle),
        e_mod_(params.e_mod),
        visibility_(options.interferometer_visibility),
        noise_(options.noise),
        attack_fraction_(attack.mode == AttackConfig::Mode::intercept_resend ? attack.fraction : 0.0) {}

  double rate() const { return rate_; }
  NoiseModel noise() const { return noise_; }

  double detection_probability() const {
    if (noise_ == NoiseModel::per_detector) return 1.0 - (1.0 - rate_) * (1.0 - p_err_) * (1.0 - p_err_);
    return 1.0 - (1.0 - rate_) * (1.0 - p_err_);
  }

  GateEvents draw_events(std::mt19937_64& rng) const {
    GateEvents ev;
    ev.signal = unit(rng) < rate_;
    if (noise_ == NoiseModel::per_detector) {
      ev.noise0 = unit(rng) < p_err_;
      ev.noise1 = unit(rng) < p_err_;
    } else if (unit(rng) < p_err_) {
      (rng() & 1U ? ev.noise1 : ev.noise0) = true;
    }
    return ev;
  }

  // Events conditioned on at least one process firing.
  GateEvents draw_events_given_detection(std::mt19937_64& rng) const {
    const double q = p_err_;
    double weights[8];
    for (int k = 0; k < 8; ++k) {
      const bool s = k & 1, n0 = k & 2, n1 = k & 4;
      if (noise_ == NoiseModel::per_detector) {
        weights[k] = (s ? rate_ : 1.0 - rate_) * (n0 ? q : 1.0 - q) * (n1 ? q : 1.0 - q);
      } else {
        const double noise_w = n0 && n1 ? 0.0 : (n0 || n1 ? q / 2 : 1.0 - q);
        weights[k] = (s ? rate_ : 1.0 - rate_) * noise_w;
      }
    }
    weights[0] = 0.0;
    double total = 0.0;
    for (double w : weights) total += w;
    double u = unit(rng) * total;
    int pick = 7;
    for (int k = 1; k < 8; ++k) {
      if (weights[k] == 0.0) continue;
      if (u < weights[k]) {
        pick = k;
        break;
      }
      u -= weights[k];
      pick = k;
    }
    return {static_cast<bool>(pick & 1), static_cast<bool>(pick & 2), static_cast<bool>(pick & 4)};
  }

  int signal_detector(PhotonState sent, Basis bob_basis, double drift_rad, std::mt19937_64& rng) const {
    const PhotonState state = apply_intercept_resend(sent, attack_fraction_, rng);
    const double delta = encode(state.bit, state.basis) - measurement_phase(bob_basis) + drift_rad;
    const auto [p0, p1] = click_probabilities(delta, visibility_);
    (void)p1;
    int det = unit(rng) < p0 ? 0 : 1;
    if (unit(rng) < e_mod_) det ^= 1;
    return det;
  }

  Click resolve(const GateEvents& ev, PhotonState sent, Basis bob_basis, double drift_rad,
                std::mt19937_64& rng) const {
    bool fired[2] = {ev.noise0, ev.noise1};
    int sig_det = -1;
    if (ev.signal) {
      sig_det = signal_detector(sent, bob_basis, drift_rad, rng);
      fired[sig_det] = true;
    }
    if (fired[0] && fired[1]) {
      return {rng() & 1U ? Outcome::bit1 : Outcome::bit0, Origin::double_click};
    }
    if (!fired[0] && !fired[1]) return {};
    const int det = fired[0] ? 0 : 1;
    return {det == 0 ? Outcome::bit0 : Outcome::bit1, det == sig_det ? Origin::signal : Origin::noise};
  }

  // Probability that a signal click lands on the detector matching Alice's
  // bit, for a cell with no drift.
  double signal_agreement(bool bases_match) const {
    if (!bases_match) return 0.5;
    const double pre = (1.0 + visibility_) / 2.0;
    const double c0 = pre * (1.0 - e_mod_) + (1.0 - pre) * e_mod_;
    return (1.0 - attack_fraction_ / 2.0) * c0 + attack_fraction_ / 4.0;
  }

  // Category probabilities for one cycle of a cell:
  // signal right, signal wrong, noise right, noise wrong, double right, double wrong.
  std::array<double, 6> categories(bool bases_match) const {
    const double c = signal_agreement(bases_match);
    const double r = rate_, q = p_err_;
    std::array<double, 6> p{};
    if (noise_ == NoiseModel::per_detector) {
      p[0] = r * c * (1.0 - q);
      p[1] = r * (1.0 - c) * (1.0 - q);
      p[2] = p[3] = (1.0 - r) * q * (1.0 - q);
      p[4] = p[5] = (r * q + (1.0 - r) * q * q) / 2.0;
    } else {
      p[0] = r * c * (1.0 - q / 2.0);
      p[1] = r * (1.0 - c) * (1.0 - q / 2.0);
      p[2] = p[3] = (1.0 - r) * q / 2.0;
      p[4] = p[5] = r * q / 4.0;
    }
    return p;
  }

 private:
  double rate_;
  double p_err_;
  double e_mod_;
  double visibility_;
  NoiseModel noise_;
  double attack_fraction_;
};

class DriftWalk {
 public:
  DriftWalk(const DriftState& drift, double clock_hz, std::uint64_t seed)
      : enabled_(drift.enabled),
        rate_(drift.drift_rate_deg_per_s),
        clock_hz_(clock_hz),
        offset_deg_(drift.phase_offset_deg),
        rng_(derive_seed(seed, kDriftStream)) {}

  double offset_rad(std::uint64_t cycle) {
    if (!enabled_) return offset_deg_ * kDegToRad;
    const auto second = static_cast<std::uint64_t>(static_cast<double>(cycle) / clock_hz_);
    while (second_ < second) {
      offset_deg_ += (2.0 * unit(rng_) - 1.0) * rate_;
      ++second_;
    }
    return offset_deg_ * kDegToRad;
  }

 private:
  bool enabled_;
  double rate_;
  double clock_hz_;
  double offset_deg_;
  std::uint64_t second_ = 0;
  std::mt19937_64 rng_;
};

void validate_run(const LinkParams& params, const AttackConfig& attack, const SimOptions& options) {
  params.validate();
  attack.validate();
  if (!(options.interferometer_visibility >= 0.0 && options.interferometer_visibility <= 1.0)) {
    throw std::invalid_argument("interferometer_visibility must lie in [0, 1]");
  }
}

std::uint64_t binomial(std::mt19937_64& rng, std::uint64_t n, double p) {
  if (n == 0 || p <= 0.0) return 0;
  if (p >= 1.0) return n;
  return std::binomial_distribution<std::uint64_t>(n, p)(rng);
}

}  // namespace

void AttackConfig::validate() const {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw std::invalid_argument("attack fraction must lie in [0, 1]");
  if (mode == Mode::none && fraction != 0.0) throw std::invalid_argument("attack fraction must be 0 when mode is none");
}

AttackConfig AttackConfig::parse(const std::string& text) {
  if (text == "none") return none();
  const std::string prefix = "intercept:";
  if (text.rfind(prefix, 0) == 0) {
    std::size_t used = 0;
    const std::string number = text.substr(prefix.size());
    double f = 0.0;
    try {
      f = std::stod(number, &used);
    } catch (const std::exception&) {
      throw std::invalid_argument("bad attack fraction: " + text);
    }
    if (used != number.size()) throw std::invalid_argument("bad attack fraction: " + text);
    AttackConfig a = intercept_resend(f);
    a.validate();
    return a;
  }
  throw std::invalid_argument("attack must be none or intercept:<f>, got " + text);
}

std::string AttackConfig::to_string() const {
  if (mode == Mode::none) return "none";
  return "intercept:" + std::to_string(fraction);
}

std::uint64_t TallyCounts::total_cycles() const {
  std::uint64_t n = 0;
  for (const auto& c : cells) n += c.n_cycles;
  return n;
}

std::uint64_t TallyCounts::total_clicks() const {
  std::uint64_t n = 0;
  for (const auto& c : cells) n += c.clicks();
  return n;
}

std::uint64_t TallyCounts::total_double_clicks() const {
  std::uint64_t n = 0;
  for (const auto& c : cells) n += c.n_double_clicks;
  return n;
}

std::uint64_t TallyCounts::sifted_bits() const {
  std::uint64_t n = 0;
  for (auto basis : {Basis::Z, Basis::X}) {
    for (std::uint8_t bit = 0; bit < 2; ++bit) n += at(basis, bit, basis).clicks();
  }
  return n;
}

std::uint64_t TallyCounts::sifted_errors() const {
  std::uint64_t n = 0;
  for (auto basis : {Basis::Z, Basis::X}) {
    for (std::uint8_t bit = 0; bit < 2; ++bit) n += at(basis, bit, basis).errors();
  }
  return n;
}

TallyCounts tally(const CycleBatch& batch) {
  TallyCounts t;
  for (std::uint64_t i = 0; i < batch.count; ++i) {
    const Basis a = batch.alice_bases[i] ? Basis::X : Basis::Z;
    const Basis b = batch.bob_bases[i] ? Basis::X : Basis::Z;
    auto& cell = t.at(a, batch.alice_bits[i], b);
    ++cell.n_cycles;
    if (batch.outcomes[i] == Outcome::none) continue;
    const bool wrong = (batch.outcomes[i] == Outcome::bit1) != (batch.alice_bits[i] == 1);
    switch (batch.origins[i]) {
      case Origin::signal:
        ++cell.n_signal_clicks;
        cell.n_signal_errors += wrong;
        break;
      case Origin::noise:
        ++cell.n_noise_clicks;
        cell.n_noise_errors += wrong;
        break;
      case Origin::double_click:
        ++cell.n_double_clicks;
        cell.n_double_errors += wrong;
        break;
      case Origin::none:
        break;
    }
  }
  return t;
}

std::pair<double, double> click_probabilities(double delta_phi_rad, double visibility) {
  const double c = visibility * std::cos(delta_phi_rad);
  return {(1.0 + c) / 2.0, (1.0 - c) / 2.0};
}

ChoiceSource alice_choices(std::uint64_t seed) { return {seed, kAliceStream}; }
ChoiceSource bob_choices(std::uint64_t seed) { return {seed, kBobStream}; }

PhotonState apply_intercept_resend(PhotonState sent, double f, std::mt19937_64& rng) {
  if (f <= 0.0 || unit(rng) >= f) return sent;
  const Basis eve_basis = rng() & 1U ? Basis::X : Basis::Z;
  const std::uint8_t eve_bit = eve_basis == sent.basis ? sent.bit : static_cast<std::uint8_t>(rng() & 1U);
  return {eve_bit, eve_basis};
}

CycleBatch simulate_exact(const LinkParams& params, std::uint64_t n_cycles, const DriftState& drift,
                          const AttackConfig& attack, std::uint64_t seed, const SimOptions& options) {
  validate_run(params, attack, options);
  const Physics physics(params, attack, options);
  const ChoiceSource alice = alice_choices(seed);
  const ChoiceSource bob = bob_choices(seed);
  std::mt19937_64 rng(derive_seed(seed, kPhysicsStream));
  DriftWalk walk(drift, params.clock_hz, seed);

  CycleBatch batch;
  batch.count = n_cycles;
  batch.alice_bits.resize(n_cycles);
  batch.alice_bases.resize(n_cycles);
  batch.bob_bases.resize(n_cycles);
  batch.outcomes.resize(n_cycles);
  batch.origins.resize(n_cycles);
  for (std::uint64_t c = 0; c < n_cycles; ++c) {
    const PhotonState sent{alice.bit(c), alice.basis(c)};
    const Basis bob_basis = bob.basis(c);
    batch.alice_bits[c] = sent.bit;
    batch.alice_bases[c] = static_cast<std::uint8_t>(sent.basis);
    batch.bob_bases[c] = static_cast<std::uint8_t>(bob_basis);
    const double drift_rad = walk.offset_rad(c);
    const Click click = physics.resolve(physics.draw_events(rng), sent, bob_basis, drift_rad, rng);
    batch.outcomes[c] = click.outcome;
    batch.origins[c] = click.origin;
  }
  return batch;
}

TallyCounts simulate_aggregated(const LinkParams& params, std::uint64_t n_cycles, const AttackConfig& attack,
                                std::uint64_t seed, const SimOptions& options) {
  validate_run(params, attack, options);
  const Physics physics(params, attack, options);
  std::mt19937_64 rng(derive_seed(seed, kAggregateStream));

  TallyCounts t;
  std::uint64_t remaining = n_cycles;
  for (std::size_t k = 0; k < t.cells.size(); ++k) {
    const std::size_t left = t.cells.size() - k;
    t.cells[k].n_cycles = left == 1 ? remaining : binomial(rng, remaining, 1.0 / static_cast<double>(left));
    remaining -= t.cells[k].n_cycles;
  }
  for (std::size_t k = 0; k < t.cells.size(); ++k) {
    auto& cell = t.cells[k];
    const bool match = ((k >> 2) & 1U) == (k & 1U);
    const auto p = physics.categories(match);
    std::array<std::uint64_t, 6> counts{};
    std::uint64_t left = cell.n_cycles;
    double mass = 1.0;
    for (std::size_t j = 0; j < p.size() && left > 0; ++j) {
      counts[j] = binomial(rng, left, mass > 0.0 ? p[j] / mass : 0.0);
      left -= counts[j];
      mass -= p[j];
    }
    cell.n_signal_clicks = counts[0] + counts[1];
    cell.n_signal_errors = counts[1];
    cell.n_noise_clicks = counts[2] + counts[3];
    cell.n_noise_errors = counts[3];
    cell.n_double_clicks = counts[4] + counts[5];
    cell.n_double_errors = counts[5];
  }
  return t;
}

std::vector<DetectionRecord> detect(const LinkParams& params, std::uint64_t n_cycles, SimMode mode,
                                    const DriftState& drift, const AttackConfig& attack, std::uint64_t seed,
                                    const SimOptions& options) {
  validate_run(params, attack, options);
  const Physics physics(params, attack, options);
  const ChoiceSource alice = alice_choices(seed);
  const ChoiceSource bob = bob_choices(seed);
  std::mt19937_64 rng(derive_seed(seed, kPhysicsStream));
  std::vector<DetectionRecord> out;

  auto record = [&](std::uint64_t c, const Click& click, Basis bob_basis) {
    if (click.outcome == Outcome::none) return;
    out.push_back({c, bob_basis, static_cast<std::uint8_t>(click.outcome == Outcome::bit1 ? 1 : 0)});
  };

  if (mode == SimMode::exact) {
    DriftWalk walk(drift, params.clock_hz, seed);
    for (std::uint64_t c = 0; c < n_cycles; ++c) {
      const Basis bob_basis = bob.basis(c);
      const double drift_rad = walk.offset_rad(c);
      const GateEvents ev = physics.draw_events(rng);
      if (!ev.signal && !ev.noise0 && !ev.noise1) continue;
      record(c, physics.resolve(ev, {alice.bit(c), alice.basis(c)}, bob_basis, drift_rad, rng), bob_basis);
    }
    return out;
  }

  const double p_det = physics.detection_probability();
  if (p_det <= 0.0) return out;
  out.reserve(static_cast<std::size_t>(static_cast<double>(n_cycles) * p_det * 1.1) + 16);
  std::geometric_distribution<std::uint64_t> gap(std::min(p_det, 1.0));
  std::uint64_t c = 0;
  while (true) {
    const std::uint64_t skip = p_det >= 1.0 ? 0 : gap(rng);
    if (skip >= n_cycles - c) break;
    c += skip;
    const Basis bob_basis = bob.basis(c);
    const GateEvents ev = physics.draw_events_given_detection(rng);
    record(c, physics.resolve(ev, {alice.bit(c), alice.basis(c)}, bob_basis, 0.0, rng), bob_basis);
    if (++c >= n_cycles) break;
  }
  return out;
}

}  // namespace qkd
