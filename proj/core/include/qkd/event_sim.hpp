#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "qkd/bits.hpp"
#include "qkd/encoding.hpp"
#include "qkd/link_model.hpp"

namespace qkd {

enum class Outcome : std::uint8_t { none = 0, bit0 = 1, bit1 = 2 };
enum class Origin : std::uint8_t { none = 0, signal = 1, noise = 2, double_click = 3 };

/// How erroneous counts are distributed over Bob's two detectors.
///
/// per_detector: each detector independently fires with P_e per gate. A
/// noise click then sifts with probability 1/2 as any other detection, so
/// noise contributes P_e to the sifted rate and 0.5 P_e to the error rate,
/// reproducing the closed-form QBER denominator R/2 + P_e.
/// single_process: one noise process with total probability P_e per cycle.
enum class NoiseModel : std::uint8_t { per_detector, single_process };

enum class SimMode : std::uint8_t { exact, aggregate };

struct DriftState {
  double phase_offset_deg = 0.0;
  double drift_rate_deg_per_s = 0.05;
  bool enabled = false;
};

struct AttackConfig {
  enum class Mode : std::uint8_t { none, intercept_resend };
  Mode mode = Mode::none;
  double fraction = 0.0;

  void validate() const;
  static AttackConfig none() { return {}; }
  static AttackConfig intercept_resend(double f) { return {Mode::intercept_resend, f}; }
  /// "none" or "intercept:<f>".
  static AttackConfig parse(const std::string& text);
  std::string to_string() const;
};

struct SimOptions {
  NoiseModel noise = NoiseModel::per_detector;
  // Classical visibility of the interferometer for signal photons.
  double interferometer_visibility = 1.0;
};

/// Dense per-cycle record of one exact run.
struct CycleBatch {
  std::uint64_t count = 0;
  Bits alice_bits;
  Bits alice_bases;
  Bits bob_bases;
  std::vector<Outcome> outcomes;
  std::vector<Origin> origins;
};

struct TallyCell {
  std::uint64_t n_cycles = 0;
  std::uint64_t n_signal_clicks = 0;
  std::uint64_t n_signal_errors = 0;
  std::uint64_t n_noise_clicks = 0;
  std::uint64_t n_noise_errors = 0;
  std::uint64_t n_double_clicks = 0;
  std::uint64_t n_double_errors = 0;

  std::uint64_t clicks() const { return n_signal_clicks + n_noise_clicks + n_double_clicks; }
  std::uint64_t errors() const { return n_signal_errors + n_noise_errors + n_double_errors; }
};

/// Aggregated outcomes per (alice_basis, alice_bit, bob_basis) cell.
/// Errors are measured against Alice's bit.
struct TallyCounts {
  std::array<TallyCell, 8> cells{};

  static constexpr std::size_t index(Basis alice_basis, std::uint8_t alice_bit, Basis bob_basis) {
    return (static_cast<std::size_t>(alice_basis) << 2) | (static_cast<std::size_t>(alice_bit & 1U) << 1) |
           static_cast<std::size_t>(bob_basis);
  }
  TallyCell& at(Basis a, std::uint8_t bit, Basis b) { return cells[index(a, bit, b)]; }
  const TallyCell& at(Basis a, std::uint8_t bit, Basis b) const { return cells[index(a, bit, b)]; }

  std::uint64_t total_cycles() const;
  std::uint64_t total_clicks() const;
  std::uint64_t total_double_clicks() const;
  std::uint64_t sifted_bits() const;
  std::uint64_t sifted_errors() const;
};

TallyCounts tally(const CycleBatch& batch);

/// Output-port probabilities of Bob's interferometer for relative phase
/// delay delta_phi: ((1 + V cos), (1 - V cos)) / 2.
std::pair<double, double> click_probabilities(double delta_phi_rad, double visibility);

/// Alice's and Bob's free random choices, recomputable per cycle from the
/// seed. Alice's encoder and Bob's basis selector use independent streams.
class ChoiceSource {
 public:
  ChoiceSource(std::uint64_t seed, std::uint64_t stream) : key_(derive_seed(seed, stream)) {}
  std::uint64_t word(std::uint64_t cycle) const { return mix64(key_ ^ (cycle * 0xd1342543de82ef95ULL)); }
  std::uint8_t bit(std::uint64_t cycle) const { return word(cycle) & 1U; }
  Basis basis(std::uint64_t cycle) const { return (word(cycle) >> 1) & 1U ? Basis::X : Basis::Z; }

 private:
  std::uint64_t key_;
};

ChoiceSource alice_choices(std::uint64_t seed);
ChoiceSource bob_choices(std::uint64_t seed);

/// Signal photon state after the optional intercept-resend adversary. With
/// probability f Eve measures in a random basis and resends her result.
struct PhotonState {
  std::uint8_t bit = 0;
  Basis basis = Basis::Z;
};
PhotonState apply_intercept_resend(PhotonState sent, double f, std::mt19937_64& rng);

/// Per-cycle sampling of every gate. Deterministic in (params, n_cycles,
/// drift, attack, seed, options).
CycleBatch simulate_exact(const LinkParams& params, std::uint64_t n_cycles, const DriftState& drift,
                          const AttackConfig& attack, std::uint64_t seed, const SimOptions& options = {});

/// Binomial draws of the per-cell category counts; drift is ignored.
TallyCounts simulate_aggregated(const LinkParams& params, std::uint64_t n_cycles, const AttackConfig& attack,
                                std::uint64_t seed, const SimOptions& options = {});

/// Bob's detection list for a run, the only quantum-layer output his
/// endpoint sees. Exact mode walks every cycle (honouring drift); aggregate
/// mode jumps between detected cycles with geometric gaps.
std::vector<DetectionRecord> detect(const LinkParams& params, std::uint64_t n_cycles, SimMode mode,
                                    const DriftState& drift, const AttackConfig& attack, std::uint64_t seed,
                                    const SimOptions& options = {});

}  // namespace qkd
