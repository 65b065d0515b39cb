#pragma once

#include <cstdint>

namespace qkd {

/// Physical constants of the fiber link and Bob's detectors.
///
/// Defaults are the as-built 122 km system: 0.1 photons per clock cycle,
/// 4.5% receiver efficiency (detector plus 5 dB apparatus loss), and an
/// erroneous-count probability of 8.5e-7 per gate, of which 3.2e-7 is
/// detector dark count and the rest clock-laser stray light.
struct LinkParams {
  double mu = 0.1;
  double alpha_db_per_km = 0.21;
  double length_km = 0.0;
  double eta_bob = 0.045;
  double p_err_cycle = 8.5e-7;
  double p_dark_cycle = 3.2e-7;
  double clock_hz = 2.0e6;
  double gate_ns = 3.5;
  double e_mod = 0.033;
  // Reference:signal intensity split of Alice's interferometer. Metadata
  // only; the closed-form model uses the total mu.
  double reference_signal_ratio = 1.6;

  /// Throws std::invalid_argument naming the first violated bound.
  void validate() const;

  /// Encoded-pulse photon number implied by the reference split.
  double signal_pulse_mu() const { return mu / (1.0 + reference_signal_ratio); }

  /// As-built system with the fiber attenuation left at its datasheet value.
  static LinkParams specified();
  /// Stray light removed and modulation errors eliminated.
  static LinkParams improved();
};

double transmittance(double alpha_db_per_km, double length_km);

/// Signal click probability per clock cycle, mu * T(L) * eta_bob.
double signal_rate_per_cycle(const LinkParams& p);

/// Interference fringe visibility R / (R + 2 P_e).
double visibility_model(const LinkParams& p);

/// Sifted-key error rate from erroneous counts alone.
double qber_model(const LinkParams& p);

/// Sifted-key error rate with phase-modulation errors on signal bits.
double qber_model_extended(const LinkParams& p);

/// Sifted bits per second, clock * (R/2 + P_e).
double sifted_rate_model(const LinkParams& p);

/// (1 - v) / 2. Throws std::invalid_argument outside [0, 1].
double visibility_to_qber(double v);

/// Noise equivalent power (h c / (lambda eta)) sqrt(2 D) in W/Hz^1/2.
double nep(double detector_efficiency, double dark_rate_per_s, double wavelength_m);

}  // namespace qkd
