#include "qkd/link_model.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace qkd {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(std::string("LinkParams: ") + what);
}

}  // namespace

void LinkParams::validate() const {
  require(mu >= 0.0, "mu must be >= 0");
  require(eta_bob >= 0.0 && eta_bob <= 1.0, "eta_bob must lie in [0, 1]");
  require(p_dark_cycle >= 0.0, "p_dark_cycle must be >= 0");
  require(p_dark_cycle <= p_err_cycle, "p_dark_cycle must not exceed p_err_cycle");
  require(p_err_cycle < 1.0, "p_err_cycle must be < 1");
  require(e_mod >= 0.0 && e_mod < 0.5, "e_mod must lie in [0, 0.5)");
  require(length_km >= 0.0, "length_km must be >= 0");
  require(alpha_db_per_km >= 0.0, "alpha_db_per_km must be >= 0");
  require(clock_hz > 0.0, "clock_hz must be > 0");
  require(gate_ns > 0.0, "gate_ns must be > 0");
}

LinkParams LinkParams::specified() {
  LinkParams p;
  p.alpha_db_per_km = 0.2;
  return p;
}

LinkParams LinkParams::improved() {
  LinkParams p;
  p.alpha_db_per_km = 0.2;
  p.p_err_cycle = p.p_dark_cycle;
  p.e_mod = 0.0;
  return p;
}

double transmittance(double alpha_db_per_km, double length_km) {
  return std::pow(10.0, -alpha_db_per_km * length_km / 10.0);
}

double signal_rate_per_cycle(const LinkParams& p) {
  return p.mu * transmittance(p.alpha_db_per_km, p.length_km) * p.eta_bob;
}

double visibility_model(const LinkParams& p) {
  const double r = signal_rate_per_cycle(p);
  const double denom = r + 2.0 * p.p_err_cycle;
  if (denom == 0.0) return 0.0;
  return r / denom;
}

double qber_model(const LinkParams& p) {
  const double r = signal_rate_per_cycle(p);
  const double denom = 0.5 * r + p.p_err_cycle;
  if (denom == 0.0) return 0.5;
  return 0.5 * p.p_err_cycle / denom;
}

double qber_model_extended(const LinkParams& p) {
  const double r = signal_rate_per_cycle(p);
  const double denom = 0.5 * r + p.p_err_cycle;
  if (denom == 0.0) return 0.5;
  return (p.e_mod * 0.5 * r + 0.5 * p.p_err_cycle) / denom;
}

double sifted_rate_model(const LinkParams& p) {
  return p.clock_hz * (0.5 * signal_rate_per_cycle(p) + p.p_err_cycle);
}

double visibility_to_qber(double v) {
  if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("visibility must lie in [0, 1]");
  return (1.0 - v) / 2.0;
}

double nep(double detector_efficiency, double dark_rate_per_s, double wavelength_m) {
  constexpr double kPlanck = 6.62607015e-34;
  constexpr double kLightSpeed = 299792458.0;
  const double photon_energy = kPlanck * kLightSpeed / wavelength_m;
  return photon_energy / detector_efficiency * std::sqrt(2.0 * dark_rate_per_s);
}

}  // namespace qkd
