#include "qkd/security.hpp"

#include <cmath>
#include <cstdio>

namespace qkd {

double p_multiphoton(double mu) {
  if (mu < 0.0) throw std::invalid_argument("p_multiphoton: mu must be >= 0");
  // -expm1(-mu) - mu e^-mu keeps precision for small mu.
  return -std::expm1(-mu) - mu * std::exp(-mu);
}

double pns_range_limit(const LinkParams& params) {
  if (params.mu <= 0.0) throw std::invalid_argument("pns_range_limit: mu must be > 0");
  const double p_multi = p_multiphoton(params.mu);
  if (params.mu < p_multi) return 0.0;
  if (params.alpha_db_per_km == 0.0) return INFINITY;
  return 10.0 * std::log10(params.mu / p_multi) / params.alpha_db_per_km;
}

std::optional<double> solve_max_range(const LinkParams& params, double target_qber) {
  auto qber_at = [&](double length) {
    LinkParams p = params;
    p.length_km = length;
    return qber_model_extended(p);
  };
  if (qber_at(0.0) >= target_qber) throw InsecureAtZero();

  double lo = 0.0, hi = 500.0;
  if (qber_at(hi) < target_qber) {
    // The QBER tends to 0.5 with length unless there are no erroneous counts.
    if (params.p_err_cycle == 0.0) return std::nullopt;
    while (qber_at(hi) < target_qber) {
      if (hi > 1e7) return std::nullopt;
      lo = hi;
      hi *= 2.0;
    }
  }
  while (hi - lo > 0.1 || std::abs(qber_at(0.5 * (lo + hi)) - target_qber) > 1e-6) {
    if (hi - lo < 1e-9) break;
    const double mid = 0.5 * (lo + hi);
    (qber_at(mid) < target_qber ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

SecurityVerdict verdict(double e_measured, const LinkParams& params) {
  SecurityVerdict v;
  v.qber_ok = e_measured < kQberThreshold;
  v.pns_limit_km = params.mu > 0.0 ? pns_range_limit(params) : INFINITY;
  v.pns_ok = params.length_km <= v.pns_limit_km;
  try {
    v.max_range_km = solve_max_range(params);
  } catch (const InsecureAtZero&) {
    v.max_range_km = 0.0;
    v.notes = "insecure_at_zero; ";
  }
  v.notes += pns_discrepancy_note(v.pns_limit_km);
  return v;
}

std::string pns_discrepancy_note(double computed_limit_km) {
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "PNS limit %.1f km from mu*T(L) >= p_multi(mu); the ~50 km figure quoted for this system "
                "is not reproduced, its parameter convention is unstated",
                computed_limit_km);
  return buf;
}

}  // namespace qkd
