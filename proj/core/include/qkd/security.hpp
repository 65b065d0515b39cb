#pragma once

#include <optional>
#include <stdexcept>
#include <string>

#include "qkd/link_model.hpp"

namespace qkd {

inline constexpr double kQberThreshold = 0.11;

struct SecurityVerdict {
  bool qber_ok = false;
  bool pns_ok = false;
  // Empty when the extended QBER never reaches the threshold.
  std::optional<double> max_range_km;
  double pns_limit_km = 0.0;
  std::string notes;
};

/// Thrown when the threshold is already exceeded at zero length.
class InsecureAtZero : public std::runtime_error {
 public:
  InsecureAtZero() : std::runtime_error("insecure_at_zero") {}
};

/// Poissonian probability of two or more photons, 1 - (1 + mu) e^-mu.
double p_multiphoton(double mu);

/// Longest fiber for which the attenuated flux mu T(L) still exceeds the
/// multi-photon probability. Bob's apparatus efficiency appears on both
/// sides of the comparison and cancels. Returns 0 if violated at L = 0.
double pns_range_limit(const LinkParams& params);

/// Length where qber_model_extended reaches target, by bisection on
/// [0, 500] km to 0.1 km then refined until the QBER matches to 1e-6.
/// std::nullopt means the QBER stays below target at every length.
/// Throws InsecureAtZero when the QBER at L = 0 is not below target.
std::optional<double> solve_max_range(const LinkParams& params, double target_qber = kQberThreshold);

SecurityVerdict verdict(double e_measured, const LinkParams& params);

/// Text appended to analysis output about the gap between the computed PNS
/// limit and the roughly 50 km figure quoted for this system.
std::string pns_discrepancy_note(double computed_limit_km);

}  // namespace qkd
