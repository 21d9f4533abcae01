#pragma once

#include <utility>

namespace evplan {

/// Two-coefficient innovation-diffusion model of market adoption.
///
/// Time is measured in years since `t_origin`; only I/O layers convert to
/// calendar years. With m = 1 all outputs are market shares.
struct BassParams {
  double p = 0.0;         ///< innovation coefficient (1/year)
  double q = 0.0;         ///< imitation coefficient (1/year)
  double m = 1.0;         ///< market size; 1.0 for share units
  double t_origin = 0.0;  ///< calendar year at which the diffusion clock starts

  /// Throws std::invalid_argument unless p > 0, q > 0, m > 0 and all finite.
  void validate() const;
};

/// Cumulative adopters F(t) = m (1 - e^{-(p+q)t}) / (1 + (q/p) e^{-(p+q)t}).
/// Exactly 0 at t = 0; saturates at m. Throws std::domain_error for
/// non-finite t.
double cumulative_adoption(const BassParams& params, double t);

/// Adoption rate dF/dt. Evaluated in an exponent-safe form; returns the
/// limit value 0 once (p+q)|t| leaves the safe exponent range.
double adoption_rate(const BassParams& params, double t);

/// Time of the adoption-rate peak, ln(q/p)/(p+q). Requires q > p; throws
/// std::domain_error("no interior peak") otherwise.
double peak_time(const BassParams& params);

/// The two inflection times of the adoption rate, peak -/+ ln(2+sqrt(3))/(p+q).
/// Requires q > p.
std::pair<double, double> inflection_times(const BassParams& params);

}  // namespace evplan
