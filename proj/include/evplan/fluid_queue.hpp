#pragma once

#include <optional>

namespace evplan {

/// Quadratic net-flow (polynomial arrival queue) primitive.
///
/// The net flow rate is rho (t - t0)(t - t2). Sign convention: rho < 0 means
/// demand leads supply during the buildup, giving a nonnegative queue
/// Q = A - D on [t0, t3].
struct NetFlowPoly {
  double rho = 0.0;  ///< curvature (1/year^2 in share units)
  double t0 = 0.0;   ///< congestion start (years)
  double t2 = 0.0;   ///< time of maximum queue (years)

  /// Reporting-only override for the congestion end time. Computations always
  /// use the root of the queue cubic; reports flag a mismatch.
  std::optional<double> t3_override;

  /// Throws std::invalid_argument unless t2 > t0 and rho != 0 and finite.
  void validate() const;
};

/// Net flow rate pi(t) = rho (t - t0)(t - t2).
double net_flow_rate(const NetFlowPoly& poly, double t);

/// Queue length Q(t) = integral of pi from t0 to t, in closed form
/// rho [u^3/3 - (t2-t0) u^2/2] with u = t - t0. Zero for t < t0 (no queue
/// before onset).
double queue_length(const NetFlowPoly& poly, double t);

/// End of the congestion episode: the root t3 > t2 of Q, which for the
/// quadratic net flow is exactly t0 + 1.5 (t2 - t0).
double congestion_end(const NetFlowPoly& poly);

/// Total delay W over the congestion episode, reported through both
/// closed forms of the area under |Q| plus a Simpson quadrature of |Q|.
struct TotalDelay {
  double quartic_form = 0.0;    ///< |rho|/36 (t3 - t0)^4
  double peak_rate_form = 0.0;  ///< 9 pi(t1)^2 / (4 |rho|)
  double quadrature = 0.0;      ///< composite-Simpson integral of |Q|

  double value() const { return quartic_form; }
};
TotalDelay total_delay(const NetFlowPoly& poly);

/// Derived episode quantities. total_demand_D stays unset for a bare
/// polynomial; the supply model fills it once a demand curve is attached.
struct QueueDiagnostics {
  double t1 = 0.0;            ///< midpoint (t0 + t2)/2, max net-flow magnitude
  double t3 = 0.0;            ///< congestion end
  double period_P = 0.0;      ///< t3 - t0
  double peak_queue = 0.0;    ///< |Q(t2)|
  double total_delay_W = 0.0;
  std::optional<double> total_demand_D;
};
QueueDiagnostics queue_diagnostics(const NetFlowPoly& poly);

}  // namespace evplan
