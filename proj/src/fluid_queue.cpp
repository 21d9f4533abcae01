#include "evplan/fluid_queue.hpp"

#include <cmath>
#include <stdexcept>

namespace evplan {

void NetFlowPoly::validate() const {
  if (!(std::isfinite(rho) && std::isfinite(t0) && std::isfinite(t2))) {
    throw std::invalid_argument("NetFlowPoly: non-finite field");
  }
  if (rho == 0.0) throw std::invalid_argument("NetFlowPoly: rho must be != 0");
  if (!(t2 > t0)) throw std::invalid_argument("NetFlowPoly: t2 must be > t0");
}

double net_flow_rate(const NetFlowPoly& poly, double t) {
  return poly.rho * (t - poly.t0) * (t - poly.t2);
}

double queue_length(const NetFlowPoly& poly, double t) {
  if (t < poly.t0) return 0.0;
  const double u = t - poly.t0;
  const double span = poly.t2 - poly.t0;
  return poly.rho * (u * u * u / 3.0 - span * u * u / 2.0);
}

double congestion_end(const NetFlowPoly& poly) {
  poly.validate();
  return poly.t0 + 1.5 * (poly.t2 - poly.t0);
}

TotalDelay total_delay(const NetFlowPoly& poly) {
  poly.validate();
  const double t3 = congestion_end(poly);
  const double t1 = 0.5 * (poly.t0 + poly.t2);
  const double period = t3 - poly.t0;
  const double abs_rho = std::abs(poly.rho);
  const double pi1 = net_flow_rate(poly, t1);

  TotalDelay out;
  out.quartic_form = abs_rho / 36.0 * period * period * period * period;
  out.peak_rate_form = 9.0 * pi1 * pi1 / (4.0 * abs_rho);

  // Composite Simpson over [t0, t3]; |Q| keeps one sign on the episode, so
  // the integrand is smooth there.
  const int panels = 10000;
  const double h = period / panels;
  double acc = std::abs(queue_length(poly, poly.t0)) +
               std::abs(queue_length(poly, t3));
  for (int i = 1; i < panels; ++i) {
    const double w = (i % 2 == 1) ? 4.0 : 2.0;
    acc += w * std::abs(queue_length(poly, poly.t0 + i * h));
  }
  out.quadrature = acc * h / 3.0;
  return out;
}

QueueDiagnostics queue_diagnostics(const NetFlowPoly& poly) {
  poly.validate();
  QueueDiagnostics d;
  d.t1 = 0.5 * (poly.t0 + poly.t2);
  d.t3 = congestion_end(poly);
  d.period_P = d.t3 - poly.t0;
  d.peak_queue = std::abs(queue_length(poly, poly.t2));
  d.total_delay_W = total_delay(poly).value();
  return d;
}

}  // namespace evplan
