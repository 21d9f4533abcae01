#pragma once

#include <string>
#include <utility>
#include <vector>

#include "evplan/diffusion.hpp"
#include "evplan/fluid_queue.hpp"

namespace evplan {

/// Demand curve plus net-inconvenience polynomial, from which the supply
/// curve mu(t) = lambda(t) - pi(t) and cumulative supply D(t) = A(t) - Q(t)
/// are derived.
///
/// The polynomial approximates the demand-supply gap on the congestion
/// episode [t0, t3] only; outside that window pi and Q are taken as 0 and
/// supply tracks demand. poly times are on the bass clock (years since
/// bass.t_origin). rho = 0 is allowed here and means perfect tracking.
struct SupplyModel {
  BassParams bass;
  NetFlowPoly poly;

  void validate() const;
  bool perfect_tracking() const { return poly.rho == 0.0; }
  /// Episode end on the bass clock (derived root; override is report-only).
  double episode_end() const;
};

/// Windowed net inconvenience pi(t): the polynomial on [t0, t3], 0 outside.
/// t in years since origin.
double net_inconvenience_rate(const SupplyModel& model, double t);

/// Supply rate mu(t) = lambda(t) - pi(t). May be negative; reported as-is.
double supply_rate(const SupplyModel& model, double t);

/// Windowed queue/gap Q(t) = A(t) - D(t).
double supply_gap(const SupplyModel& model, double t);

/// Cumulative supply D(t) = A(t) - Q(t); equals A(t) outside the episode.
double cumulative_supply(const SupplyModel& model, double t);

enum class UtilizationKind { Overutilization, Underutilization, Balanced };

struct UtilizationScenario {
  UtilizationKind kind = UtilizationKind::Balanced;
  double peak_gap = 0.0;  ///< max |A - D| over the inspected window
  std::pair<double, double> gap_window{0.0, 0.0};  ///< calendar years with |gap| > tol
};

const char* to_string(UtilizationKind kind);

/// Classifies the demand-supply regime over a calendar-year horizon.
/// Overutilization when the gap A - D exceeds tol somewhere (demand leads
/// supply), Underutilization when it drops below -tol, Balanced otherwise.
/// The gap is inspected on horizon intersected with the congestion episode;
/// it is identically 0 elsewhere.
UtilizationScenario classify_utilization(const SupplyModel& model,
                                         std::pair<double, double> horizon,
                                         double tol);

/// One sample of the demand/supply system, labeled with its calendar year.
struct CurveSample {
  double t = 0.0;       ///< calendar year
  double lambda = 0.0;  ///< demand rate
  double mu = 0.0;      ///< supply rate
  double A = 0.0;       ///< cumulative demand
  double D = 0.0;       ///< cumulative supply
  double Q = 0.0;       ///< gap A - D
};

/// Samples the curves on calendar years t_a, t_a+dt, ..., up to t_b.
std::vector<CurveSample> emit_curves(const SupplyModel& model, double t_a,
                                     double t_b, double dt);

enum class SweepParam { P, Q, Rho };

struct SweepEntry {
  SweepParam param;
  double value = 0.0;
  std::vector<CurveSample> curves;  ///< empty when error is set
  std::string error;                ///< per-value failure, sweep continues
};

/// One curve series per value, all other parameters held fixed. Output order
/// follows input order.
std::vector<SweepEntry> sensitivity_sweep(const SupplyModel& model,
                                          SweepParam param,
                                          const std::vector<double>& values,
                                          double t_a, double t_b, double dt);

enum class BudgetRounding { Floor, Nearest };

struct StationBudget {
  long long count = 0;
  std::vector<std::string> warnings;
};

/// Converts the projected cumulative supply share at a calendar year into a
/// station count: floor(station_market_size * D(t)/m), clamped to
/// [0, station_market_size]. Years before the origin yield 0 with a warning.
StationBudget station_budget(const SupplyModel& model, double calendar_year,
                             double station_market_size,
                             BudgetRounding rounding = BudgetRounding::Floor);

/// Episode diagnostics with Table-style totals: total demand over the
/// congestion period attached from the demand curve.
QueueDiagnostics supply_diagnostics(const SupplyModel& model);

}  // namespace evplan
