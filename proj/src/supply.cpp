#include "evplan/supply.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "evplan/text.hpp"

namespace evplan {

void SupplyModel::validate() const {
  bass.validate();
  if (!perfect_tracking()) poly.validate();
}

double SupplyModel::episode_end() const {
  if (perfect_tracking()) return poly.t0;
  return congestion_end(poly);
}

double net_inconvenience_rate(const SupplyModel& model, double t) {
  if (model.perfect_tracking()) return 0.0;
  if (t < model.poly.t0 || t > model.episode_end()) return 0.0;
  return net_flow_rate(model.poly, t);
}

double supply_rate(const SupplyModel& model, double t) {
  return adoption_rate(model.bass, t) - net_inconvenience_rate(model, t);
}

double supply_gap(const SupplyModel& model, double t) {
  if (model.perfect_tracking()) return 0.0;
  if (t < model.poly.t0 || t > model.episode_end()) return 0.0;
  return queue_length(model.poly, t);
}

double cumulative_supply(const SupplyModel& model, double t) {
  return cumulative_adoption(model.bass, t) - supply_gap(model, t);
}

const char* to_string(UtilizationKind kind) {
  switch (kind) {
    case UtilizationKind::Overutilization: return "overutilization";
    case UtilizationKind::Underutilization: return "underutilization";
    case UtilizationKind::Balanced: return "balanced";
  }
  return "balanced";
}

UtilizationScenario classify_utilization(const SupplyModel& model,
                                         std::pair<double, double> horizon,
                                         double tol) {
  if (!(horizon.first < horizon.second)) {
    throw std::invalid_argument("classify_utilization: empty horizon");
  }
  model.validate();
  UtilizationScenario scenario;
  if (model.perfect_tracking()) return scenario;

  const double origin = model.bass.t_origin;
  const double lo = std::max(horizon.first - origin, model.poly.t0);
  const double hi = std::min(horizon.second - origin, model.episode_end());
  if (!(lo < hi)) return scenario;  // horizon misses the episode

  const int n = 2000;
  const double h = (hi - lo) / n;
  double max_gap = 0.0, min_gap = 0.0;
  double first_exceed = 0.0, last_exceed = 0.0;
  bool any_exceed = false;
  auto inspect = [&](double t) {
    const double g = supply_gap(model, t);
    max_gap = std::max(max_gap, g);
    min_gap = std::min(min_gap, g);
    if (std::abs(g) > tol) {
      if (!any_exceed) first_exceed = t;
      last_exceed = t;
      any_exceed = true;
    }
  };
  for (int i = 0; i <= n; ++i) inspect(lo + i * h);
  // The gap extremum sits exactly at t2; include it so peak_gap is exact.
  if (model.poly.t2 > lo && model.poly.t2 < hi) inspect(model.poly.t2);

  scenario.peak_gap = std::max(max_gap, -min_gap);
  if (max_gap > tol) {
    scenario.kind = UtilizationKind::Overutilization;
  } else if (min_gap < -tol) {
    scenario.kind = UtilizationKind::Underutilization;
  } else {
    scenario.kind = UtilizationKind::Balanced;
  }
  if (any_exceed && scenario.kind != UtilizationKind::Balanced) {
    scenario.gap_window = {first_exceed + origin, last_exceed + origin};
  }
  return scenario;
}

std::vector<CurveSample> emit_curves(const SupplyModel& model, double t_a,
                                     double t_b, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("emit_curves: dt must be > 0");
  model.validate();
  const double origin = model.bass.t_origin;
  const long long steps =
      static_cast<long long>(std::floor((t_b - t_a) / dt + 1e-9));
  std::vector<CurveSample> out;
  out.reserve(static_cast<size_t>(std::max<long long>(steps + 1, 0)));
  for (long long k = 0; k <= steps; ++k) {
    const double year = t_a + k * dt;
    const double t = year - origin;
    CurveSample s;
    s.t = year;
    s.lambda = adoption_rate(model.bass, t);
    s.mu = supply_rate(model, t);
    s.A = cumulative_adoption(model.bass, t);
    s.Q = supply_gap(model, t);
    s.D = s.A - s.Q;
    out.push_back(s);
  }
  return out;
}

std::vector<SweepEntry> sensitivity_sweep(const SupplyModel& model,
                                          SweepParam param,
                                          const std::vector<double>& values,
                                          double t_a, double t_b, double dt) {
  if (values.empty()) {
    throw std::invalid_argument("sensitivity_sweep: empty value list");
  }
  std::vector<SweepEntry> out;
  out.reserve(values.size());
  for (double v : values) {
    SweepEntry entry;
    entry.param = param;
    entry.value = v;
    SupplyModel variant = model;
    switch (param) {
      case SweepParam::P: variant.bass.p = v; break;
      case SweepParam::Q: variant.bass.q = v; break;
      case SweepParam::Rho: variant.poly.rho = v; break;
    }
    try {
      variant.validate();
      entry.curves = emit_curves(variant, t_a, t_b, dt);
    } catch (const std::exception& e) {
      entry.curves.clear();
      entry.error = e.what();
    }
    out.push_back(std::move(entry));
  }
  return out;
}

StationBudget station_budget(const SupplyModel& model, double calendar_year,
                             double station_market_size,
                             BudgetRounding rounding) {
  if (!(station_market_size > 0.0)) {
    throw std::invalid_argument(
        "station_budget: station_market_size must be > 0");
  }
  model.validate();
  StationBudget budget;
  if (calendar_year < model.bass.t_origin) {
    budget.warnings.push_back(
        "budget year " + format_double(calendar_year) +
        " precedes the adoption origin " + format_double(model.bass.t_origin) +
        "; budget is 0");
    return budget;
  }
  const double t = calendar_year - model.bass.t_origin;
  double share = cumulative_supply(model, t) / model.bass.m;
  if (share < 0.0) {
    budget.warnings.push_back(
        "negative cumulative supply share clamped to 0 at year " +
        format_double(calendar_year));
    share = 0.0;
  }
  share = std::min(share, 1.0);
  const double raw = station_market_size * share;
  budget.count = rounding == BudgetRounding::Floor
                     ? static_cast<long long>(std::floor(raw))
                     : std::llround(raw);
  return budget;
}

QueueDiagnostics supply_diagnostics(const SupplyModel& model) {
  model.validate();
  if (model.perfect_tracking()) {
    throw std::invalid_argument(
        "supply_diagnostics: no inconvenience episode (rho = 0)");
  }
  QueueDiagnostics d = queue_diagnostics(model.poly);
  d.total_demand_D = cumulative_adoption(model.bass, d.t3) -
                     cumulative_adoption(model.bass, model.poly.t0);
  return d;
}

}  // namespace evplan
