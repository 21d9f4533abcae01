#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "evplan/supply.hpp"
#include "oracles.hpp"

using namespace evplan;

namespace {
// Share-unit model on a 2012 clock: demand onset 2012, peak queue 2030.
const SupplyModel kModel{BassParams{0.005, 0.5, 1.0, 2012.0},
                         NetFlowPoly{-2.34297e-4, 0.0, 18.0, {}}};

SupplyModel random_model(std::mt19937& rng) {
  std::uniform_real_distribution<double> p(0.002, 0.05);
  std::uniform_real_distribution<double> q(0.2, 0.8);
  std::uniform_real_distribution<double> rho(1e-5, 5e-3);
  std::uniform_real_distribution<double> span(5.0, 25.0);
  std::bernoulli_distribution negative(0.5);
  SupplyModel m;
  m.bass = BassParams{p(rng), q(rng), 1.0, 0.0};
  m.poly = NetFlowPoly{negative(rng) ? -rho(rng) : rho(rng), 0.0, span(rng), {}};
  return m;
}
}  // namespace

TEST_CASE("supply rate composes demand rate and net inconvenience") {
  // rho = 0: perfect tracking everywhere
  SupplyModel tracking = kModel;
  tracking.poly.rho = 0.0;
  for (double t = -5.0; t <= 60.0; t += 0.5) {
    CHECK(supply_rate(tracking, t) == adoption_rate(tracking.bass, t));
  }
  // poly roots: supply equals demand rate
  CHECK(supply_rate(kModel, 0.0) == doctest::Approx(adoption_rate(kModel.bass, 0.0)));
  CHECK(supply_rate(kModel, 18.0) == doctest::Approx(adoption_rate(kModel.bass, 18.0)));
  // interior point: both components checked independently
  const double lambda9 = adoption_rate(kModel.bass, 9.0);
  const double pi9 = net_flow_rate(kModel.poly, 9.0);
  CHECK(supply_rate(kModel, 9.0) == doctest::Approx(lambda9 - pi9).epsilon(1e-12));
}

TEST_CASE("pointwise identity over the episode") {
  std::mt19937 rng(37);
  for (int i = 0; i < 20; ++i) {
    SupplyModel m = random_model(rng);
    const double t3 = m.episode_end();
    for (int k = 0; k <= 50; ++k) {
      // stay inside the window; mu has a jump at the episode boundary itself
      const double t = m.poly.t0 + (t3 - m.poly.t0) * (0.001 + 0.998 * k / 50.0);
      CHECK(supply_rate(m, t) ==
            doctest::Approx(adoption_rate(m.bass, t) - net_flow_rate(m.poly, t))
                .epsilon(1e-12));
    }
  }
}

TEST_CASE("cumulative supply closes the gap at the episode ends") {
  const double t3 = kModel.episode_end();
  CHECK(cumulative_supply(kModel, 0.0) ==
        doctest::Approx(cumulative_adoption(kModel.bass, 0.0)));
  CHECK(cumulative_supply(kModel, t3) ==
        doctest::Approx(cumulative_adoption(kModel.bass, t3)).epsilon(1e-12));
  CHECK(cumulative_supply(kModel, -3.0) ==
        doctest::Approx(cumulative_adoption(kModel.bass, -3.0)));
  // strictly below cumulative demand inside the episode (rho < 0)
  for (double t = 1.0; t < t3; t += 1.0) {
    CHECK(cumulative_supply(kModel, t) < cumulative_adoption(kModel.bass, t));
  }
  // t3 root confirmed by an independent bisection on the gap
  const double root = oracle::bisect_root(
      [&](double t) { return queue_length(kModel.poly, t); }, 18.0, 30.0);
  CHECK(t3 == doctest::Approx(root).epsilon(1e-9));
}

TEST_CASE("derivative of cumulative supply is the supply rate") {
  // away from the window kinks at t0 and t3
  const double t3 = kModel.episode_end();
  for (double t = 0.5; t < t3 - 0.5; t += 0.5) {
    const double fd = oracle::derivative(
        [&](double u) { return cumulative_supply(kModel, u); }, t);
    CHECK(fd == doctest::Approx(supply_rate(kModel, t)).epsilon(1e-5));
  }
}

TEST_CASE("utilization classification keys off the gap sign") {
  const std::pair<double, double> horizon{2012.0, 2052.0};
  CHECK(classify_utilization(kModel, horizon, 1e-9).kind ==
        UtilizationKind::Overutilization);

  SupplyModel mirrored = kModel;
  mirrored.poly.rho = +2.34297e-4;
  CHECK(classify_utilization(mirrored, horizon, 1e-9).kind ==
        UtilizationKind::Underutilization);

  SupplyModel tracking = kModel;
  tracking.poly.rho = 0.0;
  const UtilizationScenario balanced = classify_utilization(tracking, horizon, 1e-9);
  CHECK(balanced.kind == UtilizationKind::Balanced);
  CHECK(balanced.peak_gap == 0.0);
}

TEST_CASE("classification depends only on the sign of rho") {
  std::mt19937 rng(41);
  for (int i = 0; i < 30; ++i) {
    SupplyModel m = random_model(rng);
    const auto scenario =
        classify_utilization(m, {m.poly.t0 - 3.0, m.episode_end() + 8.0}, 1e-12);
    if (m.poly.rho < 0.0) {
      CHECK(scenario.kind == UtilizationKind::Overutilization);
    } else {
      CHECK(scenario.kind == UtilizationKind::Underutilization);
    }
    // exact peak gap |rho| (t2-t0)^3/6 via the t2 sample
    const double span = m.poly.t2 - m.poly.t0;
    CHECK(scenario.peak_gap ==
          doctest::Approx(std::abs(m.poly.rho) * span * span * span / 6.0)
              .epsilon(1e-12));
  }
}

TEST_CASE("peak gap grows with |rho|") {
  SupplyModel small = kModel, large = kModel;
  small.poly.rho = -1e-4;
  large.poly.rho = -2e-4;
  const auto horizon = std::pair{2012.0, 2052.0};
  CHECK(classify_utilization(large, horizon, 1e-12).peak_gap >
        classify_utilization(small, horizon, 1e-12).peak_gap);
  CHECK(classify_utilization(large, horizon, 1e-12).peak_gap ==
        doctest::Approx(2.0 * classify_utilization(small, horizon, 1e-12).peak_gap)
            .epsilon(1e-12));
}

TEST_CASE("curve emission: grid arithmetic and the A - D identity") {
  const auto curves = emit_curves(kModel, 2012.0, 2052.0, 0.1);
  CHECK(curves.size() == 401);
  for (const auto& s : curves) {
    CHECK(s.Q == doctest::Approx(s.A - s.D).epsilon(1e-9));
  }
  CHECK(curves.front().t == 2012.0);
  CHECK(curves.front().A == 0.0);
  // gap is closed from t3 = 2039 onward
  for (const auto& s : curves) {
    if (s.t >= 2039.0) CHECK(std::abs(s.Q) < 1e-12);
  }
  // cumulative fields nondecreasing while their rates stay nonnegative
  for (size_t i = 1; i < curves.size(); ++i) {
    CHECK(curves[i].A >= curves[i - 1].A - 1e-12);
    if (curves[i].mu >= 0.0 && curves[i - 1].mu >= 0.0) {
      CHECK(curves[i].D >= curves[i - 1].D - 1e-9);
    }
  }
}

TEST_CASE("sensitivity sweeps follow the closed-form responses") {
  // peak time falls as p grows
  const auto p_sweep = sensitivity_sweep(kModel, SweepParam::P,
                                         {0.003, 0.005, 0.007}, 2012.0, 2052.0, 0.5);
  REQUIRE(p_sweep.size() == 3);
  double prev_peak = 1e300;
  for (const auto& entry : p_sweep) {
    REQUIRE(entry.error.empty());
    BassParams b = kModel.bass;
    b.p = entry.value;
    const double peak = peak_time(b);
    CHECK(peak < prev_peak);
    prev_peak = peak;
  }

  // peak adoption rate m (p+q)^2 / (4q) rises with q
  const auto q_sweep = sensitivity_sweep(kModel, SweepParam::Q, {0.3, 0.5, 0.7},
                                         2012.0, 2052.0, 0.5);
  double prev_height = 0.0;
  for (const auto& entry : q_sweep) {
    REQUIRE(entry.error.empty());
    const double s = kModel.bass.p + entry.value;
    const double height = kModel.bass.m * s * s / (4.0 * entry.value);
    CHECK(height > prev_height);
    prev_height = height;
    // the emitted curve actually attains it
    double max_lambda = 0.0;
    for (const auto& sample : entry.curves) max_lambda = std::max(max_lambda, sample.lambda);
    CHECK(max_lambda == doctest::Approx(height).epsilon(1e-3));
  }

  // |rho| sweep: peak gap grows linearly
  const auto rho_sweep = sensitivity_sweep(kModel, SweepParam::Rho,
                                           {-1e-4, -2e-4}, 2012.0, 2052.0, 0.5);
  double prev_gap = -1.0;
  for (const auto& entry : rho_sweep) {
    REQUIRE(entry.error.empty());
    double max_gap = 0.0;
    for (const auto& sample : entry.curves) max_gap = std::max(max_gap, sample.Q);
    CHECK(max_gap > prev_gap);
    prev_gap = max_gap;
  }
}

TEST_CASE("sweep reports invalid values and keeps going") {
  const auto sweep = sensitivity_sweep(kModel, SweepParam::P, {-0.1, 0.005},
                                       2012.0, 2052.0, 1.0);
  REQUIRE(sweep.size() == 2);
  CHECK(!sweep[0].error.empty());
  CHECK(sweep[0].curves.empty());
  CHECK(sweep[1].error.empty());
  CHECK(!sweep[1].curves.empty());
  CHECK(sweep[0].value == -0.1);  // input order preserved
}

TEST_CASE("station budget conversion") {
  // share 0.237 -> 23 of 100
  SupplyModel m = kModel;
  // find the year where the supply share crosses 0.237 and floor-convert there
  double year = 2012.0;
  while (cumulative_supply(m, year - 2012.0) < 0.237) year += 0.01;
  const StationBudget b = station_budget(m, year, 100.0);
  CHECK(b.count == 23);

  CHECK(station_budget(m, 2012.0, 100.0).count == 0);  // F(0) = 0, Q(t0) = 0

  const StationBudget early = station_budget(m, 2000.0, 100.0);
  CHECK(early.count == 0);
  CHECK(!early.warnings.empty());

  // nondecreasing wherever the supply rate is nonnegative (grid scan)
  long long prev = 0;
  for (double y = 2012.0; y <= 2052.0; y += 0.25) {
    if (supply_rate(m, y - 2012.0) < 0.0) continue;
    const long long count = station_budget(m, y, 400.0).count;
    CHECK(count >= prev);
    prev = count;
  }
  // never exceeds the market size
  for (double y = 2012.0; y <= 2100.0; y += 1.0) {
    CHECK(station_budget(m, y, 400.0).count <= 400);
  }
}

TEST_CASE("budget rounding modes") {
  SupplyModel m = kModel;
  double year = 2012.0;
  while (cumulative_supply(m, year - 2012.0) < 0.237) year += 0.01;
  CHECK(station_budget(m, year, 100.0, BudgetRounding::Floor).count == 23);
  CHECK(station_budget(m, year, 100.0, BudgetRounding::Nearest).count == 24);
}

TEST_CASE("supply diagnostics attach total demand over the episode") {
  const QueueDiagnostics d = supply_diagnostics(kModel);
  REQUIRE(d.total_demand_D.has_value());
  const double expected = cumulative_adoption(kModel.bass, d.t3) -
                          cumulative_adoption(kModel.bass, 0.0);
  CHECK(*d.total_demand_D == doctest::Approx(expected).epsilon(1e-12));
  CHECK(d.t3 == doctest::Approx(27.0));
}
