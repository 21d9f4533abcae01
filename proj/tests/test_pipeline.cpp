#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "evplan/pipeline.hpp"

using namespace evplan;
namespace fs = std::filesystem;

namespace {

const std::string kFixtures = EVPLAN_FIXTURES;

RunConfig fig9_config(bool capacitated, const std::string& out_dir) {
  RunConfig c;
  c.paths_csv = kFixtures + "/fig9/path_nodes.csv";
  c.paths_meta_csv = kFixtures + "/fig9/path_meta.csv";
  c.range_km = 100.0;
  if (capacitated) {
    c.capacity = 60.0;
  } else {
    c.uncapacitated = true;
  }
  c.budget = 10;
  c.vot = 1.0;
  c.out_dir = out_dir;
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

MilpInstance fig9_instance() {
  RunConfig c = fig9_config(true, "unused");
  return build_instance(c, std::nullopt).instance;
}

}  // namespace

TEST_CASE("config files: comments, resolution, unknown keys") {
  const fs::path dir = fs::path("tmp_cfg");
  fs::create_directories(dir);
  {
    std::ofstream f(dir / "ok.conf");
    f << "# a comment\n\nrange_km = 150\nsolver = greedy\n";
  }
  RunConfig c = RunConfig::from_file((dir / "ok.conf").string());
  CHECK(c.range_km == 150.0);
  CHECK(c.solver == "greedy");

  {
    std::ofstream f(dir / "bad.conf");
    f << "not_a_real_key = 1\n";
  }
  CHECK_THROWS_AS(RunConfig::from_file((dir / "bad.conf").string()), PipelineError);

  {
    std::ofstream f(dir / "dup.conf");
    f << "range_km = 1\nrange_km = 2\n";
  }
  CHECK_THROWS_AS(RunConfig::from_file((dir / "dup.conf").string()), PipelineError);

  {
    std::ofstream f(dir / "rel.conf");
    f << "paths_csv = data/paths.csv\n";
  }
  RunConfig rel = RunConfig::from_file((dir / "rel.conf").string());
  CHECK(rel.paths_csv->find("tmp_cfg") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("observation csv schemas are enforced") {
  const fs::path dir = fs::path("tmp_obs");
  fs::create_directories(dir);
  {
    std::ofstream f(dir / "demand.csv");
    f << "year,cumulative_adopters\n2012,0\n2013,5\n";
  }
  ObservationSeries s =
      read_observation_series((dir / "demand.csv").string(), SeriesKind::Demand);
  CHECK(s.points.size() == 2);

  {
    std::ofstream f(dir / "wrong.csv");
    f << "year,value\n2012,0\n";
  }
  CHECK_THROWS_AS(
      read_observation_series((dir / "wrong.csv").string(), SeriesKind::Demand),
      PipelineError);
  fs::remove_all(dir);
}

TEST_CASE("validator replays the solved fig9 plan cleanly") {
  MilpInstance inst = fig9_instance();
  Solution sol = solve_bb(inst);
  REQUIRE(sol.status == SolveStatus::Optimal);
  CHECK(validate_plan(inst, sol).empty());

  SUBCASE("closing an open station breaks mass balance or capacity") {
    Solution corrupted = sol;
    bool closed = false;
    for (size_t i = 0; i < corrupted.y.size(); ++i) {
      if (inst.candidates[i].id == "B" && corrupted.y[i] == 1.0) {
        corrupted.y[i] = 0.0;
        closed = true;
      }
    }
    REQUIRE(closed);
    auto violations = validate_plan(inst, corrupted);
    CHECK(!violations.empty());
    bool capacity_or_balance = false;
    for (const auto& v : violations) {
      if (v.kind == "capacity" || v.kind == "mass_balance") capacity_or_balance = true;
    }
    CHECK(capacity_or_balance);
  }

  SUBCASE("negative flow is a nonnegativity violation") {
    Solution corrupted = sol;
    corrupted.x[0][0] = -1.0;
    auto violations = validate_plan(inst, corrupted);
    bool found = false;
    for (const auto& v : violations) {
      if (v.kind == "nonnegativity") found = true;
    }
    CHECK(found);
  }

  SUBCASE("dimension mismatch throws") {
    Solution wrong = sol;
    wrong.y.pop_back();
    CHECK_THROWS_AS(validate_plan(inst, wrong), std::invalid_argument);
  }
}

TEST_CASE("delay evaluation follows the power law") {
  MilpInstance inst = fig9_instance();
  Solution sol = solve_bb(inst);
  REQUIRE(sol.status == SolveStatus::Optimal);

  DelayParams params;  // alpha 0.15, beta 4, scale 1
  DelayEvaluation eval = evaluate_delay(inst, sol, 1.0, params);
  // expected value computed independently from the solution's inflow vector
  double expected = 0.0;
  for (size_t i = 0; i < inst.candidates.size(); ++i) {
    if (std::round(sol.y[i]) != 1.0) continue;
    const double dc = eval.station_inflow[i] / 60.0;
    expected += 0.15 * std::pow(dc, 4.0);
  }
  CHECK(eval.delay_cost == doctest::Approx(expected).epsilon(1e-12));
  CHECK(eval.augmented_objective == doctest::Approx(4.0 + expected).epsilon(1e-12));

  SUBCASE("vot = 0 collapses to the construction objective") {
    DelayEvaluation free_time = evaluate_delay(inst, sol, 0.0, params);
    CHECK(free_time.augmented_objective == doctest::Approx(sol.objective));
  }

  SUBCASE("closed or empty stations contribute nothing") {
    for (size_t i = 0; i < inst.candidates.size(); ++i) {
      if (std::round(sol.y[i]) == 0.0) CHECK(eval.station_delay[i] == 0.0);
    }
  }

  SUBCASE("infinite capacity warns and zeroes the delay") {
    MilpInstance uncapped = inst;
    for (auto& c : uncapped.candidates) c.capacity = kUncapped;
    DelayEvaluation warned = evaluate_delay(uncapped, sol, 1.0, params);
    CHECK(warned.delay_cost == 0.0);
    CHECK(!warned.warnings.empty());
  }
}

TEST_CASE("feedback metrics") {
  PlanReport report;
  for (int i = 0; i < 21; ++i) {
    StationReport s;
    s.open = true;
    s.dc_ratio = 0.5;
    report.stations.push_back(s);
  }
  FeedbackMetrics fm = feedback_metrics(report, 840.0);
  CHECK(fm.defined);
  CHECK(fm.ev_cs_ratio == doctest::Approx(40.0));
  CHECK(!fm.suggestion.has_value());

  report.stations[0].dc_ratio = 1.0;
  FeedbackMetrics loaded = feedback_metrics(report, 840.0);
  CHECK(loaded.suggestion.has_value());

  PlanReport empty;
  FeedbackMetrics undefined = feedback_metrics(empty, 840.0);
  CHECK(!undefined.defined);
}

TEST_CASE("pipeline: fig9 capacitated run end to end") {
  RunConfig c = fig9_config(true, "tmp_fig9_cap_out");
  PipelineResult result = run_pipeline(c);
  CHECK(result.report.objective == doctest::Approx(4.0));
  CHECK(result.report.solver_status == SolveStatus::Optimal);
  CHECK(result.report.budget_used == 4);
  CHECK(fs::exists("tmp_fig9_cap_out/stations.csv"));
  CHECK(fs::exists("tmp_fig9_cap_out/flows.csv"));
  CHECK(fs::exists("tmp_fig9_cap_out/report.json"));
  CHECK(fs::exists("tmp_fig9_cap_out/solver.log"));

  // flows.csv rows leaving o sum to the path flow
  std::ifstream flows("tmp_fig9_cap_out/flows.csv");
  std::string line;
  std::getline(flows, line);
  double out_of_o = 0.0;
  while (std::getline(flows, line)) {
    std::istringstream row(line);
    std::string path_id, from, to, volume;
    std::getline(row, path_id, ',');
    std::getline(row, from, ',');
    std::getline(row, to, ',');
    std::getline(row, volume, ',');
    if (from == "o") out_of_o += std::stod(volume);
  }
  CHECK(out_of_o == doctest::Approx(80.0));
  fs::remove_all("tmp_fig9_cap_out");
}

TEST_CASE("pipeline: budget year before adoption onset is budget-infeasible") {
  RunConfig c = fig9_config(false, "tmp_fig9_budget_out");
  c.budget.reset();
  c.budget_year = 2005.0;
  c.bass_p = 0.005;
  c.bass_q = 0.5;
  c.bass_t_origin = 2012.0;
  c.poly_rho = -2.34297e-4;
  c.poly_t2 = 18.0;
  try {
    run_pipeline(c);
    FAIL("expected BudgetInfeasible");
  } catch (const PipelineError& e) {
    CHECK(e.stage == "solve");
    CHECK(e.exit_code == 2);
    CHECK(std::string(e.what()).find("budget") != std::string::npos);
    CHECK(std::string(e.what()).find("at least") != std::string::npos);  // hint
  }
  fs::remove_all("tmp_fig9_budget_out");
}

TEST_CASE("pipeline: identical configs produce byte-identical outputs") {
  RunConfig c = fig9_config(true, "tmp_det_a");
  c.bass_p = 0.005;
  c.bass_q = 0.5;
  c.bass_t_origin = 2012.0;
  c.poly_rho = -2.34297e-4;
  c.poly_t2 = 18.0;
  run_pipeline(c);
  c.out_dir = "tmp_det_b";
  run_pipeline(c);
  for (const char* name : {"stations.csv", "flows.csv", "curves.csv", "report.json",
                           "solver.log"}) {
    CAPTURE(name);
    CHECK(slurp(fs::path("tmp_det_a") / name) == slurp(fs::path("tmp_det_b") / name));
  }
  fs::remove_all("tmp_det_a");
  fs::remove_all("tmp_det_b");
}

TEST_CASE("pipeline: calibrated full run from the bundled fixtures") {
  RunConfig c = RunConfig::from_file(kFixtures + "/pipeline/pipeline_full.conf");
  c.out_dir = "tmp_full_out";
  PipelineResult result = run_pipeline(c);
  REQUIRE(result.calibration.has_value());
  const BassParams& fitted = result.calibration->demand_fit->params;
  CHECK(fitted.p == doctest::Approx(0.005).epsilon(1e-3));
  CHECK(fitted.q == doctest::Approx(0.5).epsilon(1e-3));
  CHECK(fitted.m == doctest::Approx(16000.0).epsilon(1e-3));
  REQUIRE(result.calibration->supply_fit.has_value());
  CHECK(result.calibration->supply_fit->params.rho ==
        doctest::Approx(-2.34297e-4 * 400.0).epsilon(1e-2));
  CHECK(result.report.objective == doctest::Approx(4.0));
  REQUIRE(result.report.scenario.has_value());
  CHECK(result.report.scenario->kind == UtilizationKind::Overutilization);
  CHECK(fs::exists("tmp_full_out/curves.csv"));
  CHECK(fs::exists("tmp_full_out/sweep_p.csv"));
  // grid-snapped candidates carry their cells into the station table
  std::ifstream stations("tmp_full_out/stations.csv");
  std::string line;
  std::getline(stations, line);
  std::getline(stations, line);
  CHECK(line.find("r0c") != std::string::npos);
  fs::remove_all("tmp_full_out");
}

TEST_CASE("pipeline: stage tags on input errors") {
  RunConfig c;
  try {
    run_pipeline(c);
    FAIL("expected a load error");
  } catch (const PipelineError& e) {
    CHECK(e.stage == "load");
    CHECK(e.exit_code == 3);
  }

  RunConfig missing = fig9_config(true, "unused");
  missing.paths_csv = "does_not_exist.csv";
  CHECK_THROWS_AS(run_pipeline(missing), PipelineError);
}

TEST_CASE("worker thread cap comes from the environment") {
  setenv("EVPLAN_THREADS", "3", 1);
  CHECK(worker_threads() == 3);
  setenv("EVPLAN_THREADS", "0", 1);
  CHECK(worker_threads() >= 1);  // invalid values fall back
  unsetenv("EVPLAN_THREADS");
  CHECK(worker_threads() >= 1);
}
