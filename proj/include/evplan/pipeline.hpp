#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "evplan/calibration.hpp"
#include "evplan/milp.hpp"
#include "evplan/path_network.hpp"
#include "evplan/supply.hpp"

namespace evplan {

/// Stage-tagged pipeline failure. exit_code follows the CLI contract:
/// 2 infeasible, 3 input error, 4 non-convergence.
struct PipelineError : std::runtime_error {
  PipelineError(std::string stage_in, const std::string& message, int code)
      : std::runtime_error("[" + stage_in + "] " + message),
        stage(std::move(stage_in)),
        exit_code(code) {}
  std::string stage;
  int exit_code;
};

/// Station-level queueing penalty: w(i) = scale * alpha * (D/C)^beta.
/// A configurable stand-in volume-delay form, not a calibrated queueing law.
struct DelayParams {
  double alpha = 0.15;
  double beta = 4.0;
  double scale = 1.0;
};

/// Flat `key = value` run configuration; unknown keys are rejected.
struct RunConfig {
  // observations / model parameters
  std::optional<std::string> demand_csv, supply_csv;
  std::optional<double> bass_p, bass_q, bass_m, bass_t_origin;
  std::optional<double> poly_rho, poly_t2, poly_t3_override;
  std::optional<double> station_market_size, ev_per_cs;

  // budget
  std::optional<long long> budget;
  std::optional<double> budget_year;
  BudgetRounding budget_rounding = BudgetRounding::Floor;

  // paths and spatial grid
  std::optional<std::string> paths_csv, paths_meta_csv;
  double range_km = 150.0;
  RangeFilterMode range_mode = RangeFilterMode::StrictGreater;
  OriginRule origin_rule = OriginRule::HalfOrigin;
  std::optional<int> grid_rows, grid_cols;
  std::optional<std::string> grid_bbox;  ///< "auto" or "xmin,ymin,xmax,ymax"

  // stations
  bool uncapacitated = false;
  std::optional<double> capacity;
  bool capacity_per_hour = false;
  double hours_per_week = 168.0;
  double station_cost = 1.0;

  // solver
  std::string solver = "bb";  ///< bb | greedy | brute
  std::optional<double> gap_abs;
  int verbosity = 0;

  // delay / feedback
  double vot = 0.0;
  DelayParams delay{};
  double dc_threshold = 0.9;
  std::optional<double> ev_count;

  // curve emission & classification
  std::optional<double> curves_from, curves_to;
  double curves_dt = 0.1;
  std::optional<double> classify_tol;
  std::optional<std::string> sweep_param;  ///< p | q | rho
  std::vector<double> sweep_values;

  // calibration controls
  bool fit_rates = false;
  NlsOptions nls;

  std::string out_dir = "out";

  static RunConfig from_file(const std::string& path);
  static RunConfig from_map(const std::map<std::string, std::string>& kv,
                            const std::string& base_dir);
};

struct StationReport {
  std::string candidate_id;
  int cell_row = -1, cell_col = -1;
  bool open = false;
  double inflow = 0.0;
  double dc_ratio = 0.0;
  double delay = 0.0;
};

struct PlanReport {
  double objective = 0.0;       ///< construction cost of the open stations
  double delay_cost = 0.0;      ///< VOT * sum of station delays
  double augmented_objective = 0.0;
  std::vector<StationReport> stations;
  double ev_cs_ratio = 0.0;
  bool ev_cs_defined = false;
  long long budget_used = 0;
  double budget_cap = 0.0;
  std::optional<UtilizationScenario> scenario;
  double max_dc = 0.0;
  std::optional<std::string> suggestion;
  SolveStatus solver_status = SolveStatus::Infeasible;
  long solver_nodes = 0;
  double bound_gap = 0.0;
  std::vector<std::string> warnings;
  std::vector<std::string> notes;
};

struct Violation {
  std::string kind;
  std::string detail;
  double residual = 0.0;
};

/// Independent replay of the plan constraints with fresh arithmetic:
/// mass balance, capacity coupling, budget, nonnegativity, binary stations.
std::vector<Violation> validate_plan(const MilpInstance& instance,
                                     const Solution& solution);

struct DelayEvaluation {
  double base_objective = 0.0;
  double delay_cost = 0.0;
  double augmented_objective = 0.0;
  std::vector<double> station_inflow;  ///< per candidate
  std::vector<double> station_dc;
  std::vector<double> station_delay;
  std::vector<std::string> warnings;
};

/// Delay-augmented objective: construction cost plus VOT-weighted station
/// delays from the D/C power law.
DelayEvaluation evaluate_delay(const MilpInstance& instance,
                               const Solution& solution, double vot,
                               const DelayParams& params);

struct FeedbackMetrics {
  double ev_cs_ratio = 0.0;
  bool defined = false;
  double max_dc = 0.0;
  std::optional<std::string> suggestion;
};

/// Coverage-adequacy feedback; advisory only, nothing is re-fitted.
FeedbackMetrics feedback_metrics(const PlanReport& report, double ev_count,
                                 double dc_threshold = 0.9);

struct CalibrationOutcome {
  std::optional<FitResult<BassParams>> demand_fit;
  std::optional<FitResult<NetFlowPoly>> supply_fit;
  std::optional<Timeline> timeline;
  std::vector<std::string> notes;
};

struct PipelineResult {
  PlanReport report;
  std::optional<CalibrationOutcome> calibration;
  std::optional<SupplyModel> model;
  std::vector<CurveSample> curves;
  std::vector<SweepEntry> sweeps;
  MilpInstance instance;
  Solution solution;
  std::vector<std::string> files_written;
};

/// Reads `year,<value>` observation rows (cumulative_adopters for demand,
/// cumulative_stations for supply).
ObservationSeries read_observation_series(const std::string& path,
                                          SeriesKind kind);

/// Raw `key = value` lines of a config file, without interpretation.
std::map<std::string, std::string> read_config_kv(const std::string& path);

/// Every key RunConfig understands (the CLI mirrors them as flags).
const std::vector<std::string>& config_keys();

/// Parallelism cap from EVPLAN_THREADS (>= 1); results never depend on it.
int worker_threads();

/// Calibration stages only (used by the `calibrate` subcommand).
CalibrationOutcome run_calibration(const RunConfig& config);

/// Supply model from observations (when demand_csv is set) or from the
/// bass_*/poly_* keys; nullopt when the config carries neither.
struct ModelBundle {
  std::optional<SupplyModel> model;
  std::optional<CalibrationOutcome> calibration;
  std::vector<std::string> notes;
};
ModelBundle build_model(const RunConfig& config);

/// load -> filter -> snap -> expand -> assemble, plus budget resolution
/// (explicit count or derived from the supply model at budget_year).
struct InstanceBundle {
  MilpInstance instance;
  std::vector<std::string> warnings;
  std::vector<std::string> notes;
};
InstanceBundle build_instance(const RunConfig& config,
                              const std::optional<SupplyModel>& model);

/// Curve/sweep emission without planning (the `curves` subcommand).
struct CurvesResult {
  SupplyModel model;
  std::vector<CurveSample> curves;
  std::vector<SweepEntry> sweeps;
  UtilizationScenario scenario;
  std::vector<std::string> notes;
  std::vector<std::string> files_written;
};
CurvesResult run_curves(const RunConfig& config);

/// Runs calibrate -> project -> budget -> load/filter/snap/expand/assemble ->
/// solve -> validate -> evaluate -> emit. Throws PipelineError with the
/// failing stage.
PipelineResult run_pipeline(const RunConfig& config);

/// Writes every artifact of a pipeline run into out_dir; returns the paths.
std::vector<std::string> emit_outputs(const PipelineResult& result,
                                      const RunConfig& config);

}  // namespace evplan
