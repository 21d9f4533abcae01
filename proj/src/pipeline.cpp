#include "evplan/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "evplan/text.hpp"

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace evplan {

namespace {

const std::set<std::string> kConfigKeys = {
    "demand_csv", "supply_csv",
    "bass_p", "bass_q", "bass_m", "bass_t_origin",
    "poly_rho", "poly_t2", "poly_t3_override",
    "station_market_size", "ev_per_cs",
    "budget", "budget_year", "budget_rounding",
    "paths_csv", "paths_meta_csv",
    "range_km", "range_mode", "origin_rule",
    "grid_rows", "grid_cols", "grid_bbox",
    "uncapacitated", "capacity", "capacity_unit", "hours_per_week",
    "station_cost",
    "solver", "gap_abs", "verbosity",
    "vot", "delay_alpha", "delay_beta", "delay_scale", "dc_threshold",
    "ev_count",
    "curves_from", "curves_to", "curves_dt", "classify_tol",
    "sweep_param", "sweep_values",
    "fit_rates", "nls_max_iterations", "nls_step_tol", "nls_grad_tol",
    "out_dir",
};

[[noreturn]] void config_error(const std::string& message) {
  throw PipelineError("config", message, 3);
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys(kConfigKeys.begin(), kConfigKeys.end());
  return keys;
}

namespace {

double need_double(const std::string& key, const std::string& value) {
  auto v = parse_double(value);
  if (!v) config_error("key '" + key + "': expected a number, got '" + value + "'");
  return *v;
}

long long need_int(const std::string& key, const std::string& value) {
  auto v = parse_int(value);
  if (!v) config_error("key '" + key + "': expected an integer, got '" + value + "'");
  return *v;
}

bool need_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  config_error("key '" + key + "': expected a boolean, got '" + value + "'");
}

std::string resolve_path(const std::string& base_dir, const std::string& p) {
  fs::path path(p);
  if (path.is_absolute() || base_dir.empty()) return p;
  return (fs::path(base_dir) / path).lexically_normal().string();
}

}  // namespace

RunConfig RunConfig::from_map(const std::map<std::string, std::string>& kv,
                              const std::string& base_dir) {
  for (const auto& [key, value] : kv) {
    if (!kConfigKeys.count(key)) config_error("unknown key '" + key + "'");
  }
  RunConfig c;
  auto get = [&](const char* key) -> std::optional<std::string> {
    auto it = kv.find(key);
    if (it == kv.end()) return std::nullopt;
    return it->second;
  };

  if (auto v = get("demand_csv")) c.demand_csv = resolve_path(base_dir, *v);
  if (auto v = get("supply_csv")) c.supply_csv = resolve_path(base_dir, *v);
  if (auto v = get("paths_csv")) c.paths_csv = resolve_path(base_dir, *v);
  if (auto v = get("paths_meta_csv")) c.paths_meta_csv = resolve_path(base_dir, *v);

  if (auto v = get("bass_p")) c.bass_p = need_double("bass_p", *v);
  if (auto v = get("bass_q")) c.bass_q = need_double("bass_q", *v);
  if (auto v = get("bass_m")) c.bass_m = need_double("bass_m", *v);
  if (auto v = get("bass_t_origin")) c.bass_t_origin = need_double("bass_t_origin", *v);
  if (auto v = get("poly_rho")) c.poly_rho = need_double("poly_rho", *v);
  if (auto v = get("poly_t2")) c.poly_t2 = need_double("poly_t2", *v);
  if (auto v = get("poly_t3_override")) {
    c.poly_t3_override = need_double("poly_t3_override", *v);
  }
  if (auto v = get("station_market_size")) {
    c.station_market_size = need_double("station_market_size", *v);
  }
  if (auto v = get("ev_per_cs")) c.ev_per_cs = need_double("ev_per_cs", *v);

  if (auto v = get("budget")) c.budget = need_int("budget", *v);
  if (auto v = get("budget_year")) c.budget_year = need_double("budget_year", *v);
  if (auto v = get("budget_rounding")) {
    if (*v == "floor") c.budget_rounding = BudgetRounding::Floor;
    else if (*v == "nearest") c.budget_rounding = BudgetRounding::Nearest;
    else config_error("budget_rounding must be floor or nearest");
  }

  if (auto v = get("range_km")) c.range_km = need_double("range_km", *v);
  if (auto v = get("range_mode")) {
    if (*v == "strict_gt") c.range_mode = RangeFilterMode::StrictGreater;
    else if (*v == "geq") c.range_mode = RangeFilterMode::GreaterEqual;
    else config_error("range_mode must be strict_gt or geq");
  }
  if (auto v = get("origin_rule")) {
    if (*v == "half_origin") c.origin_rule = OriginRule::HalfOrigin;
    else if (*v == "half_first_station") c.origin_rule = OriginRule::HalfFirstStation;
    else config_error("origin_rule must be half_origin or half_first_station");
  }
  if (auto v = get("grid_rows")) c.grid_rows = static_cast<int>(need_int("grid_rows", *v));
  if (auto v = get("grid_cols")) c.grid_cols = static_cast<int>(need_int("grid_cols", *v));
  if (auto v = get("grid_bbox")) c.grid_bbox = *v;

  if (auto v = get("uncapacitated")) c.uncapacitated = need_bool("uncapacitated", *v);
  if (auto v = get("capacity")) c.capacity = need_double("capacity", *v);
  if (auto v = get("capacity_unit")) {
    if (*v == "per_hour") c.capacity_per_hour = true;
    else if (*v == "per_week") c.capacity_per_hour = false;
    else config_error("capacity_unit must be per_week or per_hour");
  }
  if (auto v = get("hours_per_week")) c.hours_per_week = need_double("hours_per_week", *v);
  if (auto v = get("station_cost")) c.station_cost = need_double("station_cost", *v);

  if (auto v = get("solver")) {
    if (*v != "bb" && *v != "greedy" && *v != "brute") {
      config_error("solver must be bb, greedy or brute");
    }
    c.solver = *v;
  }
  if (auto v = get("gap_abs")) c.gap_abs = need_double("gap_abs", *v);
  if (auto v = get("verbosity")) c.verbosity = static_cast<int>(need_int("verbosity", *v));

  if (auto v = get("vot")) c.vot = need_double("vot", *v);
  if (auto v = get("delay_alpha")) c.delay.alpha = need_double("delay_alpha", *v);
  if (auto v = get("delay_beta")) c.delay.beta = need_double("delay_beta", *v);
  if (auto v = get("delay_scale")) c.delay.scale = need_double("delay_scale", *v);
  if (auto v = get("dc_threshold")) c.dc_threshold = need_double("dc_threshold", *v);
  if (auto v = get("ev_count")) c.ev_count = need_double("ev_count", *v);

  if (auto v = get("curves_from")) c.curves_from = need_double("curves_from", *v);
  if (auto v = get("curves_to")) c.curves_to = need_double("curves_to", *v);
  if (auto v = get("curves_dt")) c.curves_dt = need_double("curves_dt", *v);
  if (auto v = get("classify_tol")) c.classify_tol = need_double("classify_tol", *v);
  if (auto v = get("sweep_param")) {
    if (*v != "p" && *v != "q" && *v != "rho") config_error("sweep_param must be p, q or rho");
    c.sweep_param = *v;
  }
  if (auto v = get("sweep_values")) {
    for (const auto& part : split(*v, ',')) {
      c.sweep_values.push_back(need_double("sweep_values", part));
    }
  }

  if (auto v = get("fit_rates")) c.fit_rates = need_bool("fit_rates", *v);
  if (auto v = get("nls_max_iterations")) {
    c.nls.max_iterations = static_cast<int>(need_int("nls_max_iterations", *v));
  }
  if (auto v = get("nls_step_tol")) c.nls.step_tol = need_double("nls_step_tol", *v);
  if (auto v = get("nls_grad_tol")) c.nls.grad_tol = need_double("nls_grad_tol", *v);

  if (auto v = get("out_dir")) c.out_dir = *v;
  return c;
}

std::map<std::string, std::string> read_config_kv(const std::string& path) {
  std::ifstream in(path);
  if (!in) config_error("cannot open config file: " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    auto pos = t.find('=');
    if (pos == std::string::npos) {
      config_error(path + ":" + std::to_string(line_no) + ": expected key = value");
    }
    std::string key = trim(t.substr(0, pos));
    std::string value = trim(t.substr(pos + 1));
    if (key.empty()) config_error(path + ":" + std::to_string(line_no) + ": empty key");
    if (!kv.emplace(key, value).second) {
      config_error(path + ":" + std::to_string(line_no) + ": duplicate key '" + key + "'");
    }
  }
  return kv;
}

RunConfig RunConfig::from_file(const std::string& path) {
  return from_map(read_config_kv(path), fs::path(path).parent_path().string());
}

ObservationSeries read_observation_series(const std::string& path, SeriesKind kind) {
  std::ifstream in(path);
  if (!in) throw PipelineError("calibrate", "cannot open " + path, 3);
  const std::string expect_value =
      kind == SeriesKind::Demand ? "cumulative_adopters" : "cumulative_stations";
  std::string line;
  if (!std::getline(in, line) ||
      csv_fields(line) != std::vector<std::string>{"year", expect_value}) {
    throw PipelineError("calibrate",
                        path + ": bad header, expected year," + expect_value, 3);
  }
  ObservationSeries series;
  series.kind = kind;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto f = csv_fields(line);
    auto year = f.size() == 2 ? parse_double(f[0]) : std::nullopt;
    auto value = f.size() == 2 ? parse_double(f[1]) : std::nullopt;
    if (!year || !value) {
      throw PipelineError("calibrate",
                          path + ":" + std::to_string(line_no) + ": malformed row", 3);
    }
    series.points.emplace_back(*year, *value);
  }
  try {
    series.validate();
  } catch (const std::exception& e) {
    throw PipelineError("calibrate", path + ": " + e.what(), 3);
  }
  return series;
}

int worker_threads() {
  if (const char* env = std::getenv("EVPLAN_THREADS")) {
    auto v = parse_int(env);
    if (v && *v >= 1) return static_cast<int>(std::min<long long>(*v, 64));
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return static_cast<int>(std::clamp(hw, 1u, 8u));
}

std::vector<Violation> validate_plan(const MilpInstance& instance,
                                     const Solution& solution) {
  const size_t n_cand = instance.candidates.size();
  if (solution.y.size() != n_cand || solution.x.size() != instance.networks.size()) {
    throw std::invalid_argument("validate_plan: solution/instance dimension mismatch");
  }
  for (size_t k = 0; k < instance.networks.size(); ++k) {
    if (solution.x[k].size() != instance.networks[k].arcs.size()) {
      throw std::invalid_argument("validate_plan: arc flow dimension mismatch");
    }
  }

  std::vector<Violation> out;
  for (size_t i = 0; i < n_cand; ++i) {
    const double y = solution.y[i];
    if (std::abs(y - std::round(y)) > 1e-6 || y < -1e-6 || y > 1.0 + 1e-6) {
      out.push_back({"binary", "y[" + instance.candidates[i].id + "] = " + format_double(y),
                     std::abs(y - std::round(y))});
    }
  }

  // mass balance replay
  for (size_t k = 0; k < instance.networks.size(); ++k) {
    const auto& net = instance.networks[k];
    const double tol = 1e-6 * std::max(net.flow, 1.0);
    const int n_stops = static_cast<int>(net.stop_candidate.size());
    std::vector<double> balance(static_cast<size_t>(n_stops) + 2, 0.0);
    auto slot = [&](int endpoint) {
      if (endpoint == kOrigin) return static_cast<size_t>(n_stops);
      if (endpoint == kDest) return static_cast<size_t>(n_stops) + 1;
      return static_cast<size_t>(endpoint);
    };
    for (size_t a = 0; a < net.arcs.size(); ++a) {
      balance[slot(net.arcs[a].from)] += solution.x[k][a];
      balance[slot(net.arcs[a].to)] -= solution.x[k][a];
    }
    auto check = [&](size_t s, double expected, const std::string& label) {
      const double residual = std::abs(balance[s] - expected);
      if (residual > tol) {
        out.push_back({"mass_balance",
                       "path " + net.path_id + " node " + label + ": residual " +
                           format_double(residual),
                       residual});
      }
    };
    check(slot(kOrigin), net.flow, "o");
    check(slot(kDest), -net.flow, "d");
    for (int s = 0; s < n_stops; ++s) {
      check(static_cast<size_t>(s), 0.0,
            instance.candidates[static_cast<size_t>(net.stop_candidate[s])].id);
    }
  }

  // capacity coupling replay
  std::vector<double> inflow(n_cand, 0.0);
  for (size_t k = 0; k < instance.networks.size(); ++k) {
    const auto& net = instance.networks[k];
    for (size_t a = 0; a < net.arcs.size(); ++a) {
      if (net.arcs[a].to >= 0) {
        inflow[static_cast<size_t>(net.stop_candidate[net.arcs[a].to])] +=
            solution.x[k][a];
      }
    }
  }
  for (size_t i = 0; i < n_cand; ++i) {
    double cap = instance.candidates[i].capacity;
    if (!std::isfinite(cap)) cap = std::max(instance.total_flow, 1.0);
    const double limit = cap * std::round(solution.y[i]);
    if (inflow[i] > limit + 1e-6) {
      out.push_back({"capacity",
                     "station " + instance.candidates[i].id + ": inflow " +
                         format_double(inflow[i]) + " > " + format_double(limit),
                     inflow[i] - limit});
    }
  }

  // budget
  double used = 0.0;
  for (double y : solution.y) used += std::round(y);
  if (used > instance.p_max + 1e-9) {
    out.push_back({"budget",
                   format_double(used) + " stations exceed p_max = " +
                       format_double(instance.p_max),
                   used - instance.p_max});
  }

  // nonnegativity
  for (size_t k = 0; k < solution.x.size(); ++k) {
    for (size_t a = 0; a < solution.x[k].size(); ++a) {
      if (solution.x[k][a] < -1e-9) {
        out.push_back({"nonnegativity",
                       "path " + instance.networks[k].path_id + " arc " +
                           std::to_string(a) + ": " + format_double(solution.x[k][a]),
                       -solution.x[k][a]});
      }
    }
  }
  return out;
}

DelayEvaluation evaluate_delay(const MilpInstance& instance,
                               const Solution& solution, double vot,
                               const DelayParams& params) {
  const size_t n_cand = instance.candidates.size();
  DelayEvaluation out;
  out.station_inflow.assign(n_cand, 0.0);
  out.station_dc.assign(n_cand, 0.0);
  out.station_delay.assign(n_cand, 0.0);

  for (size_t k = 0; k < instance.networks.size(); ++k) {
    const auto& net = instance.networks[k];
    for (size_t a = 0; a < net.arcs.size(); ++a) {
      if (net.arcs[a].to >= 0) {
        out.station_inflow[static_cast<size_t>(net.stop_candidate[net.arcs[a].to])] +=
            solution.x[k][a];
      }
    }
  }
  out.base_objective = solution.objective;
  for (size_t i = 0; i < n_cand; ++i) {
    if (std::round(solution.y[i]) != 1.0) continue;
    const double cap = instance.candidates[i].capacity;
    if (!std::isfinite(cap)) {
      out.warnings.push_back("station " + instance.candidates[i].id +
                             " has no capacity; delay set to 0");
      continue;
    }
    const double dc = out.station_inflow[i] / cap;
    out.station_dc[i] = dc;
    out.station_delay[i] = params.scale * params.alpha * std::pow(dc, params.beta);
    out.delay_cost += vot * out.station_delay[i];
  }
  out.augmented_objective = out.base_objective + out.delay_cost;
  return out;
}

FeedbackMetrics feedback_metrics(const PlanReport& report, double ev_count,
                                 double dc_threshold) {
  FeedbackMetrics fm;
  long open = 0;
  for (const auto& s : report.stations) {
    if (s.open) {
      ++open;
      fm.max_dc = std::max(fm.max_dc, s.dc_ratio);
    }
  }
  if (open == 0) {
    fm.defined = false;
    return fm;
  }
  fm.defined = true;
  fm.ev_cs_ratio = ev_count / static_cast<double>(open);
  if (fm.max_dc > dc_threshold) {
    fm.suggestion =
        "max D/C ratio " + format_double(fm.max_dc) + " exceeds " +
        format_double(dc_threshold) +
        "; consider a stronger inconvenience response (larger |rho|) or an "
        "earlier t2 when revisiting the supply model";
  }
  return fm;
}

CalibrationOutcome run_calibration(const RunConfig& config) {
  CalibrationOutcome cal;
  if (!config.demand_csv) {
    throw PipelineError("calibrate", "demand_csv is required", 3);
  }
  ObservationSeries demand = read_observation_series(*config.demand_csv, SeriesKind::Demand);

  BassFitOptions options;
  options.nls = config.nls;
  options.fit_rates = config.fit_rates;
  options.fixed_t_origin = config.bass_t_origin;
  options.threads = worker_threads();
  try {
    cal.demand_fit = fit_bass(demand, options);
  } catch (const std::exception& e) {
    throw PipelineError("calibrate", e.what(), 3);
  }
  if (!cal.demand_fit->converged) {
    throw PipelineError("calibrate", "demand fit did not converge", 4);
  }
  cal.timeline = derive_timeline(cal.demand_fit->params);

  if (config.supply_csv) {
    ObservationSeries supply =
        read_observation_series(*config.supply_csv, SeriesKind::Supply);
    BassParams station_bass = cal.demand_fit->params;
    if (config.station_market_size) {
      station_bass.m = *config.station_market_size;
    } else if (config.ev_per_cs) {
      station_bass.m = station_bass.m / *config.ev_per_cs;
    } else {
      throw PipelineError("calibrate",
                          "supply_csv needs station_market_size or ev_per_cs "
                          "to put the demand curve into station units",
                          3);
    }
    PolyFitOptions poly_options;
    poly_options.nls = config.nls;
    try {
      cal.supply_fit = fit_inconvenience(supply, station_bass, poly_options);
    } catch (const std::exception& e) {
      throw PipelineError("calibrate", e.what(), 3);
    }
    if (!cal.supply_fit->converged) {
      throw PipelineError("calibrate", "inconvenience fit did not converge", 4);
    }
    const NetFlowPoly& poly = cal.supply_fit->params;
    cal.notes.push_back("episode timeline: t2 = " +
                        format_double(station_bass.t_origin + poly.t2) +
                        ", derived t3 = " +
                        format_double(station_bass.t_origin + congestion_end(poly)));
  }
  return cal;
}

namespace {

void flag_t3_discrepancy(const SupplyModel& model, std::vector<std::string>& notes) {
  if (model.perfect_tracking() || !model.poly.t3_override) return;
  const double derived = congestion_end(model.poly);
  if (std::abs(*model.poly.t3_override - derived) > 1e-9) {
    notes.push_back("configured episode end t3 = " +
                    format_double(*model.poly.t3_override) +
                    " conflicts with the value implied by the quadratic, " +
                    format_double(derived) + "; the derived value is used");
  }
}

}  // namespace

ModelBundle build_model(const RunConfig& config) {
  ModelBundle bundle;
  if (config.demand_csv) {
    bundle.calibration = run_calibration(config);
    SupplyModel model;
    model.bass = bundle.calibration->demand_fit->params;
    if (config.station_market_size) {
      model.bass.m = *config.station_market_size;
    } else if (config.ev_per_cs) {
      model.bass.m = model.bass.m / *config.ev_per_cs;
      bundle.notes.push_back("station market size derived from EV/CS ratio: " +
                             format_double(model.bass.m));
    }
    if (bundle.calibration->supply_fit) {
      model.poly = bundle.calibration->supply_fit->params;
    } else if (config.poly_rho && config.poly_t2) {
      model.poly = NetFlowPoly{*config.poly_rho, 0.0, *config.poly_t2,
                               config.poly_t3_override};
    } else {
      model.poly = NetFlowPoly{0.0, 0.0, 1.0, {}};
      bundle.notes.push_back("no supply-side observations or parameters; "
                             "assuming perfect demand tracking (rho = 0)");
    }
    bundle.model = model;
    for (const auto& n : bundle.calibration->notes) bundle.notes.push_back(n);
  } else if (config.bass_p && config.bass_q) {
    SupplyModel model;
    model.bass.p = *config.bass_p;
    model.bass.q = *config.bass_q;
    model.bass.m = config.station_market_size.value_or(config.bass_m.value_or(1.0));
    model.bass.t_origin = config.bass_t_origin.value_or(0.0);
    if (config.poly_rho && config.poly_t2) {
      model.poly = NetFlowPoly{*config.poly_rho, 0.0, *config.poly_t2,
                               config.poly_t3_override};
    } else {
      model.poly = NetFlowPoly{0.0, 0.0, 1.0, {}};
      bundle.notes.push_back("no inconvenience parameters; assuming perfect "
                             "demand tracking (rho = 0)");
    }
    bundle.model = model;
  }
  if (bundle.model) {
    try {
      bundle.model->validate();
    } catch (const std::exception& e) {
      throw PipelineError("project", e.what(), 3);
    }
    flag_t3_discrepancy(*bundle.model, bundle.notes);
  }
  return bundle;
}

InstanceBundle build_instance(const RunConfig& config,
                              const std::optional<SupplyModel>& model) {
  InstanceBundle bundle;

  std::optional<double> budget;
  if (config.budget) {
    if (*config.budget < 0) throw PipelineError("budget", "budget must be >= 0", 3);
    budget = static_cast<double>(*config.budget);
  } else if (config.budget_year) {
    if (!model) {
      throw PipelineError("budget",
                          "budget_year needs a supply model (observations or "
                          "bass/poly parameters)",
                          3);
    }
    const double size = config.station_market_size.value_or(model->bass.m);
    StationBudget sb =
        station_budget(*model, *config.budget_year, size, config.budget_rounding);
    for (auto& w : sb.warnings) bundle.warnings.push_back(std::move(w));
    budget = static_cast<double>(sb.count);
    bundle.notes.push_back("station budget at year " +
                           format_double(*config.budget_year) + ": " +
                           std::to_string(sb.count));
  }

  if (!config.paths_csv) {
    throw PipelineError("load", "paths_csv is required for planning", 3);
  }
  LoadResult loaded;
  try {
    loaded = load_paths(*config.paths_csv, config.paths_meta_csv);
  } catch (const std::exception& e) {
    throw PipelineError("load", e.what(), 3);
  }
  for (const auto& d : loaded.diagnostics) bundle.warnings.push_back(d);
  if (loaded.paths.empty()) {
    throw PipelineError("load", "no usable paths in " + *config.paths_csv, 3);
  }

  std::vector<TravelPath> paths =
      filter_by_range(loaded.paths, config.range_km, config.range_mode);
  if (paths.empty()) {
    throw PipelineError("filter",
                        "no path exceeds the driving range " +
                            format_double(config.range_km) + " km",
                        3);
  }

  if (config.grid_rows && config.grid_cols) {
    GridSpec grid;
    grid.rows = *config.grid_rows;
    grid.cols = *config.grid_cols;
    std::string bbox = config.grid_bbox.value_or("auto");
    if (bbox == "auto") {
      double x0 = 1e300, y0 = 1e300, x1 = -1e300, y1 = -1e300;
      for (const auto& p : paths) {
        for (const auto& n : p.nodes) {
          x0 = std::min(x0, n.x); y0 = std::min(y0, n.y);
          x1 = std::max(x1, n.x); y1 = std::max(y1, n.y);
        }
      }
      if (!(x1 > x0)) x1 = x0 + 1.0;
      if (!(y1 > y0)) y1 = y0 + 1.0;
      grid.x_min = x0; grid.y_min = y0; grid.x_max = x1; grid.y_max = y1;
    } else {
      auto parts = split(bbox, ',');
      if (parts.size() != 4) {
        throw PipelineError("snap", "grid_bbox must be auto or xmin,ymin,xmax,ymax", 3);
      }
      grid.x_min = need_double("grid_bbox", parts[0]);
      grid.y_min = need_double("grid_bbox", parts[1]);
      grid.x_max = need_double("grid_bbox", parts[2]);
      grid.y_max = need_double("grid_bbox", parts[3]);
    }
    try {
      SnapResult snapped = snap_to_grid(paths, grid);
      for (auto& w : snapped.warnings) bundle.warnings.push_back(std::move(w));
      paths = std::move(snapped.paths);
    } catch (const std::exception& e) {
      throw PipelineError("snap", e.what(), 3);
    }
  }

  std::vector<ExpandedNetwork> networks;
  networks.reserve(paths.size());
  for (const auto& p : paths) {
    networks.push_back(expand_path(p, config.range_km, config.origin_rule));
    if (!networks.back().feasible_by_construction) {
      bundle.warnings.push_back("path " + p.id + " infeasible by construction: " +
                                networks.back().infeasible_reason);
    }
  }

  CostSpec costs;
  costs.default_cost = config.station_cost;
  CapacitySpec capacity;
  if (config.uncapacitated || !config.capacity) {
    capacity.uncapacitated = true;
  } else {
    capacity.uncapacitated = false;
    capacity.value = *config.capacity;
    capacity.per_hour = config.capacity_per_hour;
    capacity.hours_per_week = config.hours_per_week;
  }
  try {
    bundle.instance = assemble_instance(networks, costs, capacity, budget);
  } catch (const std::exception& e) {
    throw PipelineError("assemble", e.what(), 3);
  }
  return bundle;
}

namespace {

void write_curve_rows(std::ofstream& out, const std::vector<CurveSample>& curves,
                      const std::string& prefix) {
  for (const auto& s : curves) {
    out << prefix << format_double(s.t) << ',' << format_double(s.lambda) << ','
        << format_double(s.mu) << ',' << format_double(s.A) << ','
        << format_double(s.D) << ',' << format_double(s.Q) << '\n';
  }
}

struct CurveStage {
  std::vector<CurveSample> curves;
  std::vector<SweepEntry> sweeps;
  UtilizationScenario scenario;
};

CurveStage project_curves(const RunConfig& config, const SupplyModel& model) {
  CurveStage stage;
  const double origin = model.bass.t_origin;
  const double horizon_end = origin + std::max(model.episode_end(), 0.0) + 10.0;
  const double from = config.curves_from.value_or(origin);
  const double to = config.curves_to.value_or(std::max(horizon_end, origin + 40.0));
  stage.curves = emit_curves(model, from, to, config.curves_dt);
  const double tol = config.classify_tol.value_or(1e-6 * model.bass.m);
  stage.scenario = classify_utilization(model, {from, to}, tol);
  if (config.sweep_param) {
    SweepParam param = *config.sweep_param == "p"   ? SweepParam::P
                       : *config.sweep_param == "q" ? SweepParam::Q
                                                    : SweepParam::Rho;
    stage.sweeps = sensitivity_sweep(model, param, config.sweep_values, from, to,
                                     config.curves_dt);
  }
  return stage;
}

}  // namespace

CurvesResult run_curves(const RunConfig& config) {
  ModelBundle bundle = build_model(config);
  if (!bundle.model) {
    throw PipelineError("project",
                        "no supply model: provide demand_csv or bass_p/bass_q", 3);
  }
  CurvesResult out;
  out.model = *bundle.model;
  out.notes = bundle.notes;
  CurveStage stage = project_curves(config, out.model);
  out.curves = std::move(stage.curves);
  out.sweeps = std::move(stage.sweeps);
  out.scenario = stage.scenario;

  fs::path dir(config.out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw PipelineError("emit", "cannot create " + dir.string(), 3);
  {
    fs::path p = dir / "curves.csv";
    std::ofstream f(p);
    if (!f) throw PipelineError("emit", "cannot write " + p.string(), 3);
    f << "t,lambda,mu,A,D,Q\n";
    write_curve_rows(f, out.curves, "");
    out.files_written.push_back(p.string());
  }
  if (!out.sweeps.empty()) {
    const char* name = out.sweeps.front().param == SweepParam::P   ? "sweep_p.csv"
                       : out.sweeps.front().param == SweepParam::Q ? "sweep_q.csv"
                                                                   : "sweep_rho.csv";
    fs::path p = dir / name;
    std::ofstream f(p);
    if (!f) throw PipelineError("emit", "cannot write " + p.string(), 3);
    f << "series,t,lambda,mu,A,D,Q\n";
    for (const auto& entry : out.sweeps) {
      if (!entry.error.empty()) continue;
      write_curve_rows(f, entry.curves, format_double(entry.value) + ",");
    }
    out.files_written.push_back(p.string());
  }
  return out;
}

PipelineResult run_pipeline(const RunConfig& config) {
  PipelineResult result;
  PlanReport& report = result.report;

  ModelBundle model_bundle = build_model(config);
  result.model = model_bundle.model;
  result.calibration = model_bundle.calibration;
  for (auto& n : model_bundle.notes) report.notes.push_back(std::move(n));

  if (result.model) {
    CurveStage stage = project_curves(config, *result.model);
    result.curves = std::move(stage.curves);
    result.sweeps = std::move(stage.sweeps);
    report.scenario = stage.scenario;
  }

  InstanceBundle instance_bundle = build_instance(config, result.model);
  result.instance = std::move(instance_bundle.instance);
  for (auto& w : instance_bundle.warnings) report.warnings.push_back(std::move(w));
  for (auto& n : instance_bundle.notes) report.notes.push_back(std::move(n));
  report.budget_cap = result.instance.p_max;

  // --- solve ---
  std::ostringstream solver_log;
  SolveOptions solve_options;
  solve_options.gap_abs = config.gap_abs;
  solve_options.verbosity = std::max(config.verbosity, 1);
  solve_options.log = &solver_log;
  if (config.solver == "bb") {
    result.solution = solve_bb(result.instance, solve_options);
  } else if (config.solver == "greedy") {
    result.solution = greedy_add(result.instance);
  } else {
    result.solution = brute_force(result.instance);
  }
  report.solver_status = result.solution.status;
  report.solver_nodes = result.solution.nodes;
  report.bound_gap = result.solution.bound_gap;

  if (result.solution.status == SolveStatus::BudgetInfeasible) {
    SolveOptions relaxed_options;
    relaxed_options.gap_abs = config.gap_abs;
    MilpInstance relaxed = result.instance;
    relaxed.p_max = static_cast<double>(relaxed.candidates.size());
    Solution unconstrained = solve_bb(relaxed, relaxed_options);
    std::string hint =
        "budget p_max = " + format_double(result.instance.p_max) + " binds";
    if (unconstrained.status == SolveStatus::Optimal) {
      double count = 0;
      for (double y : unconstrained.y) count += std::round(y);
      hint += "; covering every path needs at least " + format_double(count) +
              " stations (cost " + format_double(unconstrained.objective) + ")";
    }
    throw PipelineError("solve", "budget infeasible: " + hint, 2);
  }
  if (result.solution.status == SolveStatus::Infeasible) {
    throw PipelineError("solve", "infeasible: " + result.solution.note, 2);
  }
  if (result.solution.status == SolveStatus::IterLimit) {
    throw PipelineError("solve", "node limit reached before optimality", 4);
  }

  // --- validate ---
  std::vector<Violation> violations = validate_plan(result.instance, result.solution);
  if (!violations.empty()) {
    std::string detail;
    for (const auto& v : violations) detail += v.kind + ": " + v.detail + "; ";
    throw PipelineError("validate", "solver output violates constraints: " + detail, 2);
  }

  // --- evaluate ---
  DelayEvaluation delay =
      evaluate_delay(result.instance, result.solution, config.vot, config.delay);
  for (auto& w : delay.warnings) report.warnings.push_back(std::move(w));
  report.objective = result.solution.objective;
  report.delay_cost = delay.delay_cost;
  report.augmented_objective = delay.augmented_objective;
  report.budget_used = 0;
  for (size_t i = 0; i < result.instance.candidates.size(); ++i) {
    const auto& cand = result.instance.candidates[i];
    StationReport sr;
    sr.candidate_id = cand.id;
    sr.cell_row = cand.cell_row;
    sr.cell_col = cand.cell_col;
    sr.open = std::round(result.solution.y[i]) == 1.0;
    sr.inflow = delay.station_inflow[i];
    sr.dc_ratio = delay.station_dc[i];
    sr.delay = delay.station_delay[i];
    if (sr.open) ++report.budget_used;
    report.stations.push_back(std::move(sr));
  }
  const double ev_count = config.ev_count.value_or(result.instance.total_flow);
  FeedbackMetrics fm = feedback_metrics(report, ev_count, config.dc_threshold);
  report.ev_cs_ratio = fm.ev_cs_ratio;
  report.ev_cs_defined = fm.defined;
  report.max_dc = fm.max_dc;
  report.suggestion = fm.suggestion;
  if (!fm.defined) report.warnings.push_back("no open stations; EV/CS ratio undefined");
  report.notes.push_back(
      "station delays use the configurable power-law stand-in w = scale * "
      "alpha * (D/C)^beta, not a calibrated queueing relationship");

  // --- emit ---
  result.files_written = emit_outputs(result, config);
  {
    fs::path log_path = fs::path(config.out_dir) / "solver.log";
    std::ofstream log(log_path);
    if (!log) throw PipelineError("emit", "cannot write " + log_path.string(), 3);
    log << solver_log.str();
    result.files_written.push_back(log_path.string());
  }
  return result;
}

namespace {

ordered_json scenario_json(const UtilizationScenario& s) {
  ordered_json j;
  j["kind"] = to_string(s.kind);
  j["peak_gap"] = s.peak_gap;
  j["gap_window"] = {s.gap_window.first, s.gap_window.second};
  return j;
}

template <typename Params>
ordered_json fit_json(const FitResult<Params>& fit) {
  ordered_json j;
  j["sse"] = fit.sse;
  j["iterations"] = fit.iterations;
  j["converged"] = fit.converged;
  j["residuals"] = fit.residuals;
  j["notes"] = fit.notes;
  return j;
}

}  // namespace

std::vector<std::string> emit_outputs(const PipelineResult& result,
                                      const RunConfig& config) {
  std::vector<std::string> written;
  fs::path dir(config.out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw PipelineError("emit", "cannot create " + dir.string(), 3);

  if (!result.curves.empty()) {
    fs::path p = dir / "curves.csv";
    std::ofstream out(p);
    if (!out) throw PipelineError("emit", "cannot write " + p.string(), 3);
    out << "t,lambda,mu,A,D,Q\n";
    write_curve_rows(out, result.curves, "");
    written.push_back(p.string());
  }
  if (!result.sweeps.empty()) {
    const char* name = result.sweeps.front().param == SweepParam::P   ? "sweep_p.csv"
                       : result.sweeps.front().param == SweepParam::Q ? "sweep_q.csv"
                                                                      : "sweep_rho.csv";
    fs::path p = dir / name;
    std::ofstream out(p);
    if (!out) throw PipelineError("emit", "cannot write " + p.string(), 3);
    out << "series,t,lambda,mu,A,D,Q\n";
    for (const auto& entry : result.sweeps) {
      if (!entry.error.empty()) continue;
      write_curve_rows(out, entry.curves, format_double(entry.value) + ",");
    }
    written.push_back(p.string());
  }

  {
    fs::path p = dir / "stations.csv";
    std::ofstream out(p);
    if (!out) throw PipelineError("emit", "cannot write " + p.string(), 3);
    out << "candidate_id,cell_row,cell_col,open,inflow_per_week,dc_ratio,delay\n";
    for (const auto& s : result.report.stations) {
      out << s.candidate_id << ',' << s.cell_row << ',' << s.cell_col << ','
          << (s.open ? 1 : 0) << ',' << format_double(s.inflow) << ','
          << format_double(s.dc_ratio) << ',' << format_double(s.delay) << '\n';
    }
    written.push_back(p.string());
  }
  {
    fs::path p = dir / "flows.csv";
    std::ofstream out(p);
    if (!out) throw PipelineError("emit", "cannot write " + p.string(), 3);
    out << "path_id,from,to,volume\n";
    for (size_t k = 0; k < result.instance.networks.size(); ++k) {
      const auto& net = result.instance.networks[k];
      for (size_t a = 0; a < net.arcs.size(); ++a) {
        const double v = k < result.solution.x.size() ? result.solution.x[k][a] : 0.0;
        if (std::abs(v) <= 1e-9) continue;
        out << net.path_id << ',' << result.instance.arc_label(net, net.arcs[a].from)
            << ',' << result.instance.arc_label(net, net.arcs[a].to) << ','
            << format_double(v) << '\n';
      }
    }
    written.push_back(p.string());
  }

  {
    const PlanReport& r = result.report;
    ordered_json j;
    j["plan"] = {
        {"objective", r.objective},
        {"delay_cost", r.delay_cost},
        {"augmented_objective", r.augmented_objective},
        {"budget_used", r.budget_used},
        {"budget_cap", r.budget_cap},
        {"stations_open", r.budget_used},
        {"solver_status", to_string(r.solver_status)},
        {"solver_nodes", r.solver_nodes},
        {"bound_gap", r.bound_gap},
    };
    j["feedback"] = {
        {"ev_cs_ratio", r.ev_cs_defined ? ordered_json(r.ev_cs_ratio) : ordered_json()},
        {"max_dc", r.max_dc},
        {"suggestion", r.suggestion ? ordered_json(*r.suggestion) : ordered_json()},
    };
    if (r.scenario) j["scenario"] = scenario_json(*r.scenario);
    if (result.calibration) {
      ordered_json c;
      if (result.calibration->demand_fit) {
        const auto& fit = *result.calibration->demand_fit;
        c["demand"] = fit_json(fit);
        c["demand"]["p"] = fit.params.p;
        c["demand"]["q"] = fit.params.q;
        c["demand"]["m"] = fit.params.m;
        c["demand"]["t_origin"] = fit.params.t_origin;
      }
      if (result.calibration->timeline) {
        const auto& tl = *result.calibration->timeline;
        c["timeline"] = {{"t_peak", tl.t_peak},
                         {"t_ip_minus", tl.t_ip_minus},
                         {"t_ip_plus", tl.t_ip_plus},
                         {"t0", tl.t0}};
      }
      if (result.calibration->supply_fit) {
        const auto& fit = *result.calibration->supply_fit;
        c["supply"] = fit_json(fit);
        c["supply"]["rho"] = fit.params.rho;
        c["supply"]["t2"] = fit.params.t2;
        c["supply"]["t3_derived"] = congestion_end(fit.params);
      }
      j["calibration"] = std::move(c);
    }
    j["delay_model"] = {
        {"form", "w_i = scale * alpha * (D/C)^beta"},
        {"alpha", config.delay.alpha},
        {"beta", config.delay.beta},
        {"scale", config.delay.scale},
        {"vot", config.vot},
        {"note", "configurable stand-in volume-delay form"},
    };
    j["validation"] = {{"violations", 0}};
    j["warnings"] = r.warnings;
    j["notes"] = r.notes;
    fs::path p = dir / "report.json";
    std::ofstream out(p);
    if (!out) throw PipelineError("emit", "cannot write " + p.string(), 3);
    out << j.dump(2) << '\n';
    written.push_back(p.string());
  }
  return written;
}

}  // namespace evplan
