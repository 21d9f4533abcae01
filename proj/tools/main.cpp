#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "evplan/pipeline.hpp"
#include "evplan/text.hpp"

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;
using namespace evplan;

namespace {

struct CommonArgs {
  std::string config_file;
  std::map<std::string, std::string> overrides;
};

void add_config_flags(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_file, "run configuration file (key = value lines)");
  for (const auto& key : config_keys()) {
    cmd->add_option_function<std::string>(
        "--" + key,
        [&args, key](const std::string& value) { args.overrides[key] = value; },
        "override config key " + key);
  }
}

RunConfig make_config(const CommonArgs& args) {
  std::map<std::string, std::string> kv;
  if (!args.config_file.empty()) {
    kv = read_config_kv(args.config_file);
    const std::string base = fs::path(args.config_file).parent_path().string();
    for (const char* key : {"demand_csv", "supply_csv", "paths_csv", "paths_meta_csv"}) {
      auto it = kv.find(key);
      if (it == kv.end()) continue;
      fs::path p(it->second);
      if (!p.is_absolute() && !base.empty()) {
        it->second = (fs::path(base) / p).lexically_normal().string();
      }
    }
  }
  for (const auto& [key, value] : args.overrides) kv[key] = value;
  return RunConfig::from_map(kv, "");
}

ordered_json calibration_json(const CalibrationOutcome& cal) {
  ordered_json j;
  if (cal.demand_fit) {
    const auto& fit = *cal.demand_fit;
    j["demand"] = {{"p", fit.params.p},       {"q", fit.params.q},
                   {"m", fit.params.m},       {"t_origin", fit.params.t_origin},
                   {"sse", fit.sse},          {"iterations", fit.iterations},
                   {"converged", fit.converged}, {"notes", fit.notes}};
  }
  if (cal.timeline) {
    j["timeline"] = {{"t_peak", cal.timeline->t_peak},
                     {"t_ip_minus", cal.timeline->t_ip_minus},
                     {"t_ip_plus", cal.timeline->t_ip_plus},
                     {"t0", cal.timeline->t0}};
  }
  if (cal.supply_fit) {
    const auto& fit = *cal.supply_fit;
    j["supply"] = {{"rho", fit.params.rho},
                   {"t2", fit.params.t2},
                   {"t3_derived", congestion_end(fit.params)},
                   {"sse", fit.sse},
                   {"iterations", fit.iterations},
                   {"converged", fit.converged},
                   {"notes", fit.notes}};
  }
  j["notes"] = cal.notes;
  return j;
}

int cmd_calibrate(const CommonArgs& args) {
  RunConfig config = make_config(args);
  CalibrationOutcome cal = run_calibration(config);
  ordered_json j = calibration_json(cal);
  fs::create_directories(config.out_dir);
  std::ofstream out(fs::path(config.out_dir) / "calibration.json");
  out << j.dump(2) << '\n';
  std::cout << j.dump(2) << '\n';
  return 0;
}

int cmd_curves(const CommonArgs& args) {
  RunConfig config = make_config(args);
  CurvesResult result = run_curves(config);
  std::cout << "scenario: " << to_string(result.scenario.kind)
            << " (peak gap " << format_double(result.scenario.peak_gap) << ")\n";
  for (const auto& f : result.files_written) std::cout << "wrote " << f << '\n';
  return 0;
}

int run_plan(const CommonArgs& args) {
  RunConfig config = make_config(args);
  PipelineResult result = run_pipeline(config);
  std::cout << "status: " << to_string(result.report.solver_status)
            << "\nobjective: " << format_double(result.report.objective)
            << "\nstations open: " << result.report.budget_used
            << "\naugmented objective: "
            << format_double(result.report.augmented_objective) << '\n';
  for (const auto& f : result.files_written) std::cout << "wrote " << f << '\n';
  return 0;
}

int cmd_evaluate(const CommonArgs& args, const std::string& plan_dir_flag) {
  RunConfig config = make_config(args);
  const std::string plan_dir = plan_dir_flag.empty() ? config.out_dir : plan_dir_flag;

  ModelBundle model_bundle = build_model(config);
  InstanceBundle bundle = build_instance(config, model_bundle.model);
  const MilpInstance& instance = bundle.instance;

  Solution solution;
  solution.status = SolveStatus::Feasible;
  solution.y.assign(instance.candidates.size(), 0.0);
  solution.x.resize(instance.networks.size());
  for (size_t k = 0; k < instance.networks.size(); ++k) {
    solution.x[k].assign(instance.networks[k].arcs.size(), 0.0);
  }

  {
    std::ifstream in(fs::path(plan_dir) / "stations.csv");
    if (!in) throw PipelineError("evaluate", "cannot open " + plan_dir + "/stations.csv", 3);
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
      if (trim(line).empty()) continue;
      auto f = csv_fields(line);
      if (f.size() != 7) throw PipelineError("evaluate", "stations.csv: malformed row", 3);
      const int idx = instance.candidate_index(f[0]);
      if (idx < 0) {
        throw PipelineError("evaluate",
                            "stations.csv names unknown candidate " + f[0] +
                                " (inputs changed since the plan was written?)",
                            3);
      }
      solution.y[static_cast<size_t>(idx)] = f[3] == "1" ? 1.0 : 0.0;
    }
  }
  {
    std::ifstream in(fs::path(plan_dir) / "flows.csv");
    if (!in) throw PipelineError("evaluate", "cannot open " + plan_dir + "/flows.csv", 3);
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      if (trim(line).empty()) continue;
      auto f = csv_fields(line);
      auto volume = f.size() == 4 ? parse_double(f[3]) : std::nullopt;
      if (!volume) throw PipelineError("evaluate", "flows.csv: malformed row", 3);
      bool matched = false;
      for (size_t k = 0; k < instance.networks.size() && !matched; ++k) {
        const auto& net = instance.networks[k];
        if (net.path_id != f[0]) continue;
        for (size_t a = 0; a < net.arcs.size(); ++a) {
          if (instance.arc_label(net, net.arcs[a].from) == f[1] &&
              instance.arc_label(net, net.arcs[a].to) == f[2]) {
            solution.x[k][a] = *volume;
            matched = true;
            break;
          }
        }
      }
      if (!matched) {
        throw PipelineError("evaluate", "flows.csv references unknown arc " + f[1] +
                                            " -> " + f[2] + " on path " + f[0], 3);
      }
    }
  }
  solution.objective = 0.0;
  for (size_t i = 0; i < instance.candidates.size(); ++i) {
    solution.objective += instance.candidates[i].cost * solution.y[i];
  }

  std::vector<Violation> violations = validate_plan(instance, solution);
  DelayEvaluation delay = evaluate_delay(instance, solution, config.vot, config.delay);

  PlanReport report;
  report.objective = solution.objective;
  for (size_t i = 0; i < instance.candidates.size(); ++i) {
    StationReport sr;
    sr.candidate_id = instance.candidates[i].id;
    sr.open = solution.y[i] == 1.0;
    sr.inflow = delay.station_inflow[i];
    sr.dc_ratio = delay.station_dc[i];
    sr.delay = delay.station_delay[i];
    report.stations.push_back(sr);
  }
  FeedbackMetrics fm = feedback_metrics(
      report, config.ev_count.value_or(instance.total_flow), config.dc_threshold);

  ordered_json j;
  j["objective"] = solution.objective;
  j["delay_cost"] = delay.delay_cost;
  j["augmented_objective"] = delay.augmented_objective;
  j["violations"] = ordered_json::array();
  for (const auto& v : violations) {
    j["violations"].push_back({{"kind", v.kind}, {"detail", v.detail}, {"residual", v.residual}});
  }
  j["feedback"] = {
      {"ev_cs_ratio", fm.defined ? ordered_json(fm.ev_cs_ratio) : ordered_json()},
      {"max_dc", fm.max_dc},
      {"suggestion", fm.suggestion ? ordered_json(*fm.suggestion) : ordered_json()},
  };
  fs::create_directories(config.out_dir);
  std::ofstream out(fs::path(config.out_dir) / "evaluation.json");
  out << j.dump(2) << '\n';
  std::cout << j.dump(2) << '\n';
  return violations.empty() ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"EV charging network planning toolkit"};
  app.require_subcommand(1);

  CommonArgs calibrate_args, curves_args, plan_args, evaluate_args, pipeline_args;
  std::string plan_dir;

  CLI::App* calibrate = app.add_subcommand(
      "calibrate", "fit diffusion and inconvenience parameters from observations");
  add_config_flags(calibrate, calibrate_args);

  CLI::App* curves = app.add_subcommand(
      "curves", "emit demand/supply curves and sensitivity sweeps");
  add_config_flags(curves, curves_args);

  CLI::App* plan = app.add_subcommand(
      "plan", "solve the station location problem for the configured paths");
  add_config_flags(plan, plan_args);

  CLI::App* evaluate = app.add_subcommand(
      "evaluate", "re-validate an emitted plan and price its delays");
  add_config_flags(evaluate, evaluate_args);
  evaluate->add_option("--plan-dir", plan_dir, "directory with stations.csv and flows.csv");

  CLI::App* pipeline = app.add_subcommand(
      "pipeline", "full run: calibrate, project, budget, plan, evaluate, emit");
  add_config_flags(pipeline, pipeline_args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 3;  // help exits 0, anything else is an input error
  }

  try {
    if (calibrate->parsed()) return cmd_calibrate(calibrate_args);
    if (curves->parsed()) return cmd_curves(curves_args);
    if (plan->parsed()) return run_plan(plan_args);
    if (evaluate->parsed()) return cmd_evaluate(evaluate_args, plan_dir);
    if (pipeline->parsed()) return run_plan(pipeline_args);
  } catch (const PipelineError& e) {
    std::cerr << "error " << e.what() << '\n';
    return e.exit_code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
