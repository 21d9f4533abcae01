#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "evplan/lp.hpp"
#include "evplan/path_network.hpp"

namespace evplan {

enum class SolveStatus {
  Optimal,           ///< proven optimum
  Feasible,          ///< heuristic solution without an optimality proof
  Infeasible,        ///< no feasible flow even with every station open
  BudgetInfeasible,  ///< feasible without the budget row, infeasible with it
  IterLimit,
};

const char* to_string(SolveStatus status);

/// Station plan: open indicators per candidate and per-path arc flows.
struct Solution {
  SolveStatus status = SolveStatus::Infeasible;
  std::vector<double> y;               ///< per candidate, 0/1
  std::vector<std::vector<double>> x;  ///< per network, per arc
  double objective = 0.0;
  double bound_gap = 0.0;
  long nodes = 0;
  std::string note;
};

struct SolveOptions {
  double int_tol = 1e-6;
  /// Absolute branch-and-bound gap; defaults to 0 for integer cost data and
  /// 1e-6 otherwise.
  std::optional<double> gap_abs;
  long max_nodes = 1000000;
  int verbosity = 0;
  std::ostream* log = nullptr;
};

/// LP relaxation of the station-selection model: per-path mass balance,
/// inflow-capacity coupling (sum of inflows <= Cap_i y_i), the station budget
/// row, x >= 0 and 0 <= y <= 1. Variable layout: y block first (one per
/// candidate), then one x block per network in arc order.
struct Relaxation {
  LinearProgram lp;
  std::vector<int> x_offset;  ///< first x column per network
};
Relaxation build_relaxation(const MilpInstance& instance);

/// Best-bound branch and bound on the station binaries, branching on the most
/// fractional y (ties: lowest candidate index) with the down branch first.
/// Deterministic: identical instances produce identical solutions.
Solution solve_bb(const MilpInstance& instance, const SolveOptions& options = {});

/// Exhaustive oracle: tries station subsets in increasing cost order and
/// returns the first one admitting a feasible flow. Refuses more than 20
/// candidates.
Solution brute_force(const MilpInstance& instance);

/// Greedy heuristic: repeatedly opens the candidate with the best newly
/// routable flow per unit cost until every path is served or no candidate
/// helps. Feasible, not necessarily optimal.
Solution greedy_add(const MilpInstance& instance);

}  // namespace evplan
