#include "evplan/milp.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <ostream>
#include <queue>
#include <stdexcept>

#include "evplan/text.hpp"

namespace evplan {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

const char* to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::Optimal: return "optimal";
    case SolveStatus::Feasible: return "feasible";
    case SolveStatus::Infeasible: return "infeasible";
    case SolveStatus::BudgetInfeasible: return "budget infeasible";
    case SolveStatus::IterLimit: return "iteration limit";
  }
  return "?";
}

Relaxation build_relaxation(const MilpInstance& instance) {
  Relaxation rel;
  LinearProgram& lp = rel.lp;
  const int n_cand = static_cast<int>(instance.candidates.size());
  for (const auto& cand : instance.candidates) {
    lp.add_var(cand.cost, 0.0, 1.0);
  }
  for (const auto& net : instance.networks) {
    rel.x_offset.push_back(lp.num_vars);
    for (size_t a = 0; a < net.arcs.size(); ++a) lp.add_var(0.0, 0.0, kInf);
  }

  // Mass balance per path node: outflow - inflow = Flow at o, -Flow at d,
  // 0 at interior stops.
  for (size_t k = 0; k < instance.networks.size(); ++k) {
    const auto& net = instance.networks[k];
    const int o_row = lp.add_row(RowSense::EQ, net.flow);
    const int d_row = lp.add_row(RowSense::EQ, -net.flow);
    std::vector<int> stop_row(net.stop_candidate.size());
    for (size_t s = 0; s < net.stop_candidate.size(); ++s) {
      stop_row[s] = lp.add_row(RowSense::EQ, 0.0);
    }
    auto row_of = [&](int endpoint) {
      if (endpoint == kOrigin) return o_row;
      if (endpoint == kDest) return d_row;
      return stop_row[static_cast<size_t>(endpoint)];
    };
    for (size_t a = 0; a < net.arcs.size(); ++a) {
      const int col = rel.x_offset[k] + static_cast<int>(a);
      lp.add_entry(row_of(net.arcs[a].from), col, 1.0);
      lp.add_entry(row_of(net.arcs[a].to), col, -1.0);
    }
  }

  // Station capacity: total inflow (over all paths, arcs from o included)
  // can only pass through an open station.
  for (int i = 0; i < n_cand; ++i) {
    const int row = lp.add_row(RowSense::LE, 0.0);
    double cap = instance.candidates[i].capacity;
    if (!std::isfinite(cap)) cap = std::max(instance.total_flow, 1.0);
    lp.add_entry(row, i, -cap);
    for (size_t k = 0; k < instance.networks.size(); ++k) {
      const auto& net = instance.networks[k];
      for (size_t a = 0; a < net.arcs.size(); ++a) {
        const int to = net.arcs[a].to;
        if (to >= 0 && net.stop_candidate[static_cast<size_t>(to)] == i) {
          lp.add_entry(row, rel.x_offset[k] + static_cast<int>(a), 1.0);
        }
      }
    }
  }

  // Budget row.
  const int budget_row = lp.add_row(RowSense::LE, instance.p_max);
  for (int i = 0; i < n_cand; ++i) lp.add_entry(budget_row, i, 1.0);

  return rel;
}

namespace {

bool integer_costs(const MilpInstance& instance) {
  for (const auto& c : instance.candidates) {
    if (std::abs(c.cost - std::round(c.cost)) > 1e-12) return false;
  }
  return true;
}

Solution extract_solution(const MilpInstance& instance, const Relaxation& rel,
                          const LpSolution& lp_sol) {
  Solution sol;
  const int n_cand = static_cast<int>(instance.candidates.size());
  sol.y.resize(n_cand);
  sol.objective = 0.0;
  for (int i = 0; i < n_cand; ++i) {
    sol.y[i] = std::round(lp_sol.values[i]);
    sol.objective += instance.candidates[i].cost * sol.y[i];
  }
  sol.x.resize(instance.networks.size());
  for (size_t k = 0; k < instance.networks.size(); ++k) {
    const auto& net = instance.networks[k];
    sol.x[k].resize(net.arcs.size());
    for (size_t a = 0; a < net.arcs.size(); ++a) {
      double v = lp_sol.values[rel.x_offset[k] + static_cast<int>(a)];
      sol.x[k][a] = std::abs(v) < 1e-9 ? 0.0 : v;
    }
  }
  return sol;
}

/// Feasibility of the flow system with a fixed open set and the budget row
/// dropped; used to tell BudgetInfeasible from Infeasible.
bool feasible_all_open(const MilpInstance& instance) {
  Relaxation rel = build_relaxation(instance);
  const int n_cand = static_cast<int>(instance.candidates.size());
  for (int i = 0; i < n_cand; ++i) {
    rel.lp.lower[i] = 1.0;
    rel.lp.upper[i] = 1.0;
  }
  rel.lp.rhs.back() = static_cast<double>(n_cand);  // budget row relaxed
  return solve_lp(rel.lp).status == LpStatus::Optimal;
}

Solution diagnose_infeasible(const MilpInstance& instance) {
  Solution sol;
  if (feasible_all_open(instance)) {
    sol.status = SolveStatus::BudgetInfeasible;
    sol.note = "feasible when the budget row is relaxed (p_max = " +
               format_double(instance.p_max) + " binds)";
  } else {
    sol.status = SolveStatus::Infeasible;
    sol.note = "no feasible flow even with every station open";
  }
  return sol;
}

struct BbNode {
  double bound;
  long id;
  std::vector<std::pair<int, int>> fixed;  ///< (y index, 0/1)
};

struct NodeOrder {
  bool operator()(const BbNode& a, const BbNode& b) const {
    if (a.bound != b.bound) return a.bound > b.bound;
    return a.id > b.id;
  }
};

}  // namespace

Solution solve_bb(const MilpInstance& instance, const SolveOptions& options) {
  const int n_cand = static_cast<int>(instance.candidates.size());
  Relaxation rel = build_relaxation(instance);
  const bool int_costs = integer_costs(instance);
  const double gap = options.gap_abs.value_or(int_costs ? 0.0 : 1e-6);

  auto solve_node = [&](const std::vector<std::pair<int, int>>& fixed) {
    LinearProgram lp = rel.lp;
    for (auto [var, value] : fixed) {
      lp.lower[var] = value;
      lp.upper[var] = value;
    }
    return solve_lp(lp);
  };
  auto lower_bound = [&](double obj) {
    return int_costs ? std::ceil(obj - 1e-6) : obj;
  };

  Solution incumbent;
  bool have_incumbent = false;
  long nodes = 0;
  long next_id = 0;

  std::priority_queue<BbNode, std::vector<BbNode>, NodeOrder> open;
  {
    LpSolution root = solve_node({});
    assert(root.status != LpStatus::Unbounded);
    if (root.status != LpStatus::Optimal) {
      Solution sol = diagnose_infeasible(instance);
      sol.nodes = 1;
      return sol;
    }
    open.push({root.objective, next_id++, {}});
  }

  double best_open_bound = 0.0;
  while (!open.empty()) {
    BbNode node = open.top();
    open.pop();
    best_open_bound = node.bound;
    if (have_incumbent && lower_bound(node.bound) >= incumbent.objective - gap) {
      break;  // best-bound order: every remaining node is pruned too
    }
    if (++nodes > options.max_nodes) {
      Solution sol = have_incumbent ? incumbent : Solution{};
      sol.status = SolveStatus::IterLimit;
      sol.nodes = nodes;
      sol.bound_gap = have_incumbent ? incumbent.objective - node.bound : kInf;
      return sol;
    }

    LpSolution lp_sol = solve_node(node.fixed);
    if (lp_sol.status != LpStatus::Optimal) continue;
    if (have_incumbent &&
        lower_bound(lp_sol.objective) >= incumbent.objective - gap) {
      continue;
    }

    // most fractional y, ties to the lowest candidate index
    int branch_var = -1;
    double best_frac = options.int_tol;
    for (int i = 0; i < n_cand; ++i) {
      const double f = std::abs(lp_sol.values[i] - std::round(lp_sol.values[i]));
      if (f > best_frac + 1e-12) {
        branch_var = i;
        best_frac = f;
      }
    }
    if (branch_var < 0) {
      Solution sol = extract_solution(instance, rel, lp_sol);
      if (!have_incumbent || sol.objective < incumbent.objective - 1e-12) {
        incumbent = sol;
        have_incumbent = true;
        if (options.verbosity > 0 && options.log) {
          *options.log << "node " << nodes << " incumbent "
                       << format_double(incumbent.objective) << "\n";
        }
      }
      continue;
    }
    if (options.verbosity > 1 && options.log) {
      *options.log << "node " << nodes << " bound "
                   << format_double(lp_sol.objective) << " branch y"
                   << branch_var << "\n";
    }
    for (int value : {0, 1}) {  // down branch first
      BbNode child;
      child.bound = lp_sol.objective;
      child.id = next_id++;
      child.fixed = node.fixed;
      child.fixed.emplace_back(branch_var, value);
      open.push(std::move(child));
    }
  }

  if (!have_incumbent) {
    Solution sol = diagnose_infeasible(instance);
    sol.nodes = nodes;
    return sol;
  }
  incumbent.status = SolveStatus::Optimal;
  incumbent.nodes = nodes;
  incumbent.bound_gap = 0.0;
  if (options.verbosity > 0 && options.log) {
    *options.log << "optimal " << format_double(incumbent.objective) << " after "
                 << nodes << " nodes\n";
  }
  return incumbent;
}

namespace {

/// Can the path reach d through open stations only? (capacity ignored)
bool reachable(const MilpInstance::PathNet& net, const std::vector<char>& open_mask) {
  if (!net.feasible_by_construction) return false;
  const int n = static_cast<int>(net.stop_candidate.size());
  std::vector<char> seen(static_cast<size_t>(n) + 1, 0);  // last slot = origin
  seen[static_cast<size_t>(n)] = 1;
  bool grew = true;
  auto idx = [&](int endpoint) { return endpoint == kOrigin ? n : endpoint; };
  while (grew) {
    grew = false;
    for (const auto& arc : net.arcs) {
      if (!seen[static_cast<size_t>(idx(arc.from))]) continue;
      if (arc.to == kDest) return true;
      const int cand = net.stop_candidate[static_cast<size_t>(arc.to)];
      if (!open_mask[static_cast<size_t>(cand)]) continue;
      if (!seen[static_cast<size_t>(arc.to)]) {
        seen[static_cast<size_t>(arc.to)] = 1;
        grew = true;
      }
    }
  }
  return false;
}

}  // namespace

Solution brute_force(const MilpInstance& instance) {
  const int n_cand = static_cast<int>(instance.candidates.size());
  if (n_cand > 20) {
    throw std::invalid_argument("brute_force: more than 20 candidates");
  }
  Relaxation rel = build_relaxation(instance);

  struct Entry {
    double cost;
    unsigned mask;
  };
  std::vector<Entry> order;
  order.reserve(1u << n_cand);
  for (unsigned mask = 0; mask < (1u << n_cand); ++mask) {
    if (static_cast<double>(__builtin_popcount(mask)) > instance.p_max + 1e-9) continue;
    double cost = 0.0;
    for (int i = 0; i < n_cand; ++i) {
      if (mask & (1u << i)) cost += instance.candidates[i].cost;
    }
    order.push_back({cost, mask});
  }
  std::sort(order.begin(), order.end(), [](const Entry& a, const Entry& b) {
    if (a.cost != b.cost) return a.cost < b.cost;
    return a.mask < b.mask;
  });

  for (const auto& entry : order) {
    std::vector<char> open_mask(n_cand, 0);
    for (int i = 0; i < n_cand; ++i) open_mask[i] = (entry.mask >> i) & 1u;
    bool candidate_ok = true;
    for (const auto& net : instance.networks) {
      if (net.flow <= 0.0) continue;
      if (!reachable(net, open_mask)) {
        candidate_ok = false;
        break;
      }
    }
    if (!candidate_ok) continue;

    LinearProgram lp = rel.lp;
    for (int i = 0; i < n_cand; ++i) {
      lp.lower[i] = open_mask[i];
      lp.upper[i] = open_mask[i];
    }
    LpSolution lp_sol = solve_lp(lp);
    if (lp_sol.status != LpStatus::Optimal) continue;
    Solution sol = extract_solution(instance, rel, lp_sol);
    sol.status = SolveStatus::Optimal;
    sol.nodes = static_cast<long>(&entry - order.data()) + 1;
    return sol;
  }
  return diagnose_infeasible(instance);
}

namespace {

/// Maximum weekly flow that can be served with the given open set: per-path
/// served amount t_k in [0, Flow_k] replaces the fixed mass-balance rhs.
double routable_flow(const MilpInstance& instance, const std::vector<char>& open_mask) {
  LinearProgram lp;
  std::vector<int> x_offset;
  const int n_cand = static_cast<int>(instance.candidates.size());
  std::vector<int> served(instance.networks.size());
  for (size_t k = 0; k < instance.networks.size(); ++k) {
    served[k] = lp.add_var(-1.0, 0.0, instance.networks[k].flow);  // maximize
  }
  for (size_t k = 0; k < instance.networks.size(); ++k) {
    const auto& net = instance.networks[k];
    x_offset.push_back(lp.num_vars);
    for (size_t a = 0; a < net.arcs.size(); ++a) lp.add_var(0.0, 0.0, kInf);
  }
  for (size_t k = 0; k < instance.networks.size(); ++k) {
    const auto& net = instance.networks[k];
    const int o_row = lp.add_row(RowSense::EQ, 0.0);
    const int d_row = lp.add_row(RowSense::EQ, 0.0);
    lp.add_entry(o_row, served[k], -1.0);
    lp.add_entry(d_row, served[k], 1.0);
    std::vector<int> stop_row(net.stop_candidate.size());
    for (size_t s = 0; s < net.stop_candidate.size(); ++s) {
      stop_row[s] = lp.add_row(RowSense::EQ, 0.0);
    }
    auto row_of = [&](int endpoint) {
      if (endpoint == kOrigin) return o_row;
      if (endpoint == kDest) return d_row;
      return stop_row[static_cast<size_t>(endpoint)];
    };
    for (size_t a = 0; a < net.arcs.size(); ++a) {
      const int col = x_offset[k] + static_cast<int>(a);
      lp.add_entry(row_of(net.arcs[a].from), col, 1.0);
      lp.add_entry(row_of(net.arcs[a].to), col, -1.0);
    }
  }
  for (int i = 0; i < n_cand; ++i) {
    const int row = lp.add_row(RowSense::LE,
                               open_mask[i] ? instance.candidates[i].capacity : 0.0);
    if (!std::isfinite(lp.rhs[row])) lp.rhs[row] = std::max(instance.total_flow, 1.0);
    for (size_t k = 0; k < instance.networks.size(); ++k) {
      const auto& net = instance.networks[k];
      for (size_t a = 0; a < net.arcs.size(); ++a) {
        const int to = net.arcs[a].to;
        if (to >= 0 && net.stop_candidate[static_cast<size_t>(to)] == i) {
          lp.add_entry(row, x_offset[k] + static_cast<int>(a), 1.0);
        }
      }
    }
  }
  LpSolution sol = solve_lp(lp);
  return sol.status == LpStatus::Optimal ? -sol.objective : 0.0;
}

}  // namespace

Solution greedy_add(const MilpInstance& instance) {
  const int n_cand = static_cast<int>(instance.candidates.size());
  std::vector<char> open_mask(n_cand, 0);
  int open_count = 0;
  double served = routable_flow(instance, open_mask);
  long evaluations = 1;

  while (served < instance.total_flow - 1e-6 &&
         open_count < static_cast<int>(std::floor(instance.p_max + 1e-9))) {
    int best = -1;
    double best_score = 0.0, best_gain = 0.0;
    for (int c = 0; c < n_cand; ++c) {
      if (open_mask[c]) continue;
      open_mask[c] = 1;
      const double gain = routable_flow(instance, open_mask) - served;
      ++evaluations;
      open_mask[c] = 0;
      const double cost = std::max(instance.candidates[c].cost, 1e-12);
      const double score = gain / cost;
      if (score > best_score + 1e-9) {
        best = c;
        best_score = score;
        best_gain = gain;
      }
    }
    if (best < 0 || best_gain <= 1e-9) break;  // no candidate helps
    open_mask[best] = 1;
    ++open_count;
    served = routable_flow(instance, open_mask);
    ++evaluations;
  }

  Solution sol;
  sol.nodes = evaluations;
  if (served < instance.total_flow - 1e-6) {
    sol.status = SolveStatus::Infeasible;
    sol.note = "greedy saturated at " + format_double(served) + " of " +
               format_double(instance.total_flow) + " vehicles/week";
    return sol;
  }

  // final flow assignment with the chosen stations fixed
  Relaxation rel = build_relaxation(instance);
  LinearProgram lp = rel.lp;
  for (int i = 0; i < n_cand; ++i) {
    lp.lower[i] = open_mask[i];
    lp.upper[i] = open_mask[i];
  }
  LpSolution lp_sol = solve_lp(lp);
  if (lp_sol.status != LpStatus::Optimal) {
    sol.status = SolveStatus::Infeasible;
    sol.note = "greedy open set admits no feasible flow";
    return sol;
  }
  sol = extract_solution(instance, rel, lp_sol);
  sol.status = SolveStatus::Feasible;
  sol.nodes = evaluations;
  sol.note = "greedy heuristic; no optimality proof";
  return sol;
}

}  // namespace evplan
