#pragma once

#include <string>
#include <vector>

namespace evplan {

enum class RowSense { LE, EQ, GE };

/// Minimization LP in sparse triplet form with per-variable bounds
/// (+-infinity allowed).
struct LinearProgram {
  int num_vars = 0;
  std::vector<double> objective;
  struct Triplet {
    int row;
    int col;
    double value;
  };
  std::vector<Triplet> entries;
  std::vector<RowSense> senses;
  std::vector<double> rhs;
  std::vector<double> lower;
  std::vector<double> upper;

  int add_var(double cost, double lo, double hi);
  int add_row(RowSense sense, double rhs_value);
  void add_entry(int row, int col, double value);
  int num_rows() const { return static_cast<int>(rhs.size()); }
  void validate() const;
};

enum class LpStatus { Optimal, Infeasible, Unbounded, IterLimit };

const char* to_string(LpStatus status);

struct LpSolution {
  LpStatus status = LpStatus::IterLimit;
  std::vector<double> values;  ///< structural variables
  double objective = 0.0;
  std::vector<double> duals;  ///< one price per row
  long iterations = 0;
};

struct SimplexOptions {
  double feas_tol = 1e-9;
  double opt_tol = 1e-9;
  long max_iters = 0;  ///< 0 = automatic from problem size
};

/// Two-phase bounded-variable primal simplex on a dense tableau. Pricing is
/// largest reduced cost; Bland's rule takes over after 50 * rows degenerate
/// pivots to rule out cycling.
LpSolution solve_lp(const LinearProgram& lp, const SimplexOptions& options = {});

}  // namespace evplan
