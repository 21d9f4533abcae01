#include "evplan/lp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace evplan {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

int LinearProgram::add_var(double cost, double lo, double hi) {
  objective.push_back(cost);
  lower.push_back(lo);
  upper.push_back(hi);
  return num_vars++;
}

int LinearProgram::add_row(RowSense sense, double rhs_value) {
  senses.push_back(sense);
  rhs.push_back(rhs_value);
  return static_cast<int>(rhs.size()) - 1;
}

void LinearProgram::add_entry(int row, int col, double value) {
  entries.push_back({row, col, value});
}

void LinearProgram::validate() const {
  if (static_cast<int>(objective.size()) != num_vars ||
      static_cast<int>(lower.size()) != num_vars ||
      static_cast<int>(upper.size()) != num_vars) {
    throw std::invalid_argument("LinearProgram: inconsistent variable arrays");
  }
  if (senses.size() != rhs.size()) {
    throw std::invalid_argument("LinearProgram: inconsistent row arrays");
  }
  for (int j = 0; j < num_vars; ++j) {
    if (std::isnan(lower[j]) || std::isnan(upper[j]) || lower[j] > upper[j]) {
      throw std::invalid_argument("LinearProgram: bad bounds on variable " +
                                  std::to_string(j));
    }
    if (!std::isfinite(objective[j])) {
      throw std::invalid_argument("LinearProgram: non-finite objective");
    }
  }
  for (const auto& e : entries) {
    if (e.row < 0 || e.row >= num_rows() || e.col < 0 || e.col >= num_vars ||
        !std::isfinite(e.value)) {
      throw std::invalid_argument("LinearProgram: bad triplet");
    }
  }
  for (double b : rhs) {
    if (!std::isfinite(b)) {
      throw std::invalid_argument("LinearProgram: non-finite rhs");
    }
  }
}

const char* to_string(LpStatus status) {
  switch (status) {
    case LpStatus::Optimal: return "optimal";
    case LpStatus::Infeasible: return "infeasible";
    case LpStatus::Unbounded: return "unbounded";
    case LpStatus::IterLimit: return "iteration limit";
  }
  return "?";
}

namespace {

enum class VarState : unsigned char { Basic, AtLower, AtUpper, FreeZero };

class Simplex {
 public:
  Simplex(const LinearProgram& lp, const SimplexOptions& options)
      : opts_(options), m_(lp.num_rows()), n_struct_(lp.num_vars) {
    n_ = n_struct_ + m_ + m_;  // structural + slack + artificial
    lower_.assign(n_, 0.0);
    upper_.assign(n_, 0.0);
    cost_.assign(n_, 0.0);
    for (int j = 0; j < n_struct_; ++j) {
      lower_[j] = lp.lower[j];
      upper_[j] = lp.upper[j];
      cost_[j] = lp.objective[j];
    }
    for (int i = 0; i < m_; ++i) {
      const int s = slack(i);
      switch (lp.senses[i]) {
        case RowSense::LE: lower_[s] = 0.0; upper_[s] = kInf; break;
        case RowSense::GE: lower_[s] = -kInf; upper_[s] = 0.0; break;
        case RowSense::EQ: lower_[s] = 0.0; upper_[s] = 0.0; break;
      }
    }
    for (int i = 0; i < m_; ++i) {
      lower_[art(i)] = 0.0;
      upper_[art(i)] = kInf;
    }

    // Nonbasic start: every structural/slack variable at a finite bound.
    state_.assign(n_, VarState::AtLower);
    for (int j = 0; j < n_struct_ + m_; ++j) {
      if (std::isfinite(lower_[j])) {
        state_[j] = VarState::AtLower;
      } else if (std::isfinite(upper_[j])) {
        state_[j] = VarState::AtUpper;
      } else {
        state_[j] = VarState::FreeZero;
      }
    }

    // Row-major dense tableau B^{-1} A with B = diag(sign of initial residual).
    std::vector<double> residual(m_, 0.0);
    std::vector<double> dense(static_cast<size_t>(m_) * n_, 0.0);
    for (const auto& e : lp.entries) {
      dense[static_cast<size_t>(e.row) * n_ + e.col] += e.value;
    }
    for (int i = 0; i < m_; ++i) {
      dense[static_cast<size_t>(i) * n_ + slack(i)] = 1.0;
    }
    for (int i = 0; i < m_; ++i) {
      double acc = lp.rhs[i];
      for (int j = 0; j < n_struct_ + m_; ++j) {
        const double a = dense[static_cast<size_t>(i) * n_ + j];
        if (a != 0.0) acc -= a * nonbasic_value(j);
      }
      residual[i] = acc;
    }
    sign_.assign(m_, 1.0);
    basis_.assign(m_, 0);
    xB_.assign(m_, 0.0);
    for (int i = 0; i < m_; ++i) {
      sign_[i] = residual[i] >= 0.0 ? 1.0 : -1.0;
      dense[static_cast<size_t>(i) * n_ + art(i)] = sign_[i];
      basis_[i] = art(i);
      state_[art(i)] = VarState::Basic;
      xB_[i] = std::abs(residual[i]);
    }
    tab_ = std::move(dense);
    for (int i = 0; i < m_; ++i) {
      if (sign_[i] < 0.0) {
        double* row = &tab_[static_cast<size_t>(i) * n_];
        for (int j = 0; j < n_; ++j) row[j] = -row[j];
        // artificial column keeps +1 after the sign flip
      }
    }

    max_iters_ = opts_.max_iters > 0 ? opts_.max_iters
                                     : 100L * (m_ + n_) + 10000L;
  }

  LpSolution run(const LinearProgram& lp) {
    LpSolution out;

    // Phase 1: drive the artificial variables to zero.
    std::vector<double> phase1(n_, 0.0);
    for (int i = 0; i < m_; ++i) phase1[art(i)] = 1.0;
    LpStatus st = iterate(phase1);
    if (st == LpStatus::IterLimit) {
      out.status = st;
      out.iterations = iters_;
      return out;
    }
    double infeas = 0.0;
    for (int i = 0; i < m_; ++i) {
      if (basis_[i] >= art(0)) infeas += xB_[i];
    }
    double scale = 1.0;
    for (double b : lp.rhs) scale = std::max(scale, std::abs(b));
    if (infeas > opts_.feas_tol * scale) {
      out.status = LpStatus::Infeasible;
      out.iterations = iters_;
      return out;
    }

    // Phase 2: real objective, artificials pinned at zero.
    for (int i = 0; i < m_; ++i) upper_[art(i)] = 0.0;
    st = iterate(cost_);
    out.status = st;
    out.iterations = iters_;
    if (st != LpStatus::Optimal) return out;

    out.values.assign(n_struct_, 0.0);
    for (int j = 0; j < n_struct_; ++j) out.values[j] = value_of(j);
    out.objective = 0.0;
    for (int j = 0; j < n_struct_; ++j) {
      out.objective += lp.objective[j] * out.values[j];
    }
    out.duals.assign(m_, 0.0);
    for (int i = 0; i < m_; ++i) {
      double y = 0.0;
      for (int k = 0; k < m_; ++k) {
        const double c = cost_[basis_[k]];
        if (c != 0.0) y += c * tab_[static_cast<size_t>(k) * n_ + art(i)];
      }
      out.duals[i] = y * sign_[i];
    }
    return out;
  }

 private:
  int slack(int i) const { return n_struct_ + i; }
  int art(int i) const { return n_struct_ + m_ + i; }

  double nonbasic_value(int j) const {
    switch (state_[j]) {
      case VarState::AtLower: return lower_[j];
      case VarState::AtUpper: return upper_[j];
      default: return 0.0;
    }
  }

  double value_of(int j) const {
    if (state_[j] == VarState::Basic) {
      for (int i = 0; i < m_; ++i) {
        if (basis_[i] == j) return xB_[i];
      }
    }
    return nonbasic_value(j);
  }

  LpStatus iterate(const std::vector<double>& cost) {
    const long bland_threshold = 50L * std::max(m_, 1);
    long degenerate = 0;
    bool bland = false;
    while (iters_ < max_iters_) {
      // reduced costs d = c - c_B^T B^{-1} A, using the maintained tableau
      std::vector<double> z(n_, 0.0);
      for (int i = 0; i < m_; ++i) {
        const double cb = cost[basis_[i]];
        if (cb == 0.0) continue;
        const double* row = &tab_[static_cast<size_t>(i) * n_];
        for (int j = 0; j < n_; ++j) z[j] += cb * row[j];
      }

      int enter = -1;
      double best_score = opts_.opt_tol;
      int direction = +1;
      for (int j = 0; j < n_; ++j) {
        if (state_[j] == VarState::Basic) continue;
        if (lower_[j] == upper_[j]) continue;  // fixed
        const double d = cost[j] - z[j];
        double score = 0.0;
        int dir = +1;
        switch (state_[j]) {
          case VarState::AtLower: score = -d; dir = +1; break;
          case VarState::AtUpper: score = d; dir = -1; break;
          case VarState::FreeZero:
            score = std::abs(d);
            dir = d < 0.0 ? +1 : -1;
            break;
          default: break;
        }
        if (score > best_score + 1e-15) {
          enter = j;
          best_score = score;
          direction = dir;
          if (bland) break;  // first eligible (lowest index)
        } else if (bland && score > opts_.opt_tol && enter < 0) {
          enter = j;
          direction = dir;
          break;
        }
      }
      if (enter < 0) return LpStatus::Optimal;

      // ratio test
      const double range = upper_[enter] - lower_[enter];
      double theta = std::isfinite(range) ? range : kInf;
      int leave_row = -1;
      double leave_pivot = 0.0;
      bool leave_to_upper = false;
      for (int i = 0; i < m_; ++i) {
        const double t = tab_[static_cast<size_t>(i) * n_ + enter];
        const double coeff = -direction * t;
        if (std::abs(coeff) <= 1e-11) continue;
        const int b = basis_[i];
        double room, limit;
        bool to_upper;
        if (coeff > 0.0) {
          limit = upper_[b];
          room = limit - xB_[i];
          to_upper = true;
        } else {
          limit = lower_[b];
          room = xB_[i] - limit;
          to_upper = false;
        }
        if (!std::isfinite(limit)) continue;
        const double ratio = std::max(room, 0.0) / std::abs(coeff);
        const bool better =
            ratio < theta - 1e-12 ||
            (ratio < theta + 1e-12 && leave_row >= 0 &&
             (bland ? basis_[i] < basis_[leave_row]
                    : std::abs(t) > std::abs(leave_pivot)));
        if (better || (leave_row < 0 && ratio < theta - 1e-12)) {
          theta = std::min(theta, ratio);
          leave_row = i;
          leave_pivot = t;
          leave_to_upper = to_upper;
        }
      }
      if (!std::isfinite(theta)) return LpStatus::Unbounded;
      if (theta <= 1e-11) {
        if (++degenerate > bland_threshold) bland = true;
      }

      ++iters_;
      // move the entering variable by theta and adjust the basic values
      for (int i = 0; i < m_; ++i) {
        const double t = tab_[static_cast<size_t>(i) * n_ + enter];
        if (t != 0.0) xB_[i] -= direction * theta * t;
      }
      if (leave_row < 0) {
        // bound flip, no basis change
        state_[enter] = state_[enter] == VarState::AtLower ? VarState::AtUpper
                                                           : VarState::AtLower;
        continue;
      }
      const double enter_value = nonbasic_value(enter) + direction * theta;
      const int leaving = basis_[leave_row];
      state_[leaving] = leave_to_upper ? VarState::AtUpper : VarState::AtLower;
      state_[enter] = VarState::Basic;
      basis_[leave_row] = enter;
      xB_[leave_row] = enter_value;

      double* prow = &tab_[static_cast<size_t>(leave_row) * n_];
      const double piv = prow[enter];
      for (int j = 0; j < n_; ++j) prow[j] /= piv;
      for (int i = 0; i < m_; ++i) {
        if (i == leave_row) continue;
        double* row = &tab_[static_cast<size_t>(i) * n_];
        const double f = row[enter];
        if (f == 0.0) continue;
        for (int j = 0; j < n_; ++j) row[j] -= f * prow[j];
        row[enter] = 0.0;  // exact column of the identity
      }
      prow[enter] = 1.0;
    }
    return LpStatus::IterLimit;
  }

  SimplexOptions opts_;
  int m_;
  int n_struct_;
  int n_ = 0;
  std::vector<double> lower_, upper_, cost_;
  std::vector<VarState> state_;
  std::vector<int> basis_;
  std::vector<double> xB_;
  std::vector<double> sign_;
  std::vector<double> tab_;
  long iters_ = 0;
  long max_iters_ = 0;
};

}  // namespace

LpSolution solve_lp(const LinearProgram& lp, const SimplexOptions& options) {
  lp.validate();
  if (lp.num_rows() == 0) {
    // Box-constrained: each variable sits at its cheapest finite bound.
    LpSolution out;
    out.status = LpStatus::Optimal;
    out.values.assign(lp.num_vars, 0.0);
    for (int j = 0; j < lp.num_vars; ++j) {
      const double c = lp.objective[j];
      double v;
      if (c > 0.0) {
        v = lp.lower[j];
      } else if (c < 0.0) {
        v = lp.upper[j];
      } else {
        v = std::isfinite(lp.lower[j]) ? lp.lower[j]
            : std::isfinite(lp.upper[j]) ? lp.upper[j] : 0.0;
      }
      if (!std::isfinite(v)) {
        out.status = c == 0.0 ? LpStatus::Optimal : LpStatus::Unbounded;
        v = 0.0;
      }
      out.values[j] = v;
      out.objective += c * v;
    }
    return out;
  }
  Simplex simplex(lp, options);
  return simplex.run(lp);
}

}  // namespace evplan
