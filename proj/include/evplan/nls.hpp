#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>

namespace evplan {

struct NlsOptions {
  int max_iterations = 500;
  double step_tol = 1e-10;
  double grad_tol = 1e-8;
  double lambda_init = 1e-3;
};

struct NlsResult {
  Eigen::VectorXd params;
  double sse = 0.0;
  int iterations = 0;
  bool converged = false;
  bool used_fallback = false;  ///< Nelder-Mead path was taken
  std::string message;
};

using ResidualFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

/// Damped least squares with a numerically differenced Jacobian. Iterates are
/// projected into [lower, upper]; accepted steps never increase the SSE.
/// Falls back to a bounded Nelder-Mead search when the Jacobian is
/// rank-deficient. Throws std::invalid_argument when the residual is
/// non-finite at the (projected) initial point.
NlsResult nls_minimize(const ResidualFn& residual, Eigen::VectorXd init,
                       const Eigen::VectorXd& lower,
                       const Eigen::VectorXd& upper,
                       const NlsOptions& options = {});

}  // namespace evplan
