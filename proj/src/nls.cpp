#include "evplan/nls.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace evplan {

namespace {

Eigen::VectorXd clip(Eigen::VectorXd x, const Eigen::VectorXd& lo,
                     const Eigen::VectorXd& hi) {
  for (int i = 0; i < x.size(); ++i) x[i] = std::clamp(x[i], lo[i], hi[i]);
  return x;
}

double sse_of(const Eigen::VectorXd& r) { return r.squaredNorm(); }

bool finite(const Eigen::VectorXd& v) { return v.allFinite(); }

/// Forward-difference Jacobian; steps flip direction at the upper bound so
/// evaluations stay inside the box.
Eigen::MatrixXd jacobian(const ResidualFn& f, const Eigen::VectorXd& x,
                         const Eigen::VectorXd& r0, const Eigen::VectorXd& lo,
                         const Eigen::VectorXd& hi) {
  const int n = static_cast<int>(x.size());
  const int m = static_cast<int>(r0.size());
  Eigen::MatrixXd J(m, n);
  for (int j = 0; j < n; ++j) {
    double h = 1e-7 * std::max(std::abs(x[j]), 1.0);
    Eigen::VectorXd xs = x;
    if (x[j] + h > hi[j] && x[j] - h >= lo[j]) h = -h;
    xs[j] = std::clamp(x[j] + h, lo[j], hi[j]);
    const double actual = xs[j] - x[j];
    if (actual == 0.0) {
      J.col(j).setZero();
      continue;
    }
    Eigen::VectorXd r = f(xs);
    if (!finite(r)) {
      J.col(j).setZero();
      continue;
    }
    J.col(j) = (r - r0) / actual;
  }
  return J;
}

struct NmPoint {
  Eigen::VectorXd x;
  double f;
};

/// Bounded Nelder-Mead on the SSE, used when the Jacobian cannot support a
/// least-squares step.
NlsResult nelder_mead(const ResidualFn& residual, const Eigen::VectorXd& init,
                      const Eigen::VectorXd& lo, const Eigen::VectorXd& hi,
                      const NlsOptions& options) {
  const int n = static_cast<int>(init.size());
  auto eval = [&](const Eigen::VectorXd& x) {
    Eigen::VectorXd r = residual(x);
    return finite(r) ? sse_of(r) : std::numeric_limits<double>::infinity();
  };

  std::vector<NmPoint> simplex;
  simplex.push_back({init, eval(init)});
  for (int j = 0; j < n; ++j) {
    Eigen::VectorXd v = init;
    double step = 0.05 * std::max(std::abs(init[j]), 1.0);
    if (v[j] + step > hi[j]) step = -step;
    v[j] = std::clamp(v[j] + step, lo[j], hi[j]);
    simplex.push_back({v, eval(v)});
  }
  auto order = [&]() {
    std::stable_sort(simplex.begin(), simplex.end(),
                     [](const NmPoint& a, const NmPoint& b) { return a.f < b.f; });
  };
  order();

  NlsResult out;
  out.used_fallback = true;
  int iter = 0;
  const int max_iter = std::max(options.max_iterations * 4, 200);
  for (; iter < max_iter; ++iter) {
    const double spread = simplex.back().f - simplex.front().f;
    double diameter = 0.0;
    for (int j = 1; j <= n; ++j) {
      diameter = std::max(diameter, (simplex[j].x - simplex[0].x).norm());
    }
    if (spread <= 1e-14 * (1.0 + std::abs(simplex.front().f)) &&
        diameter <= options.step_tol * (1.0 + simplex.front().x.norm())) {
      out.converged = true;
      break;
    }

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
    for (int j = 0; j < n; ++j) centroid += simplex[j].x;
    centroid /= n;

    auto make = [&](double coef) {
      return clip(centroid + coef * (centroid - simplex.back().x), lo, hi);
    };
    Eigen::VectorXd xr = make(1.0);
    double fr = eval(xr);
    if (fr < simplex.front().f) {
      Eigen::VectorXd xe = make(2.0);
      double fe = eval(xe);
      simplex.back() = fe < fr ? NmPoint{xe, fe} : NmPoint{xr, fr};
    } else if (fr < simplex[n - 1].f) {
      simplex.back() = {xr, fr};
    } else {
      Eigen::VectorXd xc = clip(centroid - 0.5 * (centroid - simplex.back().x), lo, hi);
      double fc = eval(xc);
      if (fc < simplex.back().f) {
        simplex.back() = {xc, fc};
      } else {
        for (int j = 1; j <= n; ++j) {
          simplex[j].x = clip(simplex[0].x + 0.5 * (simplex[j].x - simplex[0].x), lo, hi);
          simplex[j].f = eval(simplex[j].x);
        }
      }
    }
    order();
  }
  out.params = simplex.front().x;
  out.sse = simplex.front().f;
  out.iterations = iter;
  out.message = out.converged ? "nelder-mead converged" : "nelder-mead iteration limit";
  return out;
}

}  // namespace

NlsResult nls_minimize(const ResidualFn& residual, Eigen::VectorXd init,
                       const Eigen::VectorXd& lower,
                       const Eigen::VectorXd& upper,
                       const NlsOptions& options) {
  const int n = static_cast<int>(init.size());
  if (lower.size() != n || upper.size() != n) {
    throw std::invalid_argument("nls_minimize: bound dimension mismatch");
  }
  for (int i = 0; i < n; ++i) {
    if (!(lower[i] <= upper[i])) {
      throw std::invalid_argument("nls_minimize: empty bound interval");
    }
  }
  Eigen::VectorXd x = clip(std::move(init), lower, upper);
  Eigen::VectorXd r = residual(x);
  if (!finite(r)) {
    throw std::invalid_argument("nls_minimize: non-finite residual at init");
  }
  double sse = sse_of(r);

  Eigen::MatrixXd J = jacobian(residual, x, r, lower, upper);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(J);
  qr.setThreshold(1e-12);
  if (qr.rank() < n) {
    return nelder_mead(residual, x, lower, upper, options);
  }

  NlsResult out;
  double lambda = options.lambda_init;
  int iter = 0;
  for (; iter < options.max_iterations; ++iter) {
    const Eigen::VectorXd grad = J.transpose() * r;
    // Projected gradient: components pushing against an active bound are
    // not reducible, so they do not block convergence.
    Eigen::VectorXd proj = grad;
    for (int i = 0; i < n; ++i) {
      if (x[i] <= lower[i] && grad[i] > 0.0) proj[i] = 0.0;
      if (x[i] >= upper[i] && grad[i] < 0.0) proj[i] = 0.0;
    }
    if (proj.lpNorm<Eigen::Infinity>() < options.grad_tol) {
      out.converged = true;
      out.message = "gradient below tolerance";
      break;
    }
    Eigen::MatrixXd jtj = J.transpose() * J;
    Eigen::VectorXd damping = jtj.diagonal().cwiseMax(1e-12);

    bool accepted = false;
    while (!accepted) {
      Eigen::MatrixXd system = jtj;
      system.diagonal() += lambda * damping;
      const Eigen::VectorXd step = system.ldlt().solve(-grad);
      const Eigen::VectorXd candidate = clip(x + step, lower, upper);
      const Eigen::VectorXd rc = residual(candidate);
      const double sse_c = finite(rc) ? sse_of(rc) : std::numeric_limits<double>::infinity();
      if (sse_c < sse) {
        const double move = (candidate - x).norm();
        x = candidate;
        r = rc;
        sse = sse_c;
        lambda = std::max(lambda * 0.3, 1e-14);
        accepted = true;
        if (move < options.step_tol * (1.0 + x.norm())) {
          out.converged = true;
          out.message = "step below tolerance";
        }
      } else {
        lambda *= 10.0;
        if (lambda > 1e14) break;
      }
    }
    if (out.converged) {
      ++iter;
      break;
    }
    if (!accepted) {
      // No descent direction with damping maxed out; try the derivative-free
      // fallback from the best point so far.
      NlsResult nm = nelder_mead(residual, x, lower, upper, options);
      if (nm.sse < sse) {
        nm.iterations += iter;
        return nm;
      }
      out.message = "stalled (damping limit)";
      break;
    }
    J = jacobian(residual, x, r, lower, upper);
  }
  if (!out.converged && out.message.empty()) out.message = "iteration limit";
  out.params = x;
  out.sse = sse;
  out.iterations = iter;
  return out;
}

}  // namespace evplan
