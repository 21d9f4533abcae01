#include "evplan/calibration.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <future>
#include <stdexcept>

#include "evplan/supply.hpp"
#include "evplan/text.hpp"

namespace evplan {

void ObservationSeries::validate() const {
  for (size_t i = 0; i < points.size(); ++i) {
    if (!std::isfinite(points[i].first) || !std::isfinite(points[i].second)) {
      throw std::invalid_argument("ObservationSeries: non-finite point");
    }
    if (points[i].second < 0.0) {
      throw std::invalid_argument("ObservationSeries: negative value");
    }
    if (i > 0 && !(points[i].first > points[i - 1].first)) {
      throw std::invalid_argument(
          "ObservationSeries: years must be strictly increasing");
    }
  }
}

namespace {

// Multi-start grid covering the parameter ranges reported across the
// diffusion literature.
constexpr double kStartP[] = {1e-3, 5e-3, 0.01, 0.03};
constexpr double kStartQ[] = {0.2, 0.38, 0.5, 0.7};

BassParams bass_from_vector(const Eigen::VectorXd& v, std::optional<double> fixed_origin) {
  BassParams b;
  b.p = v[0];
  b.q = v[1];
  b.m = v[2];
  b.t_origin = fixed_origin ? *fixed_origin : v[3];
  return b;
}

}  // namespace

FitResult<BassParams> fit_bass(const ObservationSeries& series,
                               const BassFitOptions& options) {
  series.validate();
  if (series.points.size() < 4) {
    throw std::invalid_argument("fit_bass: need at least 4 observations");
  }
  auto warn = series.warnings;
  for (size_t i = 1; i < series.points.size(); ++i) {
    if (series.points[i].second < series.points[i - 1].second) {
      warn.push_back("cumulative value decreases at year " +
                     format_double(series.points[i].first));
    }
  }

  const double first_year = series.points.front().first;
  const double last_year = series.points.back().first;
  double first_nonzero = first_year;
  for (const auto& [year, value] : series.points) {
    if (value > 0.0) {
      first_nonzero = year;
      break;
    }
  }
  double peak_value = 0.0;
  for (const auto& [year, value] : series.points) {
    peak_value = std::max(peak_value, value);
  }
  const double m_init = std::max(2.0 * series.points.back().second,
                                 std::max(peak_value, 1e-9));

  const bool fit_origin = !options.fixed_t_origin.has_value();
  const int dim = fit_origin ? 4 : 3;
  Eigen::VectorXd lower(dim), upper(dim);
  lower[0] = 1e-8; upper[0] = 5.0;   // p
  lower[1] = 1e-8; upper[1] = 5.0;   // q
  lower[2] = 1e-9; upper[2] = 1e12;  // m
  if (fit_origin) {
    lower[3] = first_year - 100.0;
    upper[3] = last_year;
  }

  auto residual_for = [&](const Eigen::VectorXd& v) {
    BassParams b = bass_from_vector(v, options.fixed_t_origin);
    Eigen::VectorXd r(static_cast<int>(series.points.size()));
    int i = 0;
    for (const auto& [year, value] : series.points) {
      const double t = year - b.t_origin;
      const double model = options.fit_rates ? adoption_rate(b, t)
                                             : cumulative_adoption(b, t);
      r[i++] = model - value;
    }
    return r;
  };

  struct Start {
    Eigen::VectorXd init;
    NlsResult result;
    bool ok = false;
  };
  std::vector<Start> starts;
  for (double p0 : kStartP) {
    for (double q0 : kStartQ) {
      Eigen::VectorXd init(dim);
      init[0] = p0;
      init[1] = q0;
      init[2] = m_init;
      if (fit_origin) init[3] = first_nonzero;
      starts.push_back({init, {}, false});
    }
  }

  auto run_start = [&](Start& s) {
    try {
      s.result = nls_minimize(residual_for, s.init, lower, upper, options.nls);
      s.ok = true;
    } catch (const std::exception&) {
      s.ok = false;
    }
  };

  const int threads = std::max(1, options.threads);
  if (threads == 1) {
    for (auto& s : starts) run_start(s);
  } else {
    std::vector<std::future<void>> jobs;
    std::atomic<size_t> next{0};
    for (int w = 0; w < std::min<int>(threads, static_cast<int>(starts.size())); ++w) {
      jobs.push_back(std::async(std::launch::async, [&]() {
        for (size_t i = next.fetch_add(1); i < starts.size(); i = next.fetch_add(1)) {
          run_start(starts[i]);
        }
      }));
    }
    for (auto& j : jobs) j.get();
  }

  // Winner selection is (SSE, start index): byte-identical regardless of the
  // worker count.
  int best = -1;
  for (int i = 0; i < static_cast<int>(starts.size()); ++i) {
    if (!starts[i].ok) continue;
    if (best < 0 || starts[i].result.sse < starts[best].result.sse) best = i;
  }
  if (best < 0) {
    throw std::runtime_error("fit_bass: every start failed to evaluate");
  }

  const NlsResult& win = starts[best].result;
  FitResult<BassParams> out;
  out.params = bass_from_vector(win.params, options.fixed_t_origin);
  out.sse = win.sse;
  out.iterations = win.iterations;
  out.converged = win.converged;
  out.notes = std::move(warn);
  if (win.used_fallback) out.notes.push_back("derivative-free fallback used");
  if (!win.converged) {
    out.notes.push_back("fit did not converge; best-effort parameters");
  }
  Eigen::VectorXd r = residual_for(win.params);
  out.residuals.assign(r.data(), r.data() + r.size());
  return out;
}

Timeline derive_timeline(const BassParams& params) {
  const double peak = peak_time(params);  // validates q > p
  const auto [ip_minus, ip_plus] = inflection_times(params);
  Timeline tl;
  tl.t_peak = params.t_origin + peak;
  tl.t_ip_minus = params.t_origin + ip_minus;
  tl.t_ip_plus = params.t_origin + ip_plus;
  tl.t0 = params.t_origin;
  return tl;
}

FitResult<NetFlowPoly> fit_inconvenience(const ObservationSeries& series,
                                         const BassParams& bass,
                                         const PolyFitOptions& options) {
  series.validate();
  bass.validate();
  if (series.points.size() < 3) {
    throw std::invalid_argument("fit_inconvenience: need at least 3 observations");
  }

  // The supply curve keeps the demand clock: t0 = 0 on the bass clock.
  const double span = series.points.back().first - series.points.front().first;
  const double t2_min = 1e-3;
  const double t2_max = std::max(4.0 * span, 50.0);

  auto model_supply = [&](double rho, double t2, double t) {
    SupplyModel m{bass, NetFlowPoly{rho, 0.0, std::max(t2, t2_min), {}}};
    return cumulative_supply(m, t);
  };
  auto residual_for = [&](const Eigen::VectorXd& v) {
    Eigen::VectorXd r(static_cast<int>(series.points.size()));
    int i = 0;
    for (const auto& [year, value] : series.points) {
      r[i++] = model_supply(v[0], v[1], year - bass.t_origin) - value;
    }
    return r;
  };

  // Initial guess from the largest observed demand-supply gap: the peak queue
  // of the cubic is |rho| (t2 - t0)^3 / 6 at t2.
  double peak_gap = 0.0, peak_gap_t = 0.5 * span;
  for (const auto& [year, value] : series.points) {
    const double t = year - bass.t_origin;
    const double gap = cumulative_adoption(bass, t) - value;
    if (std::abs(gap) > std::abs(peak_gap)) {
      peak_gap = gap;
      peak_gap_t = t;
    }
  }
  Eigen::VectorXd init(2), lower(2), upper(2);
  const double t2_init = std::clamp(peak_gap_t, t2_min, t2_max);
  init[1] = t2_init;
  init[0] = t2_init > 0.0 ? -6.0 * peak_gap / (t2_init * t2_init * t2_init) : 0.0;
  lower[0] = -1e9; upper[0] = 1e9;
  lower[1] = t2_min; upper[1] = t2_max;

  NlsResult fit = nls_minimize(residual_for, init, lower, upper, options.nls);

  FitResult<NetFlowPoly> out;
  out.params = NetFlowPoly{fit.params[0], 0.0, fit.params[1], {}};
  out.sse = fit.sse;
  out.iterations = fit.iterations;
  out.converged = fit.converged;
  Eigen::VectorXd r = residual_for(fit.params);
  out.residuals.assign(r.data(), r.data() + r.size());
  out.notes = series.warnings;
  if (fit.used_fallback) out.notes.push_back("derivative-free fallback used");

  const bool episode_detectable = std::abs(out.params.rho) > 1e-12;
  if (episode_detectable && out.params.t2 <= t2_min + 1e-9) {
    throw std::runtime_error(
        "fit_inconvenience: no inconvenience episode detectable (t2 -> t0)");
  }
  return out;
}

}  // namespace evplan
