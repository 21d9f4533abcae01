#pragma once

#include <optional>
#include <string>
#include <vector>

#include "evplan/diffusion.hpp"
#include "evplan/fluid_queue.hpp"
#include "evplan/nls.hpp"

namespace evplan {

enum class SeriesKind { Demand, Supply };

/// Cumulative observations by calendar year. Decreasing values are kept but
/// flagged (data glitches happen); non-increasing years are rejected.
struct ObservationSeries {
  SeriesKind kind = SeriesKind::Demand;
  std::vector<std::pair<double, double>> points;  ///< (year, cumulative value)
  std::vector<std::string> warnings;

  void validate() const;
};

template <typename Params>
struct FitResult {
  Params params;
  double sse = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> residuals;
  std::vector<std::string> notes;
};

struct BassFitOptions {
  NlsOptions nls;
  /// Fit the adoption rate instead of the cumulative curve (observations are
  /// then rates per year).
  bool fit_rates = false;
  /// Pin the diffusion clock origin instead of fitting it.
  std::optional<double> fixed_t_origin;
  /// Worker cap for the multi-start sweep; result is thread-count independent.
  int threads = 1;
};

/// Fits (p, q, m) plus the clock origin to cumulative adoption data by
/// damped least squares from a coarse multi-start grid over (p, q).
/// Requires at least 4 points.
FitResult<BassParams> fit_bass(const ObservationSeries& series,
                               const BassFitOptions& options = {});

/// Calendar-year milestones derived from fitted diffusion coefficients.
struct Timeline {
  double t_peak = 0.0;
  double t_ip_minus = 0.0;
  double t_ip_plus = 0.0;
  double t0 = 0.0;  ///< shared start of the demand and supply curves
};
Timeline derive_timeline(const BassParams& params);

struct PolyFitOptions {
  NlsOptions nls;
};

/// Fits (rho, t2) of the net-inconvenience polynomial to cumulative supply
/// observations, with t0 pinned to the demand clock origin. The bass
/// parameters must already be in the supply series' units. Requires at least
/// 3 points; throws when the fitted episode collapses (t2 -> t0).
FitResult<NetFlowPoly> fit_inconvenience(const ObservationSeries& series,
                                         const BassParams& bass,
                                         const PolyFitOptions& options = {});

}  // namespace evplan
