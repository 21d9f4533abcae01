#include "evplan/diffusion.hpp"

#include <cmath>
#include <stdexcept>

namespace evplan {

namespace {
constexpr double kSafeExponent = 700.0;  // exp() overflows near 709
}

void BassParams::validate() const {
  if (!(std::isfinite(p) && std::isfinite(q) && std::isfinite(m) &&
        std::isfinite(t_origin))) {
    throw std::invalid_argument("BassParams: non-finite field");
  }
  if (p <= 0.0) throw std::invalid_argument("BassParams: p must be > 0");
  if (q <= 0.0) throw std::invalid_argument("BassParams: q must be > 0");
  if (m <= 0.0) throw std::invalid_argument("BassParams: m must be > 0");
}

double cumulative_adoption(const BassParams& params, double t) {
  if (!std::isfinite(t)) {
    throw std::domain_error("cumulative_adoption: non-finite t");
  }
  const double x = (params.p + params.q) * t;
  if (x >= 0.0) {
    const double e = std::exp(-x);  // underflows to 0 for large x
    return params.m * (1.0 - e) / (1.0 + (params.q / params.p) * e);
  }
  if (x < -kSafeExponent) {
    // algebraic limit as t -> -inf
    return -params.m * params.p / params.q;
  }
  const double e = std::exp(x);
  return params.m * (e - 1.0) / (e + params.q / params.p);
}

double adoption_rate(const BassParams& params, double t) {
  if (!std::isfinite(t)) {
    throw std::domain_error("adoption_rate: non-finite t");
  }
  const double p = params.p, q = params.q;
  const double s = p + q;
  const double x = s * t;
  if (std::abs(x) > kSafeExponent) return 0.0;  // limit at t -> +-inf
  if (x >= 0.0) {
    const double e = std::exp(-x);
    const double den = p + q * e;
    return params.m * p * s * s * e / (den * den);
  }
  const double e = std::exp(x);
  const double den = p * e + q;
  return params.m * p * s * s * e / (den * den);
}

double peak_time(const BassParams& params) {
  params.validate();
  if (!(params.q > params.p)) {
    throw std::domain_error("peak_time: no interior peak (requires q > p)");
  }
  return std::log(params.q / params.p) / (params.p + params.q);
}

std::pair<double, double> inflection_times(const BassParams& params) {
  const double peak = peak_time(params);
  const double offset = std::log(2.0 + std::sqrt(3.0)) / (params.p + params.q);
  return {peak - offset, peak + offset};
}

}  // namespace evplan
