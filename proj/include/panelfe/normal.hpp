#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>

#include <boost/math/special_functions/erf.hpp>

#include "panelfe/error.hpp"

namespace panelfe::normal {

// Indices are clamped to this range before any CDF evaluation. At +-37 the
// lower tail is ~1e-300, still a normal double, so every log and Mills
// ratio below stays finite.
inline constexpr double index_clamp = 37.0;

inline double clamp_index(double eta) { return std::clamp(eta, -index_clamp, index_clamp); }

inline double pdf(double x) {
  return std::exp(-0.5 * x * x) * (0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2);
}

// Phi(x) through erfc, so the lower tail keeps full relative precision.
inline double cdf(double x) { return 0.5 * std::erfc(-x * (0.5 * std::numbers::sqrt2)); }

inline double log_cdf(double x) { return std::log(cdf(clamp_index(x))); }

// phi(x) / Phi(x) on the clamped index.
inline double mills(double x) {
  x = clamp_index(x);
  return pdf(x) / cdf(x);
}

// Phi^{-1}(p) for p in (0,1).
inline double quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw domain_error("normal quantile requires p in (0,1)");
  return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
}

}  // namespace panelfe::normal
