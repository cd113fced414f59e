#pragma once

#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>

#include "panelfe/error.hpp"
#include "panelfe/normal.hpp"

namespace panelfe {

enum class FamilyKind { probit, poisson, neyman_scott };

// The parametric conditional density of an outcome given its linear index.
//
// For probit and poisson the index is eta = x'theta + alpha_i. The
// neyman-scott family has no regressors: eta is the individual mean alpha_i
// and theta is the scalar variance, passed as `variance` where needed.
struct Family {
  FamilyKind kind = FamilyKind::probit;

  bool is_index_model() const { return kind != FamilyKind::neyman_scott; }
  bool operator==(const Family&) const = default;
};

inline std::string_view to_string(FamilyKind kind) {
  switch (kind) {
    case FamilyKind::probit: return "probit";
    case FamilyKind::poisson: return "poisson";
    case FamilyKind::neyman_scott: return "neyman-scott";
  }
  return "unknown";
}

inline Family parse_family(std::string_view name) {
  if (name == "probit") return {FamilyKind::probit};
  if (name == "poisson") return {FamilyKind::poisson};
  if (name == "neyman-scott" || name == "neyman_scott") return {FamilyKind::neyman_scott};
  throw data_error("unknown family '" + std::string(name) + "'");
}

inline bool valid_outcome(Family family, double y) {
  switch (family.kind) {
    case FamilyKind::probit: return y == 0.0 || y == 1.0;
    case FamilyKind::poisson: return y >= 0.0 && y == std::floor(y) && std::isfinite(y);
    case FamilyKind::neyman_scott: return std::isfinite(y);
  }
  return false;
}

namespace detail {

inline void check_outcome(Family family, double y) {
  if (!valid_outcome(family, y)) {
    throw domain_error("outcome " + std::to_string(y) + " outside the support of the " +
                       std::string(to_string(family.kind)) + " family");
  }
}

inline double require_variance(std::optional<double> variance) {
  if (!variance || !(*variance > 0.0)) throw domain_error("neyman-scott needs a positive variance");
  return *variance;
}

}  // namespace detail

// log f(y | eta). Probit indices are clamped to +-37 first, so the result
// is always finite.
inline double log_density(Family family, double y, double eta,
                          std::optional<double> variance = std::nullopt) {
  detail::check_outcome(family, y);
  switch (family.kind) {
    case FamilyKind::probit:
      return y == 1.0 ? normal::log_cdf(eta) : normal::log_cdf(-eta);
    case FamilyKind::poisson:
      return y * eta - std::exp(eta) - std::lgamma(y + 1.0);
    case FamilyKind::neyman_scott: {
      const double theta = detail::require_variance(variance);
      const double r = y - eta;
      return -0.5 * std::log(2.0 * std::numbers::pi * theta) - r * r / (2.0 * theta);
    }
  }
  return 0.0;
}

struct Derivatives {
  double score = 0.0;    // d/d eta log f
  double hessian = 0.0;  // d^2/d eta^2 log f
};

// Analytic index derivatives. No support check: this is the hot path of
// every fit, and panels are validated on construction.
inline Derivatives index_derivatives(Family family, double y, double eta, double variance = 1.0) {
  switch (family.kind) {
    case FamilyKind::probit: {
      if (y == 1.0) {
        const double e = normal::clamp_index(eta);
        const double m = normal::mills(e);
        return {m, -m * (e + m)};
      }
      const double e = normal::clamp_index(-eta);
      const double m = normal::mills(e);
      return {-m, -m * (e + m)};
    }
    case FamilyKind::poisson: {
      const double mu = std::exp(eta);
      return {y - mu, -mu};
    }
    case FamilyKind::neyman_scott:
      return {(y - eta) / variance, -1.0 / variance};
  }
  return {};
}

inline Derivatives score_and_hessian(Family family, double y, double eta,
                                     std::optional<double> variance = std::nullopt) {
  detail::check_outcome(family, y);
  return index_derivatives(family, y, eta,
                           family.kind == FamilyKind::neyman_scott ? detail::require_variance(variance)
                                                                   : 1.0);
}

// Largest count the poisson inverse-CDF walk will return for mean lambda.
inline double poisson_inversion_cap(double lambda) { return lambda + 40.0 * std::sqrt(lambda) + 40.0; }

// Smallest k with P(Y <= k) >= v under Poisson(lambda), by sequential
// summation from k = 0. Terms are accumulated in log space so that large
// means do not underflow e^{-lambda}.
inline constexpr double poisson_max_mean = 1e7;

inline double poisson_inverse_cdf(double lambda, double v) {
  if (!(lambda <= poisson_max_mean)) throw domain_error("poisson mean too large to simulate by inversion");
  const double cap = std::floor(poisson_inversion_cap(lambda));
  if (lambda <= 0.0) return 0.0;
  const double log_lambda = std::log(lambda);
  double log_pmf = -lambda;
  double cdf = std::exp(log_pmf);
  double k = 0.0;
  while (cdf < v && k < cap) {
    k += 1.0;
    log_pmf += log_lambda - std::log(k);
    cdf += std::exp(log_pmf);
  }
  return k;
}

// Outcome implied by index eta and a uniform shock v, with u = Phi^{-1}(v)
// precomputed by the caller. Monotone nondecreasing in eta for fixed v
// (probit and poisson), which is what makes common random numbers couple
// simulated panels across theta.
inline double simulate_outcome_with_quantile(Family family, double eta, double v, double u,
                                             double variance = 1.0) {
  switch (family.kind) {
    case FamilyKind::probit: return eta >= u ? 1.0 : 0.0;
    case FamilyKind::poisson: return poisson_inverse_cdf(std::exp(eta), v);
    case FamilyKind::neyman_scott: return eta + std::sqrt(variance) * u;
  }
  return 0.0;
}

inline double simulate_outcome(Family family, double eta, double v,
                               std::optional<double> variance = std::nullopt) {
  if (!(v > 0.0 && v < 1.0)) throw domain_error("simulation shock must lie in (0,1)");
  switch (family.kind) {
    case FamilyKind::probit: return eta >= normal::quantile(v) ? 1.0 : 0.0;
    case FamilyKind::poisson: return poisson_inverse_cdf(std::exp(eta), v);
    case FamilyKind::neyman_scott:
      return eta + std::sqrt(detail::require_variance(variance)) * normal::quantile(v);
  }
  return 0.0;
}

}  // namespace panelfe
