#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "panelfe/error.hpp"
#include "panelfe/family.hpp"
#include "panelfe/normal.hpp"
#include "panelfe/panel.hpp"

namespace panelfe {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

struct FitOptions {
  // Starting point; zero for index models, unit variance for neyman-scott.
  std::optional<Vector> theta_init;
  double tol_outer = 1e-8;
  int max_iterations = 200;
  double tol_inner = 1e-10;
  double alpha_bound = 50.0;
  double theta_bound = 50.0;
  // Finite-difference Hessian and standard errors at the optimum.
  bool compute_covariance = true;
  // Optional warm start for the individual effects, one entry per individual.
  std::span<const double> alpha_start;
};

struct FitTrace {
  int iterations = 0;
  double gradient_norm = std::numeric_limits<double>::infinity();
  bool converged = false;
  std::vector<double> objective;
};

// Fixed-effect MLE. loglik and hessian are on the per-observation scale
// 1/(n_used*T); se(k) = sqrt([-H]^{-1}(k,k) / (n_used*T)). Individuals in
// `dropped` carry NaN in alpha_hat.
struct FEFit {
  Vector theta_hat;
  std::vector<double> alpha_hat;
  double loglik = 0.0;
  Matrix hessian;
  Vector se;
  std::vector<std::size_t> dropped;
  std::vector<std::size_t> used;
  FitTrace trace;
  std::size_t T = 0;

  std::size_t observations() const { return used.size() * T; }
};

class fit_failure : public estimation_error {
 public:
  fit_failure(const std::string& what, FitTrace trace) : estimation_error(what), trace_(std::move(trace)) {}
  const FitTrace& trace() const { return trace_; }

 private:
  FitTrace trace_;
};

// True when the individual's likelihood is unbounded in alpha: a probit
// individual with no outcome variation, or a poisson individual with no
// counts. Such individuals are excluded from estimation.
inline bool is_separated(Family family, std::span<const double> y) {
  switch (family.kind) {
    case FamilyKind::probit:
      return std::all_of(y.begin(), y.end(), [&](double v) { return v == y.front(); });
    case FamilyKind::poisson:
      return std::all_of(y.begin(), y.end(), [](double v) { return v == 0.0; });
    case FamilyKind::neyman_scott:
      return false;
  }
  return false;
}

namespace detail {

// log f without the support check; outcomes are validated with the panel.
inline double log_density_fast(Family family, double y, double eta, double variance) {
  switch (family.kind) {
    case FamilyKind::probit: return normal::log_cdf(y == 1.0 ? eta : -eta);
    case FamilyKind::poisson: return y * eta - std::exp(eta) - std::lgamma(y + 1.0);
    case FamilyKind::neyman_scott: {
      const double r = y - eta;
      return -0.5 * std::log(2.0 * std::numbers::pi * variance) - r * r / (2.0 * variance);
    }
  }
  return 0.0;
}

}  // namespace detail

// Maximizer over [-bound, bound] of sum_t log f(y_t | index_t + alpha)
// (unbounded for neyman-scott).
// `index` holds x_t'theta. Returns nullopt for a separated individual.
inline std::optional<double> concentrate_alpha(Family family, std::span<const double> y,
                                               std::span<const double> index, double bound = 50.0,
                                               double start = 0.0, double tol = 1e-10) {
  if (is_separated(family, y)) return std::nullopt;
  const double T = static_cast<double>(y.size());
  switch (family.kind) {
    case FamilyKind::neyman_scott: {
      double mean = 0.0;
      for (double v : y) mean += v;
      // the effect is the outcome mean, on the data's own scale: no bound
      return mean / T;
    }
    case FamilyKind::poisson: {
      double counts = 0.0, exposure = 0.0;
      for (std::size_t t = 0; t < y.size(); ++t) {
        counts += y[t];
        exposure += std::exp(index[t]);
      }
      return std::clamp(std::log(counts / exposure), -bound, bound);
    }
    case FamilyKind::probit: break;
  }

  // Safeguarded Newton on the strictly concave per-individual likelihood:
  // the score is decreasing in alpha, so its sign maintains a bracket.
  double lo = -bound, hi = bound;
  double alpha = std::clamp(start, lo, hi);
  for (int iter = 0; iter < 200; ++iter) {
    double score = 0.0, curvature = 0.0;
    for (std::size_t t = 0; t < y.size(); ++t) {
      const auto d = index_derivatives(family, y[t], index[t] + alpha);
      score += d.score;
      curvature += d.hessian;
    }
    if (std::abs(score) <= tol * T) return alpha;
    (score > 0.0 ? lo : hi) = alpha;
    if (hi - lo <= 1e-15 * (1.0 + std::abs(alpha))) return alpha;
    double next = alpha - score / curvature;
    if (!(curvature < 0.0) || !(next > lo && next < hi)) next = 0.5 * (lo + hi);
    alpha = next;
  }
  return alpha;
}

// Convenience overload for individual i of a panel at theta.
inline std::optional<double> concentrate_alpha(Family family, const PanelData& panel, std::size_t i,
                                               const Vector& theta, double bound = 50.0) {
  std::vector<double> index(panel.T, 0.0);
  if (family.is_index_model()) {
    for (std::size_t t = 0; t < panel.T; ++t) {
      const auto x = panel.row(i, t);
      for (std::size_t k = 0; k < panel.p; ++k) index[t] += x[k] * theta[static_cast<Eigen::Index>(k)];
    }
  }
  return concentrate_alpha(family, panel.outcomes(i), index, bound);
}

struct ProfileValue {
  double value = 0.0;
  Vector gradient;
  Matrix hessian;  // analytic profiled Hessian; empty unless requested
};

// The profiled objective (1/N) sum_i sum_t log f(y_it | x_it; alpha_i(theta),
// theta) over the individuals in `used`, N = |used|*T. The gradient uses the
// envelope property: d alpha_i / d theta terms vanish at the inner optimum.
// The analytic Hessian adds the profiling correction
//   sum_i [ sum_t h x x' - (sum_t h x)(sum_t h x)' / sum_t h ].
class ProfiledLikelihood {
 public:
  ProfiledLikelihood(const PanelData& panel, Family family, std::vector<std::size_t> used,
                     double alpha_bound = 50.0, double tol_inner = 1e-10)
      : panel_(panel), family_(family), used_(std::move(used)), bound_(alpha_bound), tol_(tol_inner) {}

  std::size_t dimension() const { return family_.is_index_model() ? panel_.p : 1; }
  const std::vector<std::size_t>& used() const { return used_; }
  double observations() const { return static_cast<double>(used_.size() * panel_.T); }

  // `alpha` (length n) is the warm start on entry and alpha_i(theta) on exit.
  ProfileValue evaluate(const Vector& theta, std::vector<double>& alpha, bool want_hessian) const {
    return family_.is_index_model() ? evaluate_index(theta, alpha, want_hessian)
                                    : evaluate_variance(theta, alpha, want_hessian);
  }

 private:
  ProfileValue evaluate_index(const Vector& theta, std::vector<double>& alpha, bool want_hessian) const {
    const std::size_t T = panel_.T, p = panel_.p;
    const auto P = static_cast<Eigen::Index>(p);
    ProfileValue out;
    out.gradient = Vector::Zero(P);
    if (want_hessian) out.hessian = Matrix::Zero(P, P);
    std::vector<double> index(T);
    Vector hx(P);
    Matrix hxx(P, P);
    for (std::size_t i : used_) {
      for (std::size_t t = 0; t < T; ++t) {
        const double* x = panel_.X.data() + panel_.obs(i, t) * p;
        double s = 0.0;
        for (std::size_t k = 0; k < p; ++k) s += x[k] * theta[static_cast<Eigen::Index>(k)];
        index[t] = s;
      }
      const auto y = panel_.outcomes(i);
      const double a = *concentrate_alpha(family_, y, index, bound_, alpha[i], tol_);
      alpha[i] = a;
      double h_sum = 0.0;
      if (want_hessian) {
        hx.setZero();
        hxx.setZero();
      }
      for (std::size_t t = 0; t < T; ++t) {
        const double eta = index[t] + a;
        const double* x = panel_.X.data() + panel_.obs(i, t) * p;
        out.value += detail::log_density_fast(family_, y[t], eta, 1.0);
        const auto d = index_derivatives(family_, y[t], eta);
        for (std::size_t k = 0; k < p; ++k) out.gradient[static_cast<Eigen::Index>(k)] += d.score * x[k];
        if (want_hessian) {
          h_sum += d.hessian;
          for (std::size_t k = 0; k < p; ++k) {
            const auto kk = static_cast<Eigen::Index>(k);
            const double hk = d.hessian * x[k];
            hx[kk] += hk;
            for (std::size_t l = 0; l <= k; ++l) hxx(kk, static_cast<Eigen::Index>(l)) += hk * x[l];
          }
        }
      }
      if (want_hessian && h_sum != 0.0) {
        for (Eigen::Index k = 0; k < P; ++k) {
          for (Eigen::Index l = 0; l <= k; ++l) {
            const double c = hxx(k, l) - hx[k] * hx[l] / h_sum;
            out.hessian(k, l) += c;
            if (l != k) out.hessian(l, k) += c;
          }
        }
      }
    }
    const double N = observations();
    out.value /= N;
    out.gradient /= N;
    if (want_hessian) out.hessian /= N;
    return out;
  }

  ProfileValue evaluate_variance(const Vector& theta, std::vector<double>& alpha, bool want_hessian) const {
    const double v = theta[0];
    const std::size_t T = panel_.T;
    double ssr = 0.0;
    for (std::size_t i : used_) {
      const auto y = panel_.outcomes(i);
      const double a = *concentrate_alpha(family_, y, {}, bound_);
      alpha[i] = a;
      for (std::size_t t = 0; t < T; ++t) ssr += (y[t] - a) * (y[t] - a);
    }
    const double s2 = ssr / observations();
    ProfileValue out;
    out.value = -0.5 * std::log(2.0 * std::numbers::pi * v) - s2 / (2.0 * v);
    out.gradient = Vector::Constant(1, (s2 - v) / (2.0 * v * v));
    if (want_hessian) out.hessian = Matrix::Constant(1, 1, 0.5 / (v * v) - s2 / (v * v * v));
    return out;
  }

  const PanelData& panel_;
  Family family_;
  std::vector<std::size_t> used_;
  double bound_;
  double tol_;
};

inline std::vector<std::size_t> estimable_individuals(const PanelData& panel, Family family,
                                                      std::vector<std::size_t>* dropped = nullptr) {
  std::vector<std::size_t> used;
  for (std::size_t i = 0; i < panel.n; ++i) {
    if (is_separated(family, panel.outcomes(i))) {
      if (dropped) dropped->push_back(i);
    } else {
      used.push_back(i);
    }
  }
  return used;
}

struct ProfiledPoint {
  double value = 0.0;
  Vector gradient;
};

// Profiled log-likelihood and its envelope gradient at theta, with
// separated individuals excluded.
inline ProfiledPoint profiled_loglik(const PanelData& panel, Family family, const Vector& theta,
                                     double alpha_bound = 50.0) {
  auto used = estimable_individuals(panel, family);
  if (used.empty()) throw estimation_error("no estimable individuals");
  ProfiledLikelihood profile(panel, family, std::move(used), alpha_bound);
  std::vector<double> alpha(panel.n, 0.0);
  auto v = profile.evaluate(theta, alpha, false);
  return {v.value, std::move(v.gradient)};
}

namespace detail {

inline double sup_norm(const Vector& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

inline std::string collinear_columns(const PanelData& panel, const Eigen::VectorXd& null_direction) {
  std::string names;
  const double scale = null_direction.cwiseAbs().maxCoeff();
  for (Eigen::Index k = 0; k < null_direction.size(); ++k) {
    if (std::abs(null_direction[k]) > 1e-3 * scale) {
      if (!names.empty()) names += ", ";
      names += panel.column_names[static_cast<std::size_t>(k)];
    }
  }
  return names;
}

// Throws when the profiled Hessian is numerically singular. Returns true
// when -H is positive definite (a Newton step is an ascent direction).
inline bool check_curvature(const Matrix& hessian, const PanelData& panel, bool index_model) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(-0.5 * (hessian + hessian.transpose()));
  const auto& ev = eig.eigenvalues();
  const double largest = ev.cwiseAbs().maxCoeff();
  if (std::abs(ev[0]) <= 1e-10 * std::max(largest, 1e-300)) {
    std::string msg = "singular Hessian";
    if (index_model && panel.p > 0) {
      msg += ": collinear columns {" + collinear_columns(panel, eig.eigenvectors().col(0)) +
             "} (constant or collinear regressors are absorbed by the fixed effects)";
    }
    throw estimation_error(msg);
  }
  return ev[0] > 0.0;
}

}  // namespace detail

// Fixed-effect MLE by Newton ascent on the profiled likelihood with
// backtracking. Newton steps use the analytic profiled Hessian; the
// reported Hessian is the central finite difference of the analytic
// gradient at the optimum.
inline FEFit fit_fe(const PanelData& panel, Family family, const FitOptions& opts = {}) {
  FEFit fit;
  fit.T = panel.T;
  fit.used = estimable_individuals(panel, family, &fit.dropped);
  if (fit.used.empty()) throw estimation_error("no estimable individuals");
  if (family.is_index_model() && panel.p == 0) throw data_error("index models need at least one regressor");
  if (!family.is_index_model() && panel.T < 2) throw estimation_error("neyman-scott needs T >= 2");
  ProfiledLikelihood profile(panel, family, fit.used, opts.alpha_bound, opts.tol_inner);

  const auto dim = static_cast<Eigen::Index>(profile.dimension());
  const bool index_model = family.is_index_model();
  Vector theta = opts.theta_init ? *opts.theta_init
                                 : (index_model ? Vector::Zero(dim) : Vector::Ones(1));
  if (theta.size() != dim) throw domain_error("theta_init has the wrong dimension");
  auto clamp_box = [&](Vector v) {
    if (index_model) return Vector(v.cwiseMax(-opts.theta_bound).cwiseMin(opts.theta_bound));
    return v;
  };
  theta = clamp_box(theta);
  if (!index_model && !(theta[0] > 0.0)) theta[0] = 1.0;

  std::vector<double> alpha(panel.n, 0.0);
  if (opts.alpha_start.size() == panel.n) {
    for (std::size_t i = 0; i < panel.n; ++i) {
      if (std::isfinite(opts.alpha_start[i])) alpha[i] = opts.alpha_start[i];
    }
  }

  auto& trace = fit.trace;
  auto current = profile.evaluate(theta, alpha, true);
  trace.objective.push_back(current.value);
  bool polished = false;
  for (trace.iterations = 0; trace.iterations < opts.max_iterations; ++trace.iterations) {
    trace.gradient_norm = detail::sup_norm(current.gradient);
    const bool concave = detail::check_curvature(current.hessian, panel, index_model);
    if (trace.gradient_norm <= opts.tol_outer && (polished || !concave)) {
      trace.converged = true;
      break;
    }
    Vector direction;
    if (concave) {
      direction = (-current.hessian).ldlt().solve(current.gradient);
    } else {
      direction = current.gradient / std::max(1.0, current.gradient.norm());
    }
    const double slope = current.gradient.dot(direction);

    if (trace.gradient_norm <= opts.tol_outer) {
      // One extra Newton step once inside tolerance; kept only if it does
      // not make the gradient worse.
      std::vector<double> trial_alpha = alpha;
      Vector trial = clamp_box(theta + direction);
      polished = true;
      if (index_model || trial[0] > 0.0) {
        auto next = profile.evaluate(trial, trial_alpha, true);
        if (detail::sup_norm(next.gradient) <= trace.gradient_norm) {
          theta = trial;
          alpha = std::move(trial_alpha);
          current = std::move(next);
          trace.objective.push_back(current.value);
        }
      }
      continue;
    }

    bool accepted = false;
    double step = 1.0;
    for (int halving = 0; halving < 60; ++halving, step *= 0.5) {
      Vector trial = clamp_box(theta + step * direction);
      if (!index_model && !(trial[0] > 0.0)) continue;
      std::vector<double> trial_alpha = alpha;
      auto next = profile.evaluate(trial, trial_alpha, true);
      const double gain = next.value - current.value;
      const bool sufficient = gain >= 1e-4 * step * slope;
      const bool roundoff = std::abs(gain) <= 1e-13 * (1.0 + std::abs(current.value)) &&
                            detail::sup_norm(next.gradient) < trace.gradient_norm;
      if (std::isfinite(next.value) && (sufficient || roundoff)) {
        theta = trial;
        alpha = std::move(trial_alpha);
        current = std::move(next);
        accepted = true;
        break;
      }
    }
    trace.objective.push_back(current.value);
    if (!accepted) break;
  }
  trace.gradient_norm = detail::sup_norm(current.gradient);
  if (!trace.converged) {
    throw fit_failure("fixed-effect fit did not converge after " + std::to_string(trace.iterations) +
                          " iterations (gradient sup-norm " + std::to_string(trace.gradient_norm) + ")",
                      trace);
  }

  fit.theta_hat = theta;
  fit.loglik = current.value;
  fit.alpha_hat.assign(panel.n, std::numeric_limits<double>::quiet_NaN());
  for (std::size_t i : fit.used) fit.alpha_hat[i] = alpha[i];

  if (opts.compute_covariance) {
    Matrix hessian(dim, dim);
    for (Eigen::Index k = 0; k < dim; ++k) {
      const double h = 1e-5 * (1.0 + std::abs(theta[k]));
      Vector up = theta, down = theta;
      up[k] += h;
      down[k] -= h;
      std::vector<double> a_up = alpha, a_down = alpha;
      const auto g_up = profile.evaluate(up, a_up, false).gradient;
      const auto g_down = profile.evaluate(down, a_down, false).gradient;
      hessian.col(k) = (g_up - g_down) / (2.0 * h);
    }
    fit.hessian = 0.5 * (hessian + hessian.transpose());
    Eigen::LDLT<Matrix> ldlt(-fit.hessian);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
        ldlt.vectorD().minCoeff() <= 1e-12 * std::max(1.0, ldlt.vectorD().cwiseAbs().maxCoeff())) {
      throw estimation_error("profiled Hessian is not negative definite at the optimum");
    }
    const Matrix covariance = ldlt.solve(Matrix::Identity(dim, dim)) / profile.observations();
    fit.se = covariance.diagonal().cwiseSqrt();
  }
  return fit;
}

}  // namespace panelfe
