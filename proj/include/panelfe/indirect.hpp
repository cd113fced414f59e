#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "panelfe/error.hpp"
#include "panelfe/family.hpp"
#include "panelfe/fe.hpp"
#include "panelfe/normal.hpp"
#include "panelfe/panel.hpp"
#include "panelfe/parallel.hpp"
#include "panelfe/rng.hpp"

namespace panelfe {

// Common random numbers for H simulation paths. v(h,i,t) is a pure function
// of (seed, h, i, t): a counter-based draw, never redrawn once stored. The
// standard normal quantile u = Phi^{-1}(v) is cached next to it.
class ShockStore {
 public:
  ShockStore() = default;
  ShockStore(std::uint64_t seed, std::size_t H, std::size_t n, std::size_t T)
      : seed_(seed), H_(H), n_(n), T_(T), v_(H * n * T), u_(H * n * T) {
    for (std::size_t h = 0; h < H; ++h) {
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t t = 0; t < T; ++t) {
          const std::size_t at = index(h, i, t);
          v_[at] = rng::uniform_at(seed, t, i, h, rng::Purpose::shock_store);
          u_[at] = normal::quantile(v_[at]);
        }
      }
    }
  }

  // A store holding given uniforms, laid out (h, i, t) row-major.
  static ShockStore from_uniforms(std::size_t H, std::size_t n, std::size_t T, std::vector<double> v) {
    if (v.size() != H * n * T) throw domain_error("need H*n*T uniforms");
    ShockStore store;
    store.H_ = H;
    store.n_ = n;
    store.T_ = T;
    store.u_.reserve(v.size());
    for (double x : v) store.u_.push_back(normal::quantile(x));
    store.v_ = std::move(v);
    return store;
  }

  std::uint64_t seed() const { return seed_; }
  std::size_t paths() const { return H_; }
  std::size_t individuals() const { return n_; }
  std::size_t periods() const { return T_; }
  double uniform(std::size_t h, std::size_t i, std::size_t t) const { return v_[index(h, i, t)]; }
  double normal(std::size_t h, std::size_t i, std::size_t t) const { return u_[index(h, i, t)]; }
  std::span<const double> uniforms() const { return v_; }

  bool operator==(const ShockStore&) const = default;

 private:
  std::size_t index(std::size_t h, std::size_t i, std::size_t t) const { return (h * n_ + i) * T_ + t; }

  std::uint64_t seed_ = 0;
  std::size_t H_ = 0, n_ = 0, T_ = 0;
  std::vector<double> v_;
  std::vector<double> u_;
};

inline ShockStore draw_shocks(std::uint64_t seed, std::size_t H, std::size_t n, std::size_t T) {
  if (H == 0) throw domain_error("need at least one simulation path (H >= 1)");
  return ShockStore(seed, H, n, T);
}

// Simulated outcomes y^h(theta, alpha_hat) for the panel's individuals.
// Individual i of `panel` uses shock row shock_rows[i] (default: i), and is
// skipped (NaN outcomes) when its alpha is not finite. For a dynamic panel
// the simulated lag replaces the observed one from the first period on,
// starting from `initial` = y(i,-1).
inline std::vector<double> simulate_panel(Family family, const Vector& theta, std::span<const double> alpha,
                                          const PanelData& panel, const ShockStore& shocks, std::size_t h,
                                          std::optional<std::span<const double>> initial = std::nullopt,
                                          std::span<const std::size_t> shock_rows = {}) {
  if (alpha.size() != panel.n) throw domain_error("alpha_hat must have one entry per individual");
  if (h >= shocks.paths()) throw domain_error("path index out of range");
  if (shocks.periods() < panel.T) throw domain_error("shock store has too few periods");
  if (panel.lag_column && !initial) throw domain_error("dynamic simulation needs the initial outcomes");
  if (initial && initial->size() != panel.n) throw domain_error("need one initial outcome per individual");
  const bool index_model = family.is_index_model();
  const double variance = index_model ? 1.0 : theta[0];
  if (!index_model && !(variance > 0.0)) throw domain_error("neyman-scott simulation needs a positive variance");

  const std::size_t p = panel.p;
  const std::ptrdiff_t lag = panel.lag_column ? static_cast<std::ptrdiff_t>(*panel.lag_column) : -1;
  std::vector<double> y(panel.n * panel.T, std::numeric_limits<double>::quiet_NaN());
  for (std::size_t i = 0; i < panel.n; ++i) {
    if (!std::isfinite(alpha[i])) continue;
    const std::size_t row = shock_rows.empty() ? i : shock_rows[i];
    if (row >= shocks.individuals()) throw domain_error("shock store has too few individuals");
    double previous = lag >= 0 ? (*initial)[i] : 0.0;
    for (std::size_t t = 0; t < panel.T; ++t) {
      double eta = alpha[i];
      if (index_model) {
        const auto x = panel.row(i, t);
        for (std::size_t k = 0; k < p; ++k) {
          const double xk = static_cast<std::ptrdiff_t>(k) == lag ? previous : x[k];
          eta += xk * theta[static_cast<Eigen::Index>(k)];
        }
      }
      const double out = simulate_outcome_with_quantile(family, eta, shocks.uniform(h, row, t),
                                                        shocks.normal(h, row, t), variance);
      y[panel.obs(i, t)] = out;
      previous = out;
    }
  }
  return y;
}

// Copy of `panel` with outcomes replaced, and the lag column rebuilt from the
// new outcomes when the panel is dynamic.
inline PanelData with_outcomes(const PanelData& panel, std::vector<double> y,
                               std::optional<std::span<const double>> initial = std::nullopt) {
  PanelData out = panel;
  out.y = std::move(y);
  if (out.lag_column) {
    const std::size_t k = *out.lag_column;
    for (std::size_t i = 0; i < out.n; ++i) {
      out.X[out.obs(i, 0) * out.p + k] = initial ? (*initial)[i] : panel.regressor(i, 0, k);
      for (std::size_t t = 1; t < out.T; ++t) out.X[out.obs(i, t) * out.p + k] = out.outcome(i, t - 1);
    }
  }
  return out;
}

struct SolverOptions {
  double tol_match = 1e-4;
  int max_fixed_point = 50;
  int max_simplex_evaluations = 400;
  // A damped step shorter than step_tol*(1+|theta|) after a rejection means
  // the iterate sits on a discontinuity of beta_H.
  double step_tol = 1e-6;
  double theta_bound = 50.0;
  unsigned threads = 1;
  FitOptions inner;
};

enum class SolveStatus {
  converged,           // residual <= tol_match
  resolution_limited,  // theta sits on a jump of beta_H at least as large as the residual
  not_converged,       // best iterate reported
};

inline std::string_view to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::converged: return "converged";
    case SolveStatus::resolution_limited: return "resolution_limited";
    case SolveStatus::not_converged: return "not_converged";
  }
  return "unknown";
}

struct SolverStep {
  enum class Stage { fixed_point, simplex } stage;
  Vector theta;
  double residual;
};

struct IFEFit {
  Vector theta_tilde;
  std::size_t H = 0;
  Vector se;
  double residual = 0.0;
  SolveStatus status = SolveStatus::not_converged;
  std::vector<SolverStep> solver_trace;
  FEFit base;

  bool converged() const { return status == SolveStatus::converged; }
  // Solved to the resolution the simulated map allows.
  bool resolved() const { return status != SolveStatus::not_converged; }
};

// se_IFE = se_FE * sqrt(1 + 1/H): the (1 + 1/H) variance inflation applied
// to standard deviations.
inline Vector ife_standard_errors(const Vector& fe_se, std::size_t H) {
  if (H == 0) throw domain_error("H must be at least 1");
  return fe_se * std::sqrt(1.0 + 1.0 / static_cast<double>(H));
}

inline double ife_standard_error(double fe_se, std::size_t H) {
  return ife_standard_errors(Vector::Constant(1, fe_se), H)[0];
}

// Simulated-data fixed-effect estimates at a candidate theta, over the
// cross-section the base fit used. Individuals dropped from the base fit
// are never simulated; individuals separated in a simulated panel are
// dropped for that (h, theta) only.
class IndirectProblem {
 public:
  IndirectProblem(const PanelData& panel, Family family, const FEFit& base, const ShockStore& shocks,
                  FitOptions inner = {}, unsigned threads = 1)
      : family_(family),
        panel_(select_individuals(panel, base.used)),
        shock_rows_(base.used),
        inner_(std::move(inner)),
        threads_(threads),
        shocks_(shocks) {
    if (shocks.individuals() < panel.n || shocks.periods() < panel.T) {
      throw domain_error("shock store does not cover the panel");
    }
    start_ = base.theta_hat;
    alpha_.reserve(base.used.size());
    for (std::size_t i : base.used) alpha_.push_back(base.alpha_hat[i]);
    if (panel_.lag_column) initial_ = initial_outcomes(panel_);
    inner_.compute_covariance = false;
    inner_.alpha_start = {};
  }

  std::size_t paths() const { return shocks_.paths(); }

  Vector beta_h(const Vector& theta, std::size_t h) const {
    std::optional<std::span<const double>> init;
    if (panel_.lag_column) init = std::span<const double>(initial_);
    auto y = simulate_panel(family_, theta, alpha_, panel_, shocks_, h, init, shock_rows_);
    const PanelData simulated = with_outcomes(panel_, std::move(y), init);
    FitOptions opts = inner_;
    // A fixed start keeps beta^h exactly constant wherever the simulated
    // outcomes do not change.
    opts.theta_init = start_;
    opts.alpha_start = alpha_;
    try {
      return fit_fe(simulated, family_, opts).theta_hat;
    } catch (const estimation_error& e) {
      throw estimation_error("simulated fit failed on path h=" + std::to_string(h) + ": " + e.what());
    }
  }

  // beta_H(theta) = (1/H) sum_h beta^h(theta). Paths may run concurrently;
  // the average is reduced in path order.
  Vector beta_H(const Vector& theta) const {
    std::vector<Vector> per_path(paths());
    parallel_for(paths(), threads_, [&](std::size_t h) { per_path[h] = beta_h(theta, h); });
    Vector sum = Vector::Zero(theta.size());
    for (const auto& b : per_path) sum += b;
    return sum / static_cast<double>(paths());
  }

 private:
  Family family_;
  PanelData panel_;
  std::vector<std::size_t> shock_rows_;
  Vector start_;
  std::vector<double> alpha_;
  std::vector<double> initial_;
  FitOptions inner_;
  unsigned threads_;
  const ShockStore& shocks_;
};

inline Vector beta_H(const Vector& theta, const FEFit& base, const ShockStore& shocks, const PanelData& panel,
                     Family family, const FitOptions& inner = {}, unsigned threads = 1) {
  return IndirectProblem(panel, family, base, shocks, inner, threads).beta_H(theta);
}

namespace detail {

// Nelder-Mead on a scalar objective; returns the best vertex. Used on the
// squared matching residual, which is piecewise constant in theta.
template <typename Objective>
std::pair<Vector, double> nelder_mead(Objective&& f, const Vector& start, double f_start, const Vector& scale,
                                      int max_evaluations, double target) {
  const Eigen::Index d = start.size();
  std::vector<Vector> x(static_cast<std::size_t>(d + 1), start);
  std::vector<double> fx(static_cast<std::size_t>(d + 1), f_start);
  int evaluations = 0;
  for (Eigen::Index k = 0; k < d; ++k) {
    x[static_cast<std::size_t>(k + 1)][k] += scale[k];
    fx[static_cast<std::size_t>(k + 1)] = f(x[static_cast<std::size_t>(k + 1)]);
    ++evaluations;
  }
  std::vector<std::size_t> order(x.size());
  auto sort_vertices = [&] {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return fx[a] < fx[b]; });
  };
  while (evaluations < max_evaluations) {
    sort_vertices();
    const std::size_t best = order.front(), worst = order.back(), second = order[order.size() - 2];
    if (fx[best] <= target) break;
    double diameter = 0.0;
    for (const auto& v : x) diameter = std::max(diameter, (v - x[best]).cwiseAbs().maxCoeff());
    if (diameter <= 1e-12 * (1.0 + x[best].cwiseAbs().maxCoeff())) break;

    Vector centroid = Vector::Zero(d);
    for (std::size_t j = 0; j < x.size(); ++j) {
      if (j != worst) centroid += x[j];
    }
    centroid /= static_cast<double>(d);
    const Vector reflected = centroid + (centroid - x[worst]);
    const double f_reflected = f(reflected);
    ++evaluations;
    if (f_reflected < fx[best]) {
      const Vector expanded = centroid + 2.0 * (centroid - x[worst]);
      const double f_expanded = f(expanded);
      ++evaluations;
      if (f_expanded < f_reflected) {
        x[worst] = expanded;
        fx[worst] = f_expanded;
      } else {
        x[worst] = reflected;
        fx[worst] = f_reflected;
      }
      continue;
    }
    if (f_reflected < fx[second]) {
      x[worst] = reflected;
      fx[worst] = f_reflected;
      continue;
    }
    const bool outside = f_reflected < fx[worst];
    const Vector contracted =
        outside ? Vector(centroid + 0.5 * (reflected - centroid)) : Vector(centroid + 0.5 * (x[worst] - centroid));
    const double f_contracted = f(contracted);
    ++evaluations;
    if (f_contracted < (outside ? f_reflected : fx[worst])) {
      x[worst] = contracted;
      fx[worst] = f_contracted;
      continue;
    }
    for (std::size_t j = 0; j < x.size() && evaluations < max_evaluations; ++j) {
      if (j == best) continue;
      x[j] = x[best] + 0.5 * (x[j] - x[best]);
      fx[j] = f(x[j]);
      ++evaluations;
    }
  }
  sort_vertices();
  return {x[order.front()], fx[order.front()]};
}

}  // namespace detail

// Solves theta_hat = beta_H(theta_tilde) without derivatives of beta_H.
// Damped fixed-point iteration theta <- theta + lambda (theta_hat - beta_H(theta)),
// started at theta_hat, with lambda halved whenever the residual grows and
// doubled while it stays exactly constant. When the damped step collapses
// and the rejected candidates around the current plateau moved beta_H by at
// least the residual, the iterate is reported as resolution-limited.
// Otherwise a Nelder-Mead search on the squared residual takes over.
inline IFEFit solve_ife(const FEFit& base, const ShockStore& shocks, const PanelData& panel, Family family,
                        const SolverOptions& opts = {}) {
  if (!base.trace.converged) throw domain_error("base fit has not converged");
  IndirectProblem problem(panel, family, base, shocks, opts.inner, opts.threads);
  const bool index_model = family.is_index_model();
  const Vector& target = base.theta_hat;
  auto clamp_box = [&](const Vector& v) -> Vector {
    if (index_model) return v.cwiseMax(-opts.theta_bound).cwiseMin(opts.theta_bound);
    return v.cwiseMax(1e-12);
  };

  IFEFit out;
  out.H = shocks.paths();
  out.base = base;
  auto residual_at = [&](const Vector& theta, SolverStep::Stage stage) {
    Vector r = target - problem.beta_H(theta);
    out.solver_trace.push_back({stage, theta, r.norm()});
    return r;
  };

  Vector theta = clamp_box(target);
  Vector r = residual_at(theta, SolverStep::Stage::fixed_point);
  Vector best = theta;
  double best_norm = r.norm();
  double lambda = 1.0;
  // Largest jump of beta_H seen between the current plateau and a rejected
  // candidate: the local resolution of the map.
  double jump = 0.0;
  int evaluations = 1;
  while (evaluations < opts.max_fixed_point) {
    if (r.norm() <= opts.tol_match) {
      out.status = SolveStatus::converged;
      break;
    }
    const Vector candidate = clamp_box(theta + lambda * r);
    const double step = (candidate - theta).norm();
    if (lambda < 1.0 && step <= opts.step_tol * (1.0 + theta.norm())) {
      if (jump > 0.0 && r.norm() <= jump) out.status = SolveStatus::resolution_limited;
      break;
    }
    if (step == 0.0) break;
    const Vector rc = residual_at(candidate, SolverStep::Stage::fixed_point);
    ++evaluations;
    if (rc.norm() > r.norm()) {
      lambda *= 0.5;
      jump = std::max(jump, (rc - r).norm());
      continue;
    }
    // Identical residual: beta_H is flat here, so widen the step to reach
    // the edge of the plateau.
    if (rc == r) {
      lambda *= 2.0;
    } else {
      jump = 0.0;
    }
    theta = candidate;
    r = rc;
    if (r.norm() < best_norm) {
      best = theta;
      best_norm = r.norm();
    }
  }
  if (out.status == SolveStatus::not_converged && best_norm <= opts.tol_match) {
    out.status = SolveStatus::converged;
  }

  if (out.status == SolveStatus::not_converged && opts.max_simplex_evaluations > 0) {
    auto objective = [&](const Vector& v) {
      const Vector rv = residual_at(clamp_box(v), SolverStep::Stage::simplex);
      return rv.squaredNorm();
    };
    const Vector scale = Vector::Constant(best.size(), std::max(best_norm, 1e-2));
    auto [x, fx] = detail::nelder_mead(objective, best, best_norm * best_norm, scale,
                                       opts.max_simplex_evaluations, opts.tol_match * opts.tol_match);
    if (std::sqrt(fx) < best_norm) {
      best = clamp_box(x);
      best_norm = std::sqrt(fx);
    }
    if (best_norm <= opts.tol_match) out.status = SolveStatus::converged;
  }

  out.theta_tilde = best;
  out.residual = best_norm;
  if (base.se.size() == best.size()) out.se = ife_standard_errors(base.se, out.H);
  return out;
}

}  // namespace panelfe
