#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "panelfe/error.hpp"
#include "panelfe/fe.hpp"
#include "panelfe/indirect.hpp"
#include "panelfe/jackknife.hpp"
#include "panelfe/normal.hpp"
#include "panelfe/panel.hpp"
#include "panelfe/parallel.hpp"
#include "panelfe/rng.hpp"

namespace panelfe::mc {

inline constexpr double z95 = 1.96;

enum class DesignKind { calibrated_static, calibrated_dynamic, varying_T };
enum class Method { truth, fe, ife, hbc, bc_hn };

inline std::string_view to_string(DesignKind kind) {
  switch (kind) {
    case DesignKind::calibrated_static: return "calibrated_static";
    case DesignKind::calibrated_dynamic: return "calibrated_dynamic";
    case DesignKind::varying_T: return "varying_T";
  }
  return "unknown";
}

inline DesignKind parse_design_kind(std::string_view name) {
  if (name == "calibrated_static") return DesignKind::calibrated_static;
  if (name == "calibrated_dynamic") return DesignKind::calibrated_dynamic;
  if (name == "varying_T" || name == "varying_t") return DesignKind::varying_T;
  throw data_error("unknown design '" + std::string(name) + "'");
}

inline Method parse_method(std::string_view name) {
  if (name == "truth") return Method::truth;
  if (name == "fe") return Method::fe;
  if (name == "ife") return Method::ife;
  if (name == "hbc") return Method::hbc;
  if (name == "bc_hn" || name == "bc-hn") return Method::bc_hn;
  throw data_error("unknown method '" + std::string(name) + "'");
}

inline std::string method_label(Method m, std::size_t H) {
  switch (m) {
    case Method::truth: return "truth";
    case Method::fe: return "fe";
    case Method::ife: return "ife-" + std::to_string(H);
    case Method::hbc: return "hbc";
    case Method::bc_hn: return "bc_hn";
  }
  return "unknown";
}

// One Monte Carlo design. Calibrated designs carry frozen regressors (and,
// when dynamic, the observed initial outcomes in the lag column at t = 0)
// together with the truth (theta0, alpha0); varying_T regenerates
// everything per replication.
struct Design {
  DesignKind kind = DesignKind::varying_T;
  Family family{FamilyKind::probit};
  std::size_t n = 100;
  std::size_t T = 4;
  Vector theta0 = Vector::Ones(1);
  std::vector<double> alpha0;
  PanelData regressors;
  std::size_t R = 200;
  std::size_t H = 10;
  std::uint64_t seed = 1;
  std::vector<Method> methods{Method::fe, Method::ife};
  FitOptions fit;
  SolverOptions solver;
  unsigned threads = 1;
};

inline Design varying_T_design(std::size_t n, std::size_t T, std::size_t R, std::size_t H, std::uint64_t seed,
                               std::vector<Method> methods) {
  Design d;
  d.kind = DesignKind::varying_T;
  d.n = n;
  d.T = T;
  d.theta0 = Vector::Ones(1);
  d.R = R;
  d.H = H;
  d.seed = seed;
  d.methods = std::move(methods);
  return d;
}

struct Calibration {
  Vector theta;
  std::vector<double> alpha;  // one per retained individual
  PanelData panel;            // observed data restricted to retained individuals
};

// Fixed-effect estimates of the supplied data, taken verbatim as the truth
// of a calibrated design. Individuals the fit drops are excluded.
inline Calibration calibrate(const PanelData& panel, Family family, const FitOptions& opts = {}) {
  const FEFit fit = fit_fe(panel, family, opts);
  Calibration c;
  c.theta = fit.theta_hat;
  for (std::size_t i : fit.used) c.alpha.push_back(fit.alpha_hat[i]);
  c.panel = select_individuals(panel, fit.used);
  return c;
}

inline Design calibrated_design(const Calibration& c, Family family, std::size_t R, std::size_t H,
                                std::uint64_t seed, std::vector<Method> methods) {
  Design d;
  d.kind = c.panel.lag_column ? DesignKind::calibrated_dynamic : DesignKind::calibrated_static;
  d.family = family;
  d.n = c.panel.n;
  d.T = c.panel.T;
  d.theta0 = c.theta;
  d.alpha0 = c.alpha;
  d.regressors = c.panel;
  d.R = R;
  d.H = H;
  d.seed = seed;
  d.methods = std::move(methods);
  return d;
}

// The varying-T probit panel from explicit draws:
//   x_i0 = u_i0,  x_it = t/10 + x_i,t-1 / 2 + u_it,
//   y_it = 1{theta0 x_it + alpha_i - eps_it >= 0},  t = 1..T.
// `u` is n x (T+1) and `eps` is n x T, row-major.
inline PanelData build_varying_T(double theta0, std::span<const double> alpha, std::span<const double> u,
                                 std::span<const double> eps, std::size_t T) {
  const std::size_t n = alpha.size();
  std::vector<double> y(n * T), x(n * T);
  for (std::size_t i = 0; i < n; ++i) {
    double previous = u[i * (T + 1)];
    for (std::size_t t = 1; t <= T; ++t) {
      const double xt = static_cast<double>(t) / 10.0 + previous / 2.0 + u[i * (T + 1) + t];
      x[i * T + t - 1] = xt;
      y[i * T + t - 1] = theta0 * xt + alpha[i] - eps[i * T + t - 1] >= 0.0 ? 1.0 : 0.0;
      previous = xt;
    }
  }
  return make_panel(n, T, 1, std::move(y), std::move(x), Family{FamilyKind::probit}, {"x"});
}

// Replication `rep` of the varying-T design: alpha_i ~ N(0,1),
// u ~ U(-0.5, 0.5), eps ~ N(0,1), all from the (seed, rep) data stream.
inline PanelData generate_varying_T(const Design& d, std::size_t rep) {
  if (d.kind != DesignKind::varying_T) throw domain_error("generate_varying_T needs a varying_T design");
  rng::Stream stream(d.seed, rep, rng::Purpose::data);
  std::vector<double> alpha(d.n), u(d.n * (d.T + 1)), eps(d.n * d.T);
  for (std::size_t i = 0; i < d.n; ++i) {
    alpha[i] = normal::quantile(stream.uniform());
    for (std::size_t t = 0; t <= d.T; ++t) u[i * (d.T + 1) + t] = stream.uniform(-0.5, 0.5);
    for (std::size_t t = 0; t < d.T; ++t) eps[i * d.T + t] = normal::quantile(stream.uniform());
  }
  return build_varying_T(d.theta0[0], alpha, u, eps, d.T);
}

// Replication `rep` of a calibrated design: outcomes simulated from
// (theta0, alpha0) on the frozen regressors, dynamically from the observed
// initial outcomes when the design has a lag column.
inline PanelData generate_calibrated(const Design& d, std::size_t rep) {
  const PanelData& base = d.regressors;
  const auto shocks = draw_shocks(rng::derive_seed(d.seed, rep, rng::Purpose::data), 1, base.n, base.T);
  std::optional<std::vector<double>> init;
  std::optional<std::span<const double>> init_view;
  if (base.lag_column) {
    init = initial_outcomes(base);
    init_view = std::span<const double>(*init);
  }
  auto y = simulate_panel(d.family, d.theta0, d.alpha0, base, shocks, 0, init_view);
  return with_outcomes(base, std::move(y), init_view);
}

inline PanelData generate(const Design& d, std::size_t rep) {
  return d.kind == DesignKind::varying_T ? generate_varying_T(d, rep) : generate_calibrated(d, rep);
}

// A probit panel standing in for observed labour-force data when a
// calibrated design has no data file: two covariates correlated with the
// individual effect and, if dynamic, a leading lagged outcome column
// "y_lag" with its own observed initial period.
inline PanelData synthetic_probit_panel(std::uint64_t seed, std::size_t n, std::size_t T, bool dynamic) {
  rng::Stream stream(seed, 0, rng::Purpose::calibration);
  auto gauss = [&] { return normal::quantile(stream.uniform()); };
  const double lag_coef = 1.0, kids_coef = -0.6, income_coef = 0.4;
  const std::size_t p = dynamic ? 3 : 2;
  const std::size_t off = dynamic ? 1 : 0;
  std::vector<double> y(n * T), X(n * T * p);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = gauss();
    double kids = 0.5 * a + gauss();
    auto draw_y = [&](double lagged, double k, double inc) {
      const double eta = (dynamic ? lag_coef * lagged : 0.0) + kids_coef * k + income_coef * inc + a;
      return eta >= gauss() ? 1.0 : 0.0;
    };
    double previous = 0.0;
    if (dynamic) {
      const double inc0 = 0.3 * a + gauss();
      previous = draw_y(0.0, kids, inc0);
    }
    for (std::size_t t = 0; t < T; ++t) {
      kids = 0.6 * kids + 0.4 * a + gauss();
      const double income = 0.3 * a + gauss();
      double* row = X.data() + (i * T + t) * p;
      if (dynamic) row[0] = previous;
      row[off] = kids;
      row[off + 1] = income;
      y[i * T + t] = draw_y(previous, kids, income);
      previous = y[i * T + t];
    }
  }
  std::vector<std::string> names{"kids", "income"};
  if (dynamic) names.insert(names.begin(), "y_lag");
  return make_panel(n, T, p, std::move(y), std::move(X), Family{FamilyKind::probit}, std::move(names),
                    dynamic ? std::optional<std::size_t>(0) : std::nullopt);
}

inline std::pair<double, double> coverage_interval(double estimate, double se) {
  if (!(se >= 0.0)) throw domain_error("standard error must be non-negative");
  return {estimate - z95 * se, estimate + z95 * se};
}

inline bool covers(double truth, double estimate, double se) {
  const auto [lo, hi] = coverage_interval(estimate, se);
  return lo <= truth && truth <= hi;
}

struct MethodEstimate {
  bool ok = false;
  Vector estimate;
  Vector se;
};

// Point estimates and standard errors of every requested method on
// replication `rep`. A failed or unresolved method yields ok = false.
inline std::vector<MethodEstimate> run_replication(const Design& d, std::size_t rep) {
  std::vector<MethodEstimate> out(d.methods.size());
  PanelData panel = generate(d, rep);
  std::optional<FEFit> fe;
  try {
    fe = fit_fe(panel, d.family, d.fit);
  } catch (const estimation_error&) {
  }
  for (std::size_t m = 0; m < d.methods.size(); ++m) {
    auto& slot = out[m];
    if (d.methods[m] == Method::truth) {
      slot = {true, d.theta0, Vector::Zero(d.theta0.size())};
      continue;
    }
    if (!fe) continue;
    try {
      switch (d.methods[m]) {
        case Method::fe: slot = {true, fe->theta_hat, fe->se}; break;
        case Method::ife: {
          const auto shocks = draw_shocks(rng::derive_seed(d.seed, rep, rng::Purpose::ife), d.H, panel.n, panel.T);
          SolverOptions solver = d.solver;
          solver.inner = d.fit;
          const auto fit = solve_ife(*fe, shocks, panel, d.family, solver);
          slot = {fit.resolved(), fit.theta_tilde, fit.se};
          break;
        }
        case Method::hbc: {
          const auto fit = hbc(panel, d.family, d.fit, *fe);
          slot = {true, fit.theta_corrected, fit.se};
          break;
        }
        case Method::bc_hn: {
          const auto fit = bc_hn(panel, d.family, d.fit, *fe);
          slot = {true, fit.theta_corrected, fit.se};
          break;
        }
        case Method::truth: break;
      }
    } catch (const estimation_error&) {
      slot.ok = false;
    }
  }
  return out;
}

struct CoefficientStats {
  std::string method;
  std::string coefficient;
  double bias = 0.0;      // mean relative bias x 100
  double stddev = 0.0;    // sd of estimate / truth x 100
  double coverage = 0.0;  // share of nominal 95% intervals covering the truth
  std::size_t R_effective = 0;
};

struct MCResult {
  std::vector<CoefficientStats> rows;
  std::size_t R = 0;
  bool unreliable = false;
  double wall_seconds = 0.0;

  const CoefficientStats& at(std::string_view method, std::string_view coefficient) const {
    for (const auto& r : rows) {
      if (r.method == method && r.coefficient == coefficient) return r;
    }
    throw std::out_of_range("no result row for " + std::string(method) + "/" + std::string(coefficient));
  }
};

inline std::vector<std::string> coefficient_names(const Design& d) {
  if (d.kind == DesignKind::varying_T) return {"x"};
  return d.regressors.column_names;
}

// Runs R replications (concurrently, one derived stream set each) and
// aggregates in replication order. Replications where a method fails are
// excluded from that method's statistics and counted; the result is
// flagged unreliable when any method loses more than 20% of them.
inline MCResult run_design(const Design& d) {
  if (d.R == 0) throw domain_error("need at least one replication");
  if (d.kind != DesignKind::varying_T && d.alpha0.size() != d.regressors.n) {
    throw domain_error("calibrated design needs one alpha0 per individual");
  }
  const auto names = coefficient_names(d);
  if (static_cast<std::size_t>(d.theta0.size()) != names.size()) {
    throw domain_error("theta0 dimension does not match the regressors");
  }
  const auto start = std::chrono::steady_clock::now();
  std::vector<std::vector<MethodEstimate>> reps(d.R);
  parallel_for(d.R, d.threads, [&](std::size_t r) { reps[r] = run_replication(d, r); });

  MCResult out;
  out.R = d.R;
  for (std::size_t m = 0; m < d.methods.size(); ++m) {
    for (std::size_t k = 0; k < names.size(); ++k) {
      const auto kk = static_cast<Eigen::Index>(k);
      const double truth = d.theta0[kk];
      std::vector<double> ratio;
      std::size_t covered = 0;
      for (const auto& rep : reps) {
        const auto& e = rep[m];
        if (!e.ok) continue;
        ratio.push_back(e.estimate[kk] / truth);
        if (covers(truth, e.estimate[kk], e.se[kk])) ++covered;
      }
      CoefficientStats s;
      s.method = method_label(d.methods[m], d.H);
      s.coefficient = names[k];
      s.R_effective = ratio.size();
      if (!ratio.empty()) {
        double mean = 0.0;
        for (double v : ratio) mean += v;
        mean /= static_cast<double>(ratio.size());
        double ss = 0.0;
        for (double v : ratio) ss += (v - mean) * (v - mean);
        s.bias = (mean - 1.0) * 100.0;
        s.stddev = ratio.size() > 1 ? std::sqrt(ss / static_cast<double>(ratio.size() - 1)) * 100.0 : 0.0;
        s.coverage = static_cast<double>(covered) / static_cast<double>(ratio.size());
      }
      if (static_cast<double>(s.R_effective) < 0.8 * static_cast<double>(d.R)) out.unreliable = true;
      out.rows.push_back(std::move(s));
    }
  }
  out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

}  // namespace panelfe::mc
