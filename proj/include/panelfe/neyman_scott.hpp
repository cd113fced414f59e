#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "panelfe/error.hpp"
#include "panelfe/indirect.hpp"
#include "panelfe/normal.hpp"
#include "panelfe/panel.hpp"
#include "panelfe/parallel.hpp"
#include "panelfe/rng.hpp"

namespace panelfe::ns {

// Normal means model y_it = alpha_i0 + sqrt(theta0) u_it. Every estimator
// here has a closed form, which makes it the ground truth for the generic
// likelihood pipeline.
struct Design {
  double theta0 = 2.0;
  std::size_t n = 2500;
  std::size_t T = 5;
  // alpha_i0 for zero-based i; the default is alpha_i0 = i + 1.
  std::function<double(std::size_t)> alpha_rule = [](std::size_t i) { return static_cast<double>(i + 1); };
  std::size_t R = 1000;
  std::size_t H = 1;
  std::uint64_t seed = 1;
};

inline void validate(const Design& d) {
  if (!(d.theta0 > 0.0)) throw domain_error("theta0 must be positive");
  if (d.T < 2) throw domain_error("neyman-scott design needs T >= 2");
  if (d.n == 0 || d.R == 0 || d.H == 0) throw domain_error("n, R and H must be positive");
}

struct FEResult {
  double theta_hat = 0.0;
  bool degenerate = false;  // T < 2: no within-individual variation to measure
};

// (1/nT) sum_i sum_t (y_it - ybar_i)^2.
inline FEResult ns_fe(const PanelData& panel) {
  if (panel.T < 2 || panel.n == 0) return {0.0, true};
  double ssr = 0.0;
  for (std::size_t i = 0; i < panel.n; ++i) {
    const auto y = panel.outcomes(i);
    double mean = 0.0;
    for (double v : y) mean += v;
    mean /= static_cast<double>(panel.T);
    for (double v : y) ssr += (v - mean) * (v - mean);
  }
  return {ssr / static_cast<double>(panel.n * panel.T), false};
}

// S_H = (1/H) sum_h (1/nT) sum_i sum_t (u^h_it - ubar^h_i)^2 with
// u = Phi^{-1}(v), so that beta^h(theta) = theta * S_h.
inline double shock_scale(const ShockStore& shocks) {
  const std::size_t n = shocks.individuals(), T = shocks.periods();
  double total = 0.0;
  for (std::size_t h = 0; h < shocks.paths(); ++h) {
    double ssr = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double mean = 0.0;
      for (std::size_t t = 0; t < T; ++t) mean += shocks.normal(h, i, t);
      mean /= static_cast<double>(T);
      for (std::size_t t = 0; t < T; ++t) {
        const double d = shocks.normal(h, i, t) - mean;
        ssr += d * d;
      }
    }
    total += ssr / static_cast<double>(n * T);
  }
  return total / static_cast<double>(shocks.paths());
}

// Exact solution of theta_hat = theta_tilde * S_H.
inline double ns_ife(double theta_hat, double scale) {
  if (!(scale > 0.0)) throw domain_error("degenerate shocks: S_H = 0");
  return theta_hat / scale;
}

inline double ns_ife(double theta_hat, const ShockStore& shocks) { return ns_ife(theta_hat, shock_scale(shocks)); }

// Observed panel of replication `rep`: a (seed, rep) stream of normals.
inline PanelData generate_panel(const Design& d, std::size_t rep) {
  rng::Stream stream(d.seed, rep, rng::Purpose::data);
  std::vector<double> y(d.n * d.T);
  const double scale = std::sqrt(d.theta0);
  for (std::size_t i = 0; i < d.n; ++i) {
    const double alpha = d.alpha_rule(i);
    for (std::size_t t = 0; t < d.T; ++t) y[i * d.T + t] = alpha + scale * normal::quantile(stream.uniform());
  }
  return make_panel(d.n, d.T, 0, std::move(y), {}, Family{FamilyKind::neyman_scott});
}

// Simulation shocks of replication `rep`.
inline ShockStore replication_shocks(const Design& d, std::size_t rep) {
  return draw_shocks(rng::derive_seed(d.seed, rep, rng::Purpose::ife), d.H, d.n, d.T);
}

struct HistogramBin {
  std::string estimator;
  double left = 0.0;
  double right = 0.0;
  double density = 0.0;
};

struct Summary {
  std::vector<double> fe;
  std::vector<double> ife;
  double mean_fe = 0.0, mean_ife = 0.0;
  double sd_fe = 0.0, sd_ife = 0.0;
  std::vector<HistogramBin> histogram;
};

inline constexpr std::size_t histogram_bins = 60;

inline double sample_mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// Sample standard deviation (R-1 denominator); 0 for a single value.
inline double sample_sd(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = sample_mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

// Density histogram of both estimators over 60 equal-width bins spanning the
// pooled range.
inline std::vector<HistogramBin> density_histogram(const std::vector<double>& fe, const std::vector<double>& ife) {
  double lo = std::min(*std::min_element(fe.begin(), fe.end()), *std::min_element(ife.begin(), ife.end()));
  double hi = std::max(*std::max_element(fe.begin(), fe.end()), *std::max_element(ife.begin(), ife.end()));
  if (hi <= lo) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double width = (hi - lo) / static_cast<double>(histogram_bins);
  std::vector<HistogramBin> bins;
  for (const auto& [name, values] : {std::pair{"fe", &fe}, std::pair{"ife", &ife}}) {
    std::vector<std::size_t> counts(histogram_bins, 0);
    for (double x : *values) {
      auto b = static_cast<std::size_t>((x - lo) / width);
      counts[std::min(b, histogram_bins - 1)]++;
    }
    for (std::size_t b = 0; b < histogram_bins; ++b) {
      bins.push_back({name, lo + width * static_cast<double>(b), lo + width * static_cast<double>(b + 1),
                      static_cast<double>(counts[b]) / (static_cast<double>(values->size()) * width)});
    }
  }
  return bins;
}

// Replicates the design R times; replication r uses streams derived from
// (seed, r) only, so the result does not depend on scheduling.
inline Summary ns_experiment(const Design& d, unsigned threads = 1) {
  validate(d);
  Summary out;
  out.fe.resize(d.R);
  out.ife.resize(d.R);
  parallel_for(d.R, threads, [&](std::size_t r) {
    const auto panel = generate_panel(d, r);
    out.fe[r] = ns_fe(panel).theta_hat;
    out.ife[r] = ns_ife(out.fe[r], replication_shocks(d, r));
  });
  out.mean_fe = sample_mean(out.fe);
  out.mean_ife = sample_mean(out.ife);
  out.sd_fe = sample_sd(out.fe);
  out.sd_ife = sample_sd(out.ife);
  out.histogram = density_histogram(out.fe, out.ife);
  return out;
}

inline void write_histogram_csv(std::ostream& out, const std::vector<HistogramBin>& bins) {
  out << "estimator,bin_left,bin_right,density\n";
  char line[160];
  for (const auto& b : bins) {
    std::snprintf(line, sizeof line, "%s,%.6g,%.6g,%.6g\n", b.estimator.c_str(), b.left, b.right, b.density);
    out << line;
  }
}

}  // namespace panelfe::ns
