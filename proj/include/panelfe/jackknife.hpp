#pragma once

#include <optional>
#include <string>
#include <vector>

#include "panelfe/error.hpp"
#include "panelfe/fe.hpp"
#include "panelfe/panel.hpp"

namespace panelfe {

enum class JackknifeMethod { hbc, bc_hn };

inline std::string_view to_string(JackknifeMethod method) {
  return method == JackknifeMethod::hbc ? "hbc" : "bc_hn";
}

// Jackknife-corrected estimate. `subfits` holds the full-sample fit first,
// then the constituent fits: for hbc the half-panel fits in split order
// (first/second half, then the mirrored split when T is odd), for bc_hn
// the T leave-one-period-out fits in period order. se is the full-sample
// FE standard error.
struct JackknifeFit {
  Vector theta_corrected;
  JackknifeMethod method = JackknifeMethod::hbc;
  FEFit full;
  std::vector<FEFit> subfits;
  Vector se;
};

// Recomputes the combination rule from stored subfits.
inline Vector jackknife_combination(JackknifeMethod method, const Vector& full, const std::vector<Vector>& parts,
                                    std::size_t T) {
  Vector mean = Vector::Zero(full.size());
  for (const auto& v : parts) mean += v;
  mean /= static_cast<double>(parts.size());
  if (method == JackknifeMethod::hbc) return 2.0 * full - mean;
  const double t = static_cast<double>(T);
  return t * full - (t - 1.0) * mean;
}

inline Vector jackknife_combination(const JackknifeFit& fit) {
  std::vector<Vector> parts;
  for (const auto& f : fit.subfits) parts.push_back(f.theta_hat);
  return jackknife_combination(fit.method, fit.full.theta_hat, parts, fit.full.T);
}

// Half-panel jackknife: 2*theta_full - (theta_first + theta_second)/2. For
// odd T the two splits (ceil/floor and floor/ceil) are averaged.
// `full` may carry an already computed full-sample fit of the same panel.
inline JackknifeFit hbc(const PanelData& panel, Family family, const FitOptions& opts = {},
                        std::optional<FEFit> full = std::nullopt) {
  if (panel.T < 4) throw data_error("half-panel jackknife needs T >= 4 (each half needs >= 2 periods)");
  JackknifeFit out;
  out.method = JackknifeMethod::hbc;
  out.full = full ? std::move(*full) : fit_fe(panel, family, opts);
  FitOptions sub_opts = opts;
  sub_opts.compute_covariance = false;
  sub_opts.theta_init = out.full.theta_hat;

  const std::size_t lower = panel.T / 2, upper = panel.T - lower;
  std::vector<std::size_t> first_lengths{upper};
  if (upper != lower) first_lengths.push_back(lower);
  for (std::size_t first : first_lengths) {
    const PanelData halves[2] = {period_range(panel, 0, first), period_range(panel, first, panel.T - first)};
    for (int half = 0; half < 2; ++half) {
      try {
        out.subfits.push_back(fit_fe(halves[half], family, sub_opts));
      } catch (const estimation_error& e) {
        throw estimation_error(std::string(half == 0 ? "first" : "second") + " half (" +
                               std::to_string(halves[half].T) + " periods) failed: " + e.what());
      }
    }
  }
  out.theta_corrected = jackknife_combination(out);
  out.se = out.full.se;
  return out;
}

// Leave-one-period-out jackknife: T*theta_full - (T-1) * mean_t theta_(-t).
// Static models only.
inline JackknifeFit bc_hn(const PanelData& panel, Family family, const FitOptions& opts = {},
                          std::optional<FEFit> full = std::nullopt) {
  if (panel.lag_column) throw data_error("BC-HN is not applicable due to dynamics (lagged outcome present)");
  if (panel.T < 3) throw data_error("leave-one-out jackknife needs T >= 3");
  JackknifeFit out;
  out.method = JackknifeMethod::bc_hn;
  out.full = full ? std::move(*full) : fit_fe(panel, family, opts);
  FitOptions sub_opts = opts;
  sub_opts.compute_covariance = false;
  sub_opts.theta_init = out.full.theta_hat;
  for (std::size_t omit = 0; omit < panel.T; ++omit) {
    std::vector<std::size_t> keep;
    for (std::size_t t = 0; t < panel.T; ++t) {
      if (t != omit) keep.push_back(t);
    }
    try {
      out.subfits.push_back(fit_fe(select_periods(panel, keep), family, sub_opts));
    } catch (const estimation_error& e) {
      throw estimation_error("fit omitting period t=" + std::to_string(panel.periods[omit]) + " failed: " + e.what());
    }
  }
  out.theta_corrected = jackknife_combination(out);
  out.se = out.full.se;
  return out;
}

}  // namespace panelfe
