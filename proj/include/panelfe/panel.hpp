#pragma once

#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "panelfe/error.hpp"
#include "panelfe/family.hpp"

namespace panelfe {

// Balanced panel: outcome y(i,t) and regressors X(i,t,k), stored row-major
// with one contiguous row of p regressors per observation. Indices are
// zero-based; `ids` and `periods` keep the labels read from disk.
struct PanelData {
  std::size_t n = 0;
  std::size_t T = 0;
  std::size_t p = 0;
  std::vector<double> y;
  std::vector<double> X;
  // Column k* holding y(i,t-1) for a dynamic model. At t = 0 it holds the
  // observed initial condition y(i,-1).
  std::optional<std::size_t> lag_column;
  std::vector<std::string> column_names;
  std::vector<std::int64_t> ids;
  std::vector<std::int64_t> periods;

  std::size_t obs(std::size_t i, std::size_t t) const { return i * T + t; }
  double outcome(std::size_t i, std::size_t t) const { return y[obs(i, t)]; }
  double regressor(std::size_t i, std::size_t t, std::size_t k) const { return X[obs(i, t) * p + k]; }
  std::span<const double> row(std::size_t i, std::size_t t) const {
    return {X.data() + obs(i, t) * p, p};
  }
  std::span<const double> outcomes(std::size_t i) const { return {y.data() + i * T, T}; }
  bool dynamic() const { return lag_column.has_value(); }
};

namespace detail {

inline std::vector<std::int64_t> iota_labels(std::size_t count, std::int64_t first) {
  std::vector<std::int64_t> labels(count);
  std::iota(labels.begin(), labels.end(), first);
  return labels;
}

}  // namespace detail

// Checks shape, outcome support and the lag-column identity; throws
// data_error naming the first offending observation.
inline void validate_panel(const PanelData& panel, Family family) {
  if (panel.y.size() != panel.n * panel.T) throw data_error("outcome array does not match n*T");
  if (panel.X.size() != panel.n * panel.T * panel.p) throw data_error("regressor array does not match n*T*p");
  if (panel.column_names.size() != panel.p) throw data_error("need one name per regressor");
  if (panel.ids.size() != panel.n || panel.periods.size() != panel.T) {
    throw data_error("id/period labels do not match panel dimensions");
  }
  if (!family.is_index_model() && panel.p != 0) {
    throw data_error("neyman-scott panels carry no regressors");
  }
  for (std::size_t i = 0; i < panel.n; ++i) {
    for (std::size_t t = 0; t < panel.T; ++t) {
      if (!valid_outcome(family, panel.outcome(i, t))) {
        throw data_error("outcome " + std::to_string(panel.outcome(i, t)) + " at id " +
                         std::to_string(panel.ids[i]) + ", t " + std::to_string(panel.periods[t]) +
                         " is outside the " + std::string(to_string(family.kind)) + " support");
      }
    }
  }
  for (double x : panel.X) {
    if (!std::isfinite(x)) throw data_error("non-finite regressor value");
  }
  if (panel.lag_column) {
    const std::size_t k = *panel.lag_column;
    if (k >= panel.p) throw data_error("lag column index out of range");
    for (std::size_t i = 0; i < panel.n; ++i) {
      for (std::size_t t = 1; t < panel.T; ++t) {
        if (panel.regressor(i, t, k) != panel.outcome(i, t - 1)) {
          throw data_error("lag column '" + panel.column_names[k] + "' differs from y(t-1) at id " +
                           std::to_string(panel.ids[i]) + ", t " + std::to_string(panel.periods[t]));
        }
      }
    }
  }
}

// Builds and validates a panel with default labels (ids 1..n, periods 1..T).
inline PanelData make_panel(std::size_t n, std::size_t T, std::size_t p, std::vector<double> y,
                            std::vector<double> X, Family family,
                            std::vector<std::string> column_names = {},
                            std::optional<std::size_t> lag_column = std::nullopt) {
  PanelData panel;
  panel.n = n;
  panel.T = T;
  panel.p = p;
  panel.y = std::move(y);
  panel.X = std::move(X);
  panel.lag_column = lag_column;
  if (column_names.empty()) {
    for (std::size_t k = 0; k < p; ++k) column_names.push_back("x" + std::to_string(k + 1));
  }
  panel.column_names = std::move(column_names);
  panel.ids = detail::iota_labels(n, 1);
  panel.periods = detail::iota_labels(T, 1);
  validate_panel(panel, family);
  return panel;
}

inline PanelData select_individuals(const PanelData& panel, std::span<const std::size_t> keep) {
  PanelData out;
  out.n = keep.size();
  out.T = panel.T;
  out.p = panel.p;
  out.lag_column = panel.lag_column;
  out.column_names = panel.column_names;
  out.periods = panel.periods;
  out.y.reserve(out.n * out.T);
  out.X.reserve(out.n * out.T * out.p);
  for (std::size_t i : keep) {
    out.ids.push_back(panel.ids.at(i));
    for (std::size_t t = 0; t < panel.T; ++t) {
      out.y.push_back(panel.outcome(i, t));
      const auto r = panel.row(i, t);
      out.X.insert(out.X.end(), r.begin(), r.end());
    }
  }
  return out;
}

// Sub-panel over the given periods, in the given order. The lag column keeps
// its observed values, so a later block of a dynamic panel starts from the
// observed outcome preceding it.
inline PanelData select_periods(const PanelData& panel, std::span<const std::size_t> keep) {
  PanelData out;
  out.n = panel.n;
  out.T = keep.size();
  out.p = panel.p;
  out.lag_column = panel.lag_column;
  out.column_names = panel.column_names;
  out.ids = panel.ids;
  for (std::size_t t : keep) out.periods.push_back(panel.periods.at(t));
  out.y.reserve(out.n * out.T);
  out.X.reserve(out.n * out.T * out.p);
  for (std::size_t i = 0; i < panel.n; ++i) {
    for (std::size_t t : keep) {
      out.y.push_back(panel.outcome(i, t));
      const auto r = panel.row(i, t);
      out.X.insert(out.X.end(), r.begin(), r.end());
    }
  }
  return out;
}

inline PanelData period_range(const PanelData& panel, std::size_t first, std::size_t count) {
  std::vector<std::size_t> keep(count);
  std::iota(keep.begin(), keep.end(), first);
  return select_periods(panel, keep);
}

// Observed initial outcomes y(i,-1) of a dynamic panel, read from the lag
// column at the first period.
inline std::vector<double> initial_outcomes(const PanelData& panel) {
  if (!panel.lag_column) throw data_error("panel has no lag column");
  std::vector<double> init(panel.n);
  for (std::size_t i = 0; i < panel.n; ++i) init[i] = panel.regressor(i, 0, *panel.lag_column);
  return init;
}

}  // namespace panelfe
