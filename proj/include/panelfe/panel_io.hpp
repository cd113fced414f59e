#pragma once

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "panelfe/error.hpp"
#include "panelfe/family.hpp"
#include "panelfe/panel.hpp"

namespace panelfe {

inline constexpr double default_alpha_bound = 50.0;

struct Schema {
  Family family;
  std::optional<std::string> lag_column;
  double alpha_bound = default_alpha_bound;
};

inline Schema parse_schema(const nlohmann::json& doc) {
  Schema schema;
  if (!doc.is_object()) throw data_error("schema must be a JSON object");
  if (!doc.contains("family")) throw data_error("schema is missing 'family'");
  schema.family = parse_family(doc.at("family").get<std::string>());
  if (doc.contains("lag_column") && !doc.at("lag_column").is_null()) {
    schema.lag_column = doc.at("lag_column").get<std::string>();
  }
  if (doc.contains("alpha_bound")) {
    schema.alpha_bound = doc.at("alpha_bound").get<double>();
    if (!(schema.alpha_bound > 0.0)) throw data_error("alpha_bound must be positive");
  } else if (!schema.family.is_index_model()) {
    // neyman-scott effects are outcome means, on the scale of the data
    schema.alpha_bound = std::numeric_limits<double>::infinity();
  }
  return schema;
}

inline Schema load_schema(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open schema " + path);
  try {
    return parse_schema(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw data_error("schema " + path + ": " + e.what());
  }
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    cells.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

template <typename Number>
Number parse_cell(std::string_view cell, std::size_t row, std::string_view column) {
  Number value{};
  const auto* end = cell.data() + cell.size();
  const auto [ptr, ec] = std::from_chars(cell.data(), end, value);
  if (cell.empty() || ec != std::errc() || ptr != end) {
    throw data_error("non-numeric cell '" + std::string(cell) + "' at row " + std::to_string(row) +
                     ", column '" + std::string(column) + "'");
  }
  return value;
}

}  // namespace detail

// Reads `id,t,y,<regressors...>` rows in any order into a balanced panel
// sorted by (id, t). Rejects unbalanced panels, duplicate (id, t) pairs,
// non-numeric cells and outcomes outside the family's support.
inline PanelData parse_panel_csv(std::istream& in, const Schema& schema) {
  std::string line;
  std::size_t row = 0;
  if (!std::getline(in, line)) throw data_error("empty CSV");
  ++row;
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // BOM
  // Owned copies: `line` is reused for every row.
  const auto views = detail::split_csv(line);
  const std::vector<std::string> header(views.begin(), views.end());
  if (header.size() < 3 || header[0] != "id" || header[1] != "t" || header[2] != "y") {
    throw data_error("CSV header must start with id,t,y");
  }
  std::vector<std::string> names(header.begin() + 3, header.end());
  const std::size_t p = names.size();

  struct Record {
    std::vector<double> values;  // y then regressors
    std::size_t row;
  };
  std::map<std::int64_t, std::map<std::int64_t, Record>> records;
  std::set<std::int64_t> all_periods;
  while (std::getline(in, line)) {
    ++row;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_csv(line);
    if (cells.size() != p + 3) {
      throw data_error("row " + std::to_string(row) + " has " + std::to_string(cells.size()) +
                       " cells, expected " + std::to_string(p + 3));
    }
    const auto id = detail::parse_cell<std::int64_t>(cells[0], row, "id");
    const auto t = detail::parse_cell<std::int64_t>(cells[1], row, "t");
    Record rec{{}, row};
    rec.values.reserve(p + 1);
    for (std::size_t c = 2; c < cells.size(); ++c) {
      rec.values.push_back(detail::parse_cell<double>(cells[c], row, header[c]));
    }
    if (!valid_outcome(schema.family, rec.values[0])) {
      throw data_error("outcome " + std::string(cells[2]) + " at row " + std::to_string(row) +
                       " is outside the " + std::string(to_string(schema.family.kind)) + " support");
    }
    auto [it, inserted] = records[id].emplace(t, std::move(rec));
    if (!inserted) {
      throw data_error("duplicate observation: id " + std::to_string(id) + ", t " + std::to_string(t) +
                       " (rows " + std::to_string(it->second.row) + " and " + std::to_string(row) + ")");
    }
    all_periods.insert(t);
  }
  if (records.empty()) throw data_error("CSV has no observations");

  PanelData panel;
  panel.n = records.size();
  panel.T = all_periods.size();
  panel.p = p;
  panel.column_names = std::move(names);
  panel.periods.assign(all_periods.begin(), all_periods.end());
  panel.y.reserve(panel.n * panel.T);
  panel.X.reserve(panel.n * panel.T * p);
  for (const auto& [id, by_period] : records) {
    if (by_period.size() != panel.T) throw data_error("unbalanced: id " + std::to_string(id));
    panel.ids.push_back(id);
    for (const auto& [t, rec] : by_period) {
      panel.y.push_back(rec.values[0]);
      panel.X.insert(panel.X.end(), rec.values.begin() + 1, rec.values.end());
    }
  }
  if (schema.lag_column) {
    const auto pos = std::find(panel.column_names.begin(), panel.column_names.end(), *schema.lag_column);
    if (pos == panel.column_names.end()) {
      throw data_error("lag column '" + *schema.lag_column + "' not found in CSV header");
    }
    panel.lag_column = static_cast<std::size_t>(pos - panel.column_names.begin());
  }
  validate_panel(panel, schema.family);
  return panel;
}

inline PanelData load_panel(const std::string& path, const Schema& schema) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open data file " + path);
  return parse_panel_csv(in, schema);
}

// Shortest representation that reads back to the same double.
inline std::string format_exact(double value) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, ptr);
}

inline void write_panel_csv(std::ostream& out, const PanelData& panel) {
  out << "id,t,y";
  for (const auto& name : panel.column_names) out << ',' << name;
  out << '\n';
  for (std::size_t i = 0; i < panel.n; ++i) {
    for (std::size_t t = 0; t < panel.T; ++t) {
      out << panel.ids[i] << ',' << panel.periods[t] << ',' << format_exact(panel.outcome(i, t));
      for (double x : panel.row(i, t)) out << ',' << format_exact(x);
      out << '\n';
    }
  }
}

inline void save_panel(const std::string& path, const PanelData& panel) {
  std::ofstream out(path);
  if (!out) throw data_error("cannot write " + path);
  write_panel_csv(out, panel);
}

}  // namespace panelfe
