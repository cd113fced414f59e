#pragma once

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "panelfe/error.hpp"
#include "panelfe/fe.hpp"
#include "panelfe/indirect.hpp"
#include "panelfe/jackknife.hpp"
#include "panelfe/montecarlo.hpp"
#include "panelfe/neyman_scott.hpp"
#include "panelfe/panel_io.hpp"

#ifndef PANELFE_VERSION
#define PANELFE_VERSION "0.0.0"
#endif

namespace panelfe::cli {

inline constexpr const char* version = PANELFE_VERSION;
inline constexpr const char* output_dir_env = "PANELFE_OUTPUT_DIR";

enum class Exit { ok = 0, input = 2, numerical = 3 };

// Every key doubles as a config-file key and as a --flag.
struct RunConfig {
  std::string command;
  std::optional<std::string> data;
  std::optional<std::string> schema;
  std::optional<std::string> family;
  std::string method = "ife";
  std::size_t H = 10;
  std::uint64_t seed = 1;
  std::size_t R = 200;
  std::string design = "varying_T";
  std::optional<std::string> out;
  std::string format = "csv";
  unsigned threads = 1;
  int verbosity = 0;
  std::optional<std::size_t> n;
  std::optional<std::size_t> T;
  std::optional<double> theta0;
  std::vector<std::string> methods;
};

// Echo of every setting, written into each output file.
inline nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j;
  j["command"] = c.command;
  auto put = [&j](const char* key, const auto& value) {
    if (value) j[key] = *value;
    else j[key] = nullptr;
  };
  put("data", c.data);
  put("schema", c.schema);
  put("family", c.family);
  j["method"] = c.method;
  j["H"] = c.H;
  j["seed"] = c.seed;
  j["R"] = c.R;
  j["design"] = c.design;
  put("out", c.out);
  j["format"] = c.format;
  j["threads"] = c.threads;
  j["verbosity"] = c.verbosity;
  put("n", c.n);
  put("T", c.T);
  put("theta0", c.theta0);
  j["methods"] = c.methods;
  return j;
}

inline RunConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw data_error("config must be a JSON object");
  static const std::vector<std::string> known{"command", "data",   "schema", "family",  "method",
                                              "H",       "seed",   "R",      "design",  "out",
                                              "format",  "threads", "verbosity", "n", "T", "theta0", "methods"};
  for (const auto& [key, value] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw data_error("unknown config key '" + key + "'");
    }
  }
  RunConfig c;
  try {
    auto opt = [&j](const char* key, auto& field) {
      if (j.contains(key) && !j.at(key).is_null()) field = j.at(key).get<typename std::decay_t<decltype(field)>::value_type>();
    };
    auto req = [&j](const char* key, auto& field) {
      if (j.contains(key) && !j.at(key).is_null()) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    req("command", c.command);
    opt("data", c.data);
    opt("schema", c.schema);
    opt("family", c.family);
    req("method", c.method);
    req("H", c.H);
    req("seed", c.seed);
    req("R", c.R);
    req("design", c.design);
    opt("out", c.out);
    req("format", c.format);
    req("threads", c.threads);
    req("verbosity", c.verbosity);
    opt("n", c.n);
    opt("T", c.T);
    opt("theta0", c.theta0);
    req("methods", c.methods);
  } catch (const nlohmann::json::exception& e) {
    throw data_error(std::string("config: ") + e.what());
  }
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open config " + path);
  try {
    return config_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw data_error("config " + path + ": " + e.what());
  }
}

// Relative output paths land in $PANELFE_OUTPUT_DIR when it is set.
inline std::filesystem::path output_path(const std::string& out) {
  std::filesystem::path path(out);
  if (const char* dir = std::getenv(output_dir_env); dir && *dir && path.is_relative()) {
    path = std::filesystem::path(dir) / path;
  }
  return path;
}

inline std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

inline std::string fmt2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

// A finished run: a table of rows plus metadata, rendered to CSV (metadata
// as leading '#' lines) or JSON.
struct Report {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<std::string> columns;
  std::vector<std::vector<nlohmann::json>> rows;
};

inline std::string render_cell(const nlohmann::json& cell) {
  if (cell.is_number_float()) return fmt6(cell.get<double>());
  if (cell.is_string()) return cell.get<std::string>();
  return cell.dump();
}

inline void write_report(std::ostream& out, const Report& report, const RunConfig& config) {
  nlohmann::json meta = report.meta;
  meta["version"] = version;
  meta["seed"] = config.seed;
  meta["config"] = to_json(config);
  if (config.format == "json") {
    nlohmann::json doc;
    doc["meta"] = meta;
    doc["columns"] = report.columns;
    doc["rows"] = nlohmann::json::array();
    for (const auto& row : report.rows) {
      nlohmann::json r = nlohmann::json::object();
      for (std::size_t k = 0; k < row.size(); ++k) r[report.columns[k]] = row[k];
      doc["rows"].push_back(r);
    }
    out << doc.dump(2) << "\n";
    return;
  }
  for (const auto& [key, value] : meta.items()) {
    out << "# " << key << "=" << (value.is_string() ? value.get<std::string>() : value.dump()) << "\n";
  }
  for (std::size_t k = 0; k < report.columns.size(); ++k) out << (k ? "," : "") << report.columns[k];
  out << "\n";
  for (const auto& row : report.rows) {
    for (std::size_t k = 0; k < row.size(); ++k) out << (k ? "," : "") << render_cell(row[k]);
    out << "\n";
  }
}

// Writes the machine-readable report to --out, or to `console` without one.
inline void emit(const Report& report, const RunConfig& config, std::ostream& console) {
  if (!config.out) {
    write_report(console, report, config);
    return;
  }
  const auto path = output_path(*config.out);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream file(path, std::ios::binary);
  if (!file) throw data_error("cannot write " + path.string());
  write_report(file, report, config);
}

struct Inputs {
  PanelData panel;
  Schema schema;
};

inline Inputs load_inputs(const RunConfig& config) {
  if (!config.data) throw data_error("--data is required for '" + config.command + "'");
  Schema schema;
  if (config.schema) {
    schema = load_schema(*config.schema);
    if (config.family && parse_family(*config.family) != schema.family) {
      throw data_error("--family " + *config.family + " contradicts the schema");
    }
  } else if (config.family) {
    nlohmann::json doc;
    doc["family"] = *config.family;
    schema = parse_schema(doc);
  } else {
    throw data_error("either --schema or --family is required");
  }
  return {load_panel(*config.data, schema), schema};
}

inline FitOptions fit_options(const Schema& schema) {
  FitOptions opts;
  opts.alpha_bound = schema.alpha_bound;
  return opts;
}

inline std::vector<std::string> coefficient_names(const PanelData& panel, Family family) {
  if (!family.is_index_model()) return {"variance"};
  return panel.column_names;
}

inline void describe_fit(Report& report, const FEFit& fit, const PanelData& panel) {
  report.meta["n"] = panel.n;
  report.meta["T"] = panel.T;
  report.meta["dropped"] = fit.dropped.size();
  report.meta["loglik"] = fmt6(fit.loglik);
  report.meta["converged"] = fit.trace.converged;
  report.meta["iterations"] = fit.trace.iterations;
}

inline void print_table(std::ostream& console, const std::vector<std::string>& names,
                        const std::vector<std::pair<std::string, std::pair<Vector, Vector>>>& estimators) {
  char line[256];
  std::snprintf(line, sizeof line, "%-16s", "");
  console << line;
  for (const auto& [label, values] : estimators) {
    std::snprintf(line, sizeof line, "%12s", label.c_str());
    console << line;
  }
  console << "\n";
  for (std::size_t k = 0; k < names.size(); ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    std::snprintf(line, sizeof line, "%-16s", names[k].c_str());
    console << line;
    for (const auto& [label, values] : estimators) {
      std::snprintf(line, sizeof line, "%12s", fmt2(values.first[kk]).c_str());
      console << line;
    }
    console << "\n" << std::string(16, ' ');
    for (const auto& [label, values] : estimators) {
      std::snprintf(line, sizeof line, "%12s", ("(" + fmt2(values.second[kk]) + ")").c_str());
      console << line;
    }
    console << "\n";
  }
}

inline int cmd_fit(const RunConfig& config, std::ostream& console) {
  const auto in = load_inputs(config);
  const FEFit fit = fit_fe(in.panel, in.schema.family, fit_options(in.schema));
  const auto names = coefficient_names(in.panel, in.schema.family);
  Report report;
  report.meta["command"] = "fit";
  report.meta["family"] = std::string(to_string(in.schema.family.kind));
  describe_fit(report, fit, in.panel);
  report.columns = {"name", "estimate", "se"};
  for (std::size_t k = 0; k < names.size(); ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    report.rows.push_back({names[k], fit.theta_hat[kk], fit.se[kk]});
  }
  if (config.out) print_table(console, names, {{"FE", {fit.theta_hat, fit.se}}});
  emit(report, config, console);
  return 0;
}

inline int cmd_correct(const RunConfig& config, std::ostream& console) {
  const auto in = load_inputs(config);
  const Family family = in.schema.family;
  const FitOptions opts = fit_options(in.schema);
  const auto names = coefficient_names(in.panel, family);
  Report report;
  report.meta["command"] = "correct";
  report.meta["family"] = std::string(to_string(family.kind));
  report.meta["method"] = config.method;

  std::string label;
  Vector corrected, corrected_se;
  std::optional<FEFit> base;
  if (config.method == "ife") {
    base = fit_fe(in.panel, family, opts);
    const auto shocks = draw_shocks(config.seed, config.H, in.panel.n, in.panel.T);
    SolverOptions solver;
    solver.inner = opts;
    solver.threads = config.threads;
    const IFEFit fit = solve_ife(*base, shocks, in.panel, family, solver);
    label = "ife-" + std::to_string(config.H);
    corrected = fit.theta_tilde;
    corrected_se = fit.se;
    report.meta["H"] = config.H;
    report.meta["residual"] = fmt6(fit.residual);
    report.meta["converged"] = fit.converged();
    report.meta["status"] = std::string(to_string(fit.status));
    report.meta["solver_evaluations"] = fit.solver_trace.size();
  } else if (config.method == "hbc" || config.method == "bc_hn") {
    const JackknifeFit fit = config.method == "hbc" ? hbc(in.panel, family, opts) : bc_hn(in.panel, family, opts);
    base = fit.full;
    label = config.method;
    corrected = fit.theta_corrected;
    corrected_se = fit.se;
    report.meta["subfits"] = fit.subfits.size();
    report.meta["se_note"] = "full-sample FE standard errors";
  } else {
    throw data_error("unknown method '" + config.method + "' (expected ife, hbc or bc_hn)");
  }
  describe_fit(report, *base, in.panel);
  report.meta["fe_converged"] = base->trace.converged;
  report.columns = {"estimator", "name", "estimate", "se"};
  for (std::size_t k = 0; k < names.size(); ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    report.rows.push_back({"fe", names[k], base->theta_hat[kk], base->se[kk]});
  }
  for (std::size_t k = 0; k < names.size(); ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    report.rows.push_back({label, names[k], corrected[kk], corrected_se[kk]});
  }
  if (config.out) print_table(console, names, {{"FE", {base->theta_hat, base->se}}, {label, {corrected, corrected_se}}});
  emit(report, config, console);
  return 0;
}

inline mc::Design build_design(const RunConfig& config, std::ostream& console) {
  std::vector<mc::Method> methods;
  for (const auto& m : config.methods) methods.push_back(mc::parse_method(m));
  if (config.methods.empty()) methods = {mc::Method::fe, mc::Method::ife};
  const auto kind = mc::parse_design_kind(config.design);
  mc::Design d;
  if (kind == mc::DesignKind::varying_T) {
    d = mc::varying_T_design(config.n.value_or(100), config.T.value_or(4), config.R, config.H, config.seed, methods);
    if (config.theta0) d.theta0 = Vector::Constant(1, *config.theta0);
    if (config.family && parse_family(*config.family).kind != FamilyKind::probit) {
      throw data_error("the varying_T design is a probit design");
    }
  } else {
    const bool dynamic = kind == mc::DesignKind::calibrated_dynamic;
    PanelData panel;
    Family family{FamilyKind::probit};
    FitOptions opts;
    if (config.data) {
      const auto in = load_inputs(config);
      panel = in.panel;
      family = in.schema.family;
      opts = fit_options(in.schema);
      if (dynamic != panel.lag_column.has_value()) {
        throw data_error(dynamic ? "calibrated_dynamic needs a schema with a lag column"
                                 : "calibrated_static needs a schema without a lag column");
      }
    } else {
      panel = mc::synthetic_probit_panel(rng::derive_seed(config.seed, 0, rng::Purpose::calibration),
                                         config.n.value_or(500), config.T.value_or(9), dynamic);
      console << "no --data: calibrating on a seeded synthetic probit panel\n";
    }
    const auto calibration = mc::calibrate(panel, family, opts);
    d = mc::calibrated_design(calibration, family, config.R, config.H, config.seed, methods);
    d.fit = opts;
  }
  d.threads = config.threads;
  return d;
}

inline void print_mc_table(std::ostream& console, const mc::MCResult& result) {
  char line[256];
  std::snprintf(line, sizeof line, "%-10s %-14s %10s %10s %10s %6s\n", "method", "coefficient", "bias", "std dev",
                "coverage", "R_eff");
  console << line;
  for (const auto& r : result.rows) {
    std::snprintf(line, sizeof line, "%-10s %-14s %10s %10s %10s %6zu\n", r.method.c_str(), r.coefficient.c_str(),
                  fmt2(r.bias).c_str(), fmt2(r.stddev).c_str(), fmt2(r.coverage).c_str(), r.R_effective);
    console << line;
  }
}

inline int cmd_mc(const RunConfig& config, std::ostream& console) {
  const mc::Design d = build_design(config, console);
  const mc::MCResult result = mc::run_design(d);
  Report report;
  report.meta["command"] = "mc";
  report.meta["design"] = std::string(mc::to_string(d.kind));
  report.meta["n"] = d.kind == mc::DesignKind::varying_T ? d.n : d.regressors.n;
  report.meta["T"] = d.T;
  report.meta["R"] = d.R;
  report.meta["H"] = d.H;
  std::vector<double> truth(d.theta0.data(), d.theta0.data() + d.theta0.size());
  report.meta["theta0"] = truth;
  report.meta["unreliable"] = result.unreliable;
  report.columns = {"method", "coefficient", "bias", "stddev", "coverage", "R_effective"};
  for (const auto& r : result.rows) {
    report.rows.push_back({r.method, r.coefficient, r.bias, r.stddev, r.coverage, r.R_effective});
  }
  print_mc_table(console, result);
  char line[64];
  std::snprintf(line, sizeof line, "wall time %.1fs\n", result.wall_seconds);
  console << line;
  emit(report, config, console);
  if (result.unreliable) {
    std::cerr << "result flagged unreliable: a method lost more than 20% of replications\n";
    return static_cast<int>(Exit::numerical);
  }
  return 0;
}

inline int cmd_ns_demo(const RunConfig& config, std::ostream& console) {
  ns::Design d;
  d.theta0 = config.theta0.value_or(2.0);
  d.n = config.n.value_or(2500);
  d.T = config.T.value_or(5);
  d.R = config.R;
  d.H = config.H;
  d.seed = config.seed;
  const auto summary = ns::ns_experiment(d, config.threads);
  char line[256];
  std::snprintf(line, sizeof line, "mean FE %.4f (sd %.4f), mean IFE-%zu %.4f (sd %.4f), FE target %.4f, truth %.4f\n",
                summary.mean_fe, summary.sd_fe, d.H, summary.mean_ife, summary.sd_ife,
                d.theta0 * (1.0 - 1.0 / static_cast<double>(d.T)), d.theta0);
  console << line;
  Report report;
  report.meta["command"] = "ns-demo";
  report.meta["n"] = d.n;
  report.meta["T"] = d.T;
  report.meta["R"] = d.R;
  report.meta["H"] = d.H;
  report.meta["theta0"] = d.theta0;
  report.meta["mean_fe"] = fmt6(summary.mean_fe);
  report.meta["mean_ife"] = fmt6(summary.mean_ife);
  report.meta["sd_fe"] = fmt6(summary.sd_fe);
  report.meta["sd_ife"] = fmt6(summary.sd_ife);
  report.columns = {"estimator", "bin_left", "bin_right", "density"};
  for (const auto& b : summary.histogram) report.rows.push_back({b.estimator, b.left, b.right, b.density});
  emit(report, config, console);
  return 0;
}

// Runs one command; maps input problems to exit 2 and numerical failures
// to exit 3.
inline int run(const RunConfig& config, std::ostream& console = std::cout, std::ostream& errors = std::cerr) {
  try {
    if (config.format != "csv" && config.format != "json") {
      throw data_error("--format must be csv or json");
    }
    if (config.command == "fit") return cmd_fit(config, console);
    if (config.command == "correct") return cmd_correct(config, console);
    if (config.command == "mc") return cmd_mc(config, console);
    if (config.command == "ns-demo") return cmd_ns_demo(config, console);
    throw data_error("unknown command '" + config.command + "'");
  } catch (const data_error& e) {
    errors << "error: " << e.what() << "\n";
    return static_cast<int>(Exit::input);
  } catch (const panelfe::domain_error& e) {
    errors << "error: " << e.what() << "\n";
    return static_cast<int>(Exit::input);
  } catch (const estimation_error& e) {
    errors << "numerical failure: " << e.what() << "\n";
    return static_cast<int>(Exit::numerical);
  } catch (const std::filesystem::filesystem_error& e) {
    errors << "error: " << e.what() << "\n";
    return static_cast<int>(Exit::input);
  }
}

}  // namespace panelfe::cli
