#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "panelfe/cli.hpp"

namespace {

// Flag values; set ones override the config file.
struct Flags {
  std::optional<std::string> config, data, schema, family, method, design, out, format;
  std::optional<std::size_t> H, R, n, T;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::optional<double> theta0;
  std::optional<std::vector<std::string>> methods;
  int verbosity = 0;
};

void add_flags(CLI::App& app, Flags& f) {
  app.add_option("--config", f.config, "JSON config file; flags override its keys");
  app.add_option("--data", f.data, "panel CSV (id,t,y,regressors...)");
  app.add_option("--schema", f.schema, "JSON schema: family, lag_column, alpha_bound");
  app.add_option("--family", f.family, "probit | poisson | neyman-scott");
  app.add_option("--method", f.method, "correction: ife | hbc | bc_hn");
  app.add_option("--H", f.H, "simulation paths");
  app.add_option("--seed", f.seed, "random seed");
  app.add_option("--R", f.R, "Monte Carlo replications");
  app.add_option("--design", f.design, "varying_T | calibrated_static | calibrated_dynamic");
  app.add_option("--out", f.out, "output file (relative to $PANELFE_OUTPUT_DIR if set)");
  app.add_option("--format", f.format, "csv | json");
  app.add_option("--threads", f.threads, "worker threads");
  app.add_option("--n", f.n, "individuals (mc, ns-demo)");
  app.add_option("--T", f.T, "periods (mc, ns-demo)");
  app.add_option("--theta0", f.theta0, "true coefficient (varying_T, ns-demo)");
  app.add_option("--methods", f.methods, "mc methods: fe ife hbc bc_hn truth")->delimiter(',');
  app.add_flag("-v,--verbose", f.verbosity, "more output");
}

template <typename T, typename U>
void override_with(const std::optional<T>& flag, U& field) {
  if (flag) field = *flag;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fixed-effect estimation of nonlinear panel models with indirect bias correction"};
  app.set_version_flag("--version", std::string(panelfe::cli::version));
  app.require_subcommand(1);
  Flags flags;
  for (const char* name : {"fit", "correct", "mc", "ns-demo"}) add_flags(*app.add_subcommand(name), flags);
  app.get_subcommand("fit")->description("fixed-effect MLE: name,estimate,se");
  app.get_subcommand("correct")->description("FE next to a bias-corrected estimate");
  app.get_subcommand("mc")->description("Monte Carlo design: bias, std dev, coverage");
  app.get_subcommand("ns-demo")->description("Neyman-Scott FE vs IFE densities");
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return static_cast<int>(panelfe::cli::Exit::input);
  }

  panelfe::cli::RunConfig config;
  try {
    if (flags.config) config = panelfe::cli::load_config(*flags.config);
  } catch (const panelfe::data_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(panelfe::cli::Exit::input);
  }
  config.command = app.get_subcommands().front()->get_name();
  if (flags.data) config.data = flags.data;
  if (flags.schema) config.schema = flags.schema;
  if (flags.family) config.family = flags.family;
  if (flags.out) config.out = flags.out;
  if (flags.n) config.n = flags.n;
  if (flags.T) config.T = flags.T;
  if (flags.theta0) config.theta0 = flags.theta0;
  override_with(flags.method, config.method);
  override_with(flags.design, config.design);
  override_with(flags.format, config.format);
  override_with(flags.H, config.H);
  override_with(flags.R, config.R);
  override_with(flags.seed, config.seed);
  override_with(flags.threads, config.threads);
  override_with(flags.methods, config.methods);
  if (flags.verbosity) config.verbosity = flags.verbosity;
  return panelfe::cli::run(config);
}
