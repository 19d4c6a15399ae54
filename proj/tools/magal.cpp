#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "mag/mag.hpp"

namespace {

int run_command(const std::string& config, const std::string& out, int threads) {
  const auto cfg = mag::load_config(config);
  const auto outcome = mag::run(cfg, out, threads);
  for (const auto& path : outcome.written) {
    std::cout << "wrote " << path.string() << '\n';
  }
  if (outcome.result.dual) {
    const auto& r = outcome.result.report;
    std::cout << "total " << mag::format_number(r.total) << "  explicit " << mag::format_number(r.explicit_bound)
              << "  intervals " << outcome.result.trajectory->partition().total_intervals() << '\n';
  }
  (outcome.exit_code == 0 ? std::cout : std::cerr) << outcome.message << '\n';
  return outcome.exit_code;
}

int tableau_command(const std::string& method, int q) {
  const auto m = mag::method_from_string(method);
  std::cout << mag::to_json(mag::tableau(m, q)).dump(2) << '\n';
  return 0;
}

int models_command() {
  for (const auto& name : mag::model_names()) {
    const auto m = mag::model(name);
    std::cout << name << "\tN=" << m.dimension << "\tT=" << mag::format_number(m.horizon) << '\t' << m.description
              << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-adaptive Galerkin ODE solver with a posteriori error control"};
  app.require_subcommand(1);

  std::string config;
  std::string out;
  int threads = -1;
  auto* run = app.add_subcommand("run", "Solve, estimate and (optionally) adapt as described by a JSON config");
  run->add_option("--config", config, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out, "Output directory (overrides the config)");
  run->add_option("--threads", threads, "Worker threads, 0 = auto")->check(CLI::NonNegativeNumber);

  std::string method = "mcG";
  int q = 1;
  auto* tab = app.add_subcommand("tableau", "Print the nodes and quadrature weights of a method as JSON");
  tab->add_option("--method", method, "mcG or mdG")->check(CLI::IsMember({"mcG", "mdG"}));
  tab->add_option("--q", q, "Polynomial degree");

  auto* models = app.add_subcommand("models", "List the model catalog");
  auto* version = app.add_subcommand("version", "Print the version");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (run->parsed()) {
      return run_command(config, out, threads);
    }
    if (tab->parsed()) {
      return tableau_command(method, q);
    }
    if (models->parsed()) {
      return models_command();
    }
    if (version->parsed()) {
      std::cout << "magal " << mag::version << '\n';
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
