#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mag/controller.hpp"
#include "mag/io.hpp"
#include "mag/models.hpp"

namespace mag {

/// Invalid run configuration; the message names source, line and key.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  /// Catalog model, or empty when the right-hand side is linear f = A u + b.
  std::string model;
  std::vector<std::vector<double>> linear_a;
  std::vector<double> linear_b;
  std::vector<double> initial;
  /// 0 = model default.
  double horizon = 0.0;
  std::vector<Method> methods;
  std::vector<int> orders;
  std::vector<double> steps;
  SolveSettings solve;
  /// "uniform", "error" (normalized final error, needs a closed form) or "given".
  std::string terminal_mode = "uniform";
  std::vector<double> terminal;
  std::vector<double> forcing;
  SolveSettings dual_solve{.tolerance = 1e-12, .max_sweeps = 200, .damping = 1.0, .quadrature_depth = 2, .threads = 1};
  bool adapt = false;
  AdaptSettings adapt_settings;
  std::string out_dir = "out";
};

namespace detail {

class ConfigReader {
 public:
  ConfigReader(std::string source, const std::string& text) : source_(std::move(source)), index_(text) {}

  [[noreturn]] void fail(const std::string& ptr, const std::string& msg) const {
    std::string key = ptr.empty() ? "(document)" : ptr;
    throw ConfigError(source_ + ":" + std::to_string(index_.line(ptr)) + ": " + key + ": " + msg);
  }

  void only_keys(const json& obj, const std::string& ptr, const std::set<std::string>& allowed) const {
    if (!obj.is_object()) {
      fail(ptr, "expected an object");
    }
    for (const auto& [key, _] : obj.items()) {
      if (!allowed.contains(key)) {
        fail(pointer_child(ptr, key), "unknown key '" + key + "'");
      }
    }
  }

  double number(const json& v, const std::string& ptr) const {
    if (!v.is_number()) {
      fail(ptr, "expected a number");
    }
    return v.get<double>();
  }

  double positive(const json& v, const std::string& ptr) const {
    const double x = number(v, ptr);
    if (!(x > 0.0) || !std::isfinite(x)) {
      fail(ptr, "must be positive");
    }
    return x;
  }

  int integer(const json& v, const std::string& ptr) const {
    if (!v.is_number_integer()) {
      fail(ptr, "expected an integer");
    }
    return v.get<int>();
  }

  std::string string(const json& v, const std::string& ptr) const {
    if (!v.is_string()) {
      fail(ptr, "expected a string");
    }
    return v.get<std::string>();
  }

  std::vector<double> vector(const json& v, const std::string& ptr, std::size_t n) const {
    if (!v.is_array()) {
      fail(ptr, "expected an array of numbers");
    }
    if (n != 0 && v.size() != n) {
      fail(ptr, "expected " + std::to_string(n) + " entries, got " + std::to_string(v.size()));
    }
    std::vector<double> out;
    for (std::size_t k = 0; k < v.size(); ++k) {
      out.push_back(number(v[k], ptr + "/" + std::to_string(k)));
    }
    return out;
  }

  /// A scalar applied to every component, or one entry per component.
  template <class T, class Read>
  std::vector<T> per_component(const json& v, const std::string& ptr, std::size_t n, Read read) const {
    if (!v.is_array()) {
      return std::vector<T>(n, read(v, ptr));
    }
    if (v.size() != n) {
      fail(ptr, "expected " + std::to_string(n) + " entries (one per component), got " + std::to_string(v.size()));
    }
    std::vector<T> out;
    for (std::size_t k = 0; k < n; ++k) {
      out.push_back(read(v[k], ptr + "/" + std::to_string(k)));
    }
    return out;
  }

  void solver(const json& v, const std::string& ptr, SolveSettings& s) const {
    only_keys(v, ptr, {"tolerance", "max_sweeps", "damping", "quadrature_depth", "threads"});
    if (v.contains("tolerance")) {
      s.tolerance = positive(v["tolerance"], ptr + "/tolerance");
    }
    if (v.contains("max_sweeps")) {
      s.max_sweeps = integer(v["max_sweeps"], ptr + "/max_sweeps");
      if (s.max_sweeps < 1) {
        fail(ptr + "/max_sweeps", "must be at least 1");
      }
    }
    if (v.contains("damping")) {
      s.damping = number(v["damping"], ptr + "/damping");
      if (!(s.damping > 0.0 && s.damping <= 1.0)) {
        fail(ptr + "/damping", "must lie in (0, 1]");
      }
    }
    if (v.contains("quadrature_depth")) {
      s.quadrature_depth = integer(v["quadrature_depth"], ptr + "/quadrature_depth");
      if (s.quadrature_depth < 0 || s.quadrature_depth > 16) {
        fail(ptr + "/quadrature_depth", "must lie in [0, 16]");
      }
    }
    if (v.contains("threads")) {
      const int t = integer(v["threads"], ptr + "/threads");
      if (t < 0) {
        fail(ptr + "/threads", "must be nonnegative");
      }
      s.threads = static_cast<unsigned>(t);
    }
  }

 private:
  std::string source_;
  LineIndex index_;
};

}  // namespace detail

/// Parses and validates a run configuration (a single JSON document).
inline RunConfig parse_config(const std::string& text, const std::string& source = "config") {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(source + ":" + std::to_string(LineIndex::line_of_offset(text, e.byte == 0 ? 0 : e.byte - 1)) +
                      ": syntax error: " + e.what());
  }
  const detail::ConfigReader rd(source, text);
  rd.only_keys(doc, "",
               {"model", "linear", "initial", "horizon", "method", "order", "step", "solver", "dual", "adapt", "output"});
  RunConfig cfg;

  std::size_t n = 0;
  if (doc.contains("model") == doc.contains("linear")) {
    rd.fail("", "exactly one of 'model' (catalog name) or 'linear' (f = A u + b) is required");
  }
  if (doc.contains("model")) {
    cfg.model = rd.string(doc["model"], "/model");
    const auto names = model_names();
    if (std::find(names.begin(), names.end(), cfg.model) == names.end()) {
      std::string list;
      for (const auto& name : names) {
        list += (list.empty() ? "" : ", ") + name;
      }
      rd.fail("/model", "unknown model '" + cfg.model + "' (available: " + list + ")");
    }
    n = model(cfg.model).dimension;
  } else {
    const auto& lin = doc["linear"];
    rd.only_keys(lin, "/linear", {"A", "b"});
    if (!lin.contains("A") || !lin["A"].is_array() || lin["A"].empty()) {
      rd.fail("/linear", "'A' must be a nonempty square matrix");
    }
    n = lin["A"].size();
    for (std::size_t r = 0; r < n; ++r) {
      cfg.linear_a.push_back(rd.vector(lin["A"][r], "/linear/A/" + std::to_string(r), n));
    }
    cfg.linear_b = lin.contains("b") ? rd.vector(lin["b"], "/linear/b", n) : std::vector<double>(n, 0.0);
    if (!doc.contains("initial") || !doc.contains("horizon")) {
      rd.fail("/linear", "a linear right-hand side needs 'initial' and 'horizon'");
    }
  }
  if (doc.contains("initial")) {
    cfg.initial = rd.vector(doc["initial"], "/initial", n);
  }
  if (doc.contains("horizon")) {
    cfg.horizon = rd.positive(doc["horizon"], "/horizon");
  }

  const auto read_method = [&](const json& v, const std::string& ptr) {
    const auto s = rd.string(v, ptr);
    if (s != "mcG" && s != "mdG") {
      rd.fail(ptr, "method must be \"mcG\" or \"mdG\"");
    }
    return method_from_string(s);
  };
  cfg.methods = doc.contains("method") ? rd.per_component<Method>(doc["method"], "/method", n, read_method)
                                       : std::vector<Method>(n, Method::mcG);
  const auto read_order = [&](const json& v, const std::string& ptr) { return rd.integer(v, ptr); };
  cfg.orders = doc.contains("order") ? rd.per_component<int>(doc["order"], "/order", n, read_order)
                                     : std::vector<int>(n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    const int q = cfg.orders[i];
    if (q < min_order(cfg.methods[i]) || q > max_order) {
      rd.fail(doc.contains("order") && doc["order"].is_array() ? "/order/" + std::to_string(i) : "/order",
              std::string(to_string(cfg.methods[i])) + " order must lie in [" +
                  std::to_string(min_order(cfg.methods[i])) + ", " + std::to_string(max_order) + "]");
    }
  }
  const auto read_step = [&](const json& v, const std::string& ptr) { return rd.positive(v, ptr); };
  cfg.steps = doc.contains("step") ? rd.per_component<double>(doc["step"], "/step", n, read_step)
                                   : std::vector<double>(n, 0.1);

  if (doc.contains("solver")) {
    rd.solver(doc["solver"], "/solver", cfg.solve);
  }
  if (doc.contains("dual")) {
    const auto& d = doc["dual"];
    rd.only_keys(d, "/dual", {"terminal", "forcing", "solver"});
    if (d.contains("terminal")) {
      if (d["terminal"].is_string()) {
        cfg.terminal_mode = rd.string(d["terminal"], "/dual/terminal");
        if (cfg.terminal_mode != "uniform" && cfg.terminal_mode != "error") {
          rd.fail("/dual/terminal", "expected \"uniform\", \"error\" or an array of numbers");
        }
      } else {
        cfg.terminal_mode = "given";
        cfg.terminal = rd.vector(d["terminal"], "/dual/terminal", n);
      }
    }
    if (d.contains("forcing")) {
      cfg.forcing = rd.vector(d["forcing"], "/dual/forcing", n);
    }
    if (d.contains("solver")) {
      rd.solver(d["solver"], "/dual/solver", cfg.dual_solve);
    }
  }
  if (cfg.terminal_mode == "error" && (cfg.model.empty() || !model(cfg.model).exact)) {
    rd.fail("/dual/terminal", "\"error\" needs a model with a closed-form solution");
  }

  if (doc.contains("adapt")) {
    const auto& a = doc["adapt"];
    const std::string p = "/adapt";
    rd.only_keys(a, p,
                 {"tol", "safety", "max_rounds", "min_step", "max_step", "max_growth", "rule", "max_intervals",
                  "max_quadrature_depth"});
    auto& s = cfg.adapt_settings;
    cfg.adapt = true;
    if (!a.contains("tol")) {
      rd.fail(p, "'tol' is required");
    }
    s.tol = rd.positive(a["tol"], p + "/tol");
    if (a.contains("safety")) {
      s.safety = rd.number(a["safety"], p + "/safety");
      if (!(s.safety > 0.0 && s.safety <= 1.0)) {
        rd.fail(p + "/safety", "must lie in (0, 1]");
      }
    }
    if (a.contains("max_rounds")) {
      s.max_rounds = rd.integer(a["max_rounds"], p + "/max_rounds");
      if (s.max_rounds < 1) {
        rd.fail(p + "/max_rounds", "must be at least 1");
      }
    }
    if (a.contains("min_step")) {
      s.min_step = rd.positive(a["min_step"], p + "/min_step");
    }
    if (a.contains("max_step")) {
      s.max_step = rd.positive(a["max_step"], p + "/max_step");
      if (s.min_step > s.max_step) {
        rd.fail(p + "/max_step", "must not be below min_step");
      }
    }
    if (a.contains("max_growth")) {
      s.max_growth = rd.number(a["max_growth"], p + "/max_growth");
      if (!(s.max_growth >= 1.0)) {
        rd.fail(p + "/max_growth", "must be at least 1");
      }
    }
    if (a.contains("rule")) {
      const auto r = rd.string(a["rule"], p + "/rule");
      if (r == "scaled_residual") {
        s.rule = AdaptSettings::StepRule::scaled_residual;
      } else if (r == "fixed_residual") {
        s.rule = AdaptSettings::StepRule::fixed_residual;
      } else {
        rd.fail(p + "/rule", "expected \"scaled_residual\" or \"fixed_residual\"");
      }
    }
    if (a.contains("max_intervals")) {
      const int m = rd.integer(a["max_intervals"], p + "/max_intervals");
      if (m < 1) {
        rd.fail(p + "/max_intervals", "must be at least 1");
      }
      s.max_intervals = static_cast<std::size_t>(m);
    }
    if (a.contains("max_quadrature_depth")) {
      s.max_quadrature_depth = rd.integer(a["max_quadrature_depth"], p + "/max_quadrature_depth");
      if (s.max_quadrature_depth < 0 || s.max_quadrature_depth > 16) {
        rd.fail(p + "/max_quadrature_depth", "must lie in [0, 16]");
      }
    }
  }
  if (doc.contains("output")) {
    cfg.out_dir = rd.string(doc["output"], "/output");
  }
  return cfg;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ConfigError(path.string() + ": cannot read file");
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

/// The ODE problem a configuration describes.
inline OdeProblem config_problem(const RunConfig& cfg) {
  if (!cfg.model.empty()) {
    return model(cfg.model).problem(cfg.methods, cfg.horizon, cfg.initial);
  }
  const auto a = cfg.linear_a;
  const auto b = cfg.linear_b;
  const std::size_t n = a.size();
  auto f = [a, b, n](std::span<const double> u, double, std::span<double> out) {
    for (std::size_t r = 0; r < n; ++r) {
      double acc = b[r];
      for (std::size_t c = 0; c < n; ++c) {
        acc += a[r][c] * u[c];
      }
      out[r] = acc;
    }
  };
  auto jac = [a, n](std::span<const double>, double, Eigen::MatrixXd& out) {
    out.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < n; ++c) {
        out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = a[r][c];
      }
    }
  };
  return make_problem(f, cfg.initial, cfg.horizon, cfg.methods, jac);
}

struct RunOutcome {
  /// 0 = done (TOL met when adapting), 2 = TOL not met or solver failure, 1 = error.
  int exit_code = 0;
  std::string message;
  AdaptResult result;
  /// (e(T), φ_T) when a closed form is available.
  std::optional<double> error_functional;
  std::vector<std::filesystem::path> written;
};

namespace detail {

inline void write_file(const std::filesystem::path& path, const std::string& body,
                       std::vector<std::filesystem::path>& written) {
  std::ofstream out(path, std::ios::binary);
  out << body;
  if (!out) {
    throw std::runtime_error(path.string() + ": write failed");
  }
  written.push_back(path);
}

}  // namespace detail

/// Runs solve → dual → estimate (→ adapt) and writes the artifacts to `out_dir`
/// (cfg.out_dir when empty). `threads` < 0 keeps the configured thread counts.
inline RunOutcome run(const RunConfig& cfg, std::filesystem::path out_dir = {}, int threads = -1) {
  RunOutcome outcome;
  const OdeProblem problem = config_problem(cfg);
  const std::size_t n = problem.dimension;

  std::vector<StepSpec> steps;
  std::vector<OrderSpec> orders;
  for (std::size_t i = 0; i < n; ++i) {
    steps.emplace_back(cfg.steps[i]);
    orders.emplace_back(cfg.orders[i]);
  }
  const Partition initial = build_partition(steps, orders, problem.horizon, problem.methods);

  AdaptSettings s = cfg.adapt_settings;
  s.solve = cfg.solve;
  s.dual_solve = cfg.dual_solve;
  if (threads >= 0) {
    s.solve.threads = static_cast<unsigned>(threads);
    s.dual_solve.threads = static_cast<unsigned>(threads);
  }
  s.orders = cfg.orders;
  if (!cfg.adapt) {
    s.tol = std::numeric_limits<double>::infinity();
    s.max_rounds = 1;
  }
  std::function<std::vector<double>(double, std::span<const double>)> exact;
  if (!cfg.model.empty()) {
    exact = model(cfg.model).exact;
  }
  if (cfg.terminal_mode == "given") {
    s.terminal = cfg.terminal;
  } else if (cfg.terminal_mode == "error") {
    s.terminal_fn = [exact, &problem](const Trajectory& traj) {
      const auto u = exact(problem.horizon, problem.initial_state);
      return normalized_error(traj.final_state(), u);
    };
  }
  if (!cfg.forcing.empty()) {
    const auto g = cfg.forcing;
    s.forcing = [g](double, std::span<double> out) { std::copy(g.begin(), g.end(), out.begin()); };
  }

  outcome.result = adapt(problem, initial, s);
  const auto& res = outcome.result;

  if (out_dir.empty()) {
    out_dir = cfg.out_dir;
  }
  std::filesystem::create_directories(out_dir);
  auto& written = outcome.written;

  std::string log;
  for (const auto& round : res.log) {
    auto rec = to_json(round);
    if (!cfg.adapt) {
      rec["TOL"] = nullptr;
    }
    log += rec.dump() + "\n";
  }
  detail::write_file(out_dir / "adapt_log.jsonl", log, written);

  if (res.trajectory) {
    const auto& traj = *res.trajectory;
    detail::write_file(out_dir / "partition.json", to_json(traj.partition(), traj.methods()).dump(2) + "\n", written);
    std::ostringstream csv;
    write_trajectory_csv(csv, traj);
    detail::write_file(out_dir / "trajectory.csv", csv.str(), written);
    detail::write_file(out_dir / "trajectory.json", to_json(traj).dump(2) + "\n", written);
  }
  if (res.dual) {
    std::ostringstream csv;
    write_dual_csv(csv, *res.dual);
    detail::write_file(out_dir / "dual.csv", csv.str(), written);

    json report = to_json(res.report);
    if (exact) {
      const auto u = exact(problem.horizon, problem.initial_state);
      const auto uh = res.trajectory->final_state();
      const auto phi = res.dual->state(problem.horizon, Side::left);
      double e = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        e += (uh[i] - u[i]) * phi[i];
      }
      outcome.error_functional = e;
      report["error_functional"] = number(e);
      report["effectivity"] = number(res.report.total / std::abs(e));
      report["explicit_effectivity"] = number(res.report.explicit_bound / std::abs(e));
    }
    report["solver"] = to_json(res.solve_report);
    report["adapt"] = {{"enabled", cfg.adapt},
                       {"TOL", cfg.adapt ? number(s.tol) : json(nullptr)},
                       {"met", cfg.adapt ? json(res.met) : json(nullptr)},
                       {"rounds", res.rounds},
                       {"stop_reason", res.stop_reason},
                       {"quadrature_depth", res.quadrature_depth}};
    detail::write_file(out_dir / "error_report.json", report.dump(2) + "\n", written);
    std::ostringstream summary;
    write_summary_csv(summary, res.report, res.trajectory->partition());
    detail::write_file(out_dir / "summary.csv", summary.str(), written);
  }

  if (!res.trajectory || !res.dual) {
    outcome.exit_code = 2;
    outcome.message = "fixed-point iteration did not converge; partial artifacts written";
  } else if (cfg.adapt && !res.met) {
    outcome.exit_code = 2;
    outcome.message = "TOL not met (" + res.stop_reason + "): bound " + format_number(res.log.back().bound) +
                      " > " + format_number(s.tol);
  } else {
    outcome.message = cfg.adapt ? "TOL met after " + std::to_string(res.rounds) + " round(s)" : "done";
  }
  return outcome;
}

}  // namespace mag
