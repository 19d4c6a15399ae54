#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "mag/controller.hpp"
#include "mag/dual.hpp"
#include "mag/estimator.hpp"
#include "mag/partition.hpp"
#include "mag/solver.hpp"
#include "mag/tableau.hpp"
#include "mag/trajectory.hpp"

namespace mag {

using json = nlohmann::json;

/// Shortest decimal that reads back to the same double ("inf", "-inf", "nan" otherwise).
inline std::string format_number(double x) {
  if (std::isnan(x)) {
    return "nan";
  }
  if (std::isinf(x)) {
    return x > 0 ? "inf" : "-inf";
  }
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return {buf, res.ptr};
}

/// JSON number, or null when not finite.
inline json number(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

inline json number(const std::optional<double>& x) { return x ? number(*x) : json(nullptr); }

/// Appends a reference token to a JSON pointer.
inline std::string pointer_child(const std::string& parent, std::string_view token) {
  std::string out = parent + "/";
  for (char c : token) {
    if (c == '~') {
      out += "~0";
    } else if (c == '/') {
      out += "~1";
    } else {
      out += c;
    }
  }
  return out;
}

/// Maps JSON pointers of a (syntactically valid) document to 1-based source lines.
/// Object members map to the line of their key.
class LineIndex {
 public:
  explicit LineIndex(std::string_view text) : text_(text) {
    skip();
    if (pos_ < text_.size()) {
      value("");
    }
  }

  /// Line of the pointer, or of its nearest recorded ancestor.
  [[nodiscard]] int line(std::string pointer) const {
    for (;;) {
      if (const auto it = lines_.find(pointer); it != lines_.end()) {
        return it->second;
      }
      if (pointer.empty()) {
        return 1;
      }
      pointer.erase(pointer.rfind('/'));
    }
  }

  /// Line containing the given byte offset.
  static int line_of_offset(std::string_view text, std::size_t offset) {
    offset = std::min(offset, text.size());
    int line = 1;
    for (std::size_t k = 0; k < offset; ++k) {
      line += text[k] == '\n' ? 1 : 0;
    }
    return line;
  }

 private:
  void skip() {
    while (pos_ < text_.size() && (text_[pos_] == ' ' || text_[pos_] == '\t' || text_[pos_] == '\r' ||
                                   text_[pos_] == '\n')) {
      line_ += text_[pos_] == '\n' ? 1 : 0;
      ++pos_;
    }
  }

  std::string string() {
    std::string out;
    ++pos_;
    while (pos_ < text_.size() && text_[pos_] != '"') {
      if (text_[pos_] == '\\' && pos_ + 1 < text_.size()) {
        out += text_[pos_ + 1];
        pos_ += 2;
      } else {
        out += text_[pos_++];
      }
    }
    ++pos_;
    return out;
  }

  void value(const std::string& ptr) {
    skip();
    if (pos_ >= text_.size()) {
      return;
    }
    lines_.try_emplace(ptr, line_);
    const char c = text_[pos_];
    if (c == '{' || c == '[') {
      const char close = c == '{' ? '}' : ']';
      ++pos_;
      skip();
      for (std::size_t index = 0; pos_ < text_.size() && text_[pos_] != close; ++index) {
        if (c == '{') {
          const int key_line = line_;
          const auto child = pointer_child(ptr, string());
          lines_[child] = key_line;
          skip();
          ++pos_;  // ':'
          value(child);
        } else {
          value(ptr + "/" + std::to_string(index));
        }
        skip();
        if (pos_ < text_.size() && text_[pos_] == ',') {
          ++pos_;
          skip();
        }
      }
      ++pos_;
      return;
    }
    if (c == '"') {
      string();
      return;
    }
    while (pos_ < text_.size() && std::string_view(",]} \t\r\n").find(text_[pos_]) == std::string_view::npos) {
      ++pos_;
    }
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  int line_ = 1;
  std::map<std::string, int> lines_;
};

inline json to_json(const MethodTableau& t) {
  json nodes = json::array();
  for (double s : t.nodes.nodes) {
    nodes.push_back(s);
  }
  json rows = json::array();
  for (int r = 0; r < t.rows(); ++r) {
    json row = json::array();
    for (int n = 0; n < t.node_count(); ++n) {
      row.push_back(t.quad_weights(r, n));
    }
    rows.push_back(std::move(row));
  }
  return {{"method", std::string(to_string(t.method))}, {"q", t.order}, {"nodes", nodes}, {"quad_weights", rows}};
}

inline json to_json(const Partition& p, std::span<const Method> methods) {
  json comps = json::array();
  for (std::size_t i = 0; i < p.components(); ++i) {
    json c{{"component", i}, {"breakpoints", p.grid(i).breakpoints}, {"orders", p.grid(i).orders}};
    if (i < methods.size()) {
      c["method"] = std::string(to_string(methods[i]));
    }
    comps.push_back(std::move(c));
  }
  return {{"horizon", p.horizon()}, {"total_intervals", p.total_intervals()}, {"components", comps}};
}

/// Nodal values of every interval, in the order of the nodes of its tableau.
inline json to_json(const Trajectory& traj) {
  json comps = json::array();
  const auto& p = traj.partition();
  for (std::size_t i = 0; i < traj.components(); ++i) {
    json ivs = json::array();
    for (std::size_t j = 0; j < p.intervals(i); ++j) {
      const auto& tab = traj.tab(i, j);
      json values = json::array();
      for (double s : tab.nodes.nodes) {
        values.push_back(number(traj.local_value(i, j, s)));
      }
      ivs.push_back({{"t_begin", p.start(i, j)}, {"t_end", p.end(i, j)}, {"order", p.order(i, j)}, {"values", values}});
    }
    comps.push_back({{"component", i},
                     {"method", std::string(to_string(traj.method(i)))},
                     {"initial", traj.initial(i)},
                     {"intervals", ivs}});
  }
  return {{"horizon", traj.horizon()}, {"components", comps}};
}

inline json to_json(const SolveReport& r) {
  return {{"converged", r.converged()},
          {"slabs", r.slabs.size()},
          {"unconverged_slabs", r.unconverged()},
          {"sweeps", r.sweeps},
          {"rhs_evaluations", r.rhs_evaluations},
          {"max_increment", number(r.max_increment())}};
}

inline json to_json(const ErrorReport& r) {
  json comps = json::array();
  for (std::size_t i = 0; i < r.components.size(); ++i) {
    const auto& c = r.components[i];
    comps.push_back({{"component", i},
                     {"method", std::string(to_string(c.method))},
                     {"stability", number(c.stability)},
                     {"stability_mean", number(c.stability_mean)},
                     {"stability_tilde", number(c.stability_tilde)},
                     {"max_ckr", number(c.max_ckr)},
                     {"max_computational", number(c.max_computational)},
                     {"max_quadrature", number(c.max_quadrature)}});
  }
  json ivs = json::array();
  for (const auto& iv : r.intervals) {
    ivs.push_back({{"component", iv.component},
                   {"interval", iv.interval},
                   {"t_begin", iv.t_begin},
                   {"t_end", iv.t_end},
                   {"order", iv.order},
                   {"derivative", iv.derivative},
                   {"r", number(iv.r)},
                   {"rbar", number(iv.rbar)},
                   {"jump", number(iv.jump)},
                   {"s", number(iv.s)},
                   {"computational", number(iv.computational)},
                   {"quadrature_difference", number(iv.quadrature_difference)},
                   {"quadrature_bound", number(iv.quadrature_bound)},
                   {"eg", number(iv.eg)},
                   {"alpha", iv.alpha}});
  }
  json constants = json::object();
  for (const auto& [q, c] : r.constants) {
    constants[std::to_string(q)] = c;
  }
  return {{"method", r.method},
          {"e0", number(r.e0)},
          {"e1", number(r.e1)},
          {"e2", number(r.e2)},
          {"e3", number(r.e3)},
          {"e4", number(r.e4)},
          {"e5", number(r.e5)},
          {"eg", number(r.eg)},
          {"eg_signed", number(r.eg_signed)},
          {"eg_shortcut", number(r.eg_shortcut)},
          {"ec", number(r.ec)},
          {"eq", number(r.eq)},
          {"total", number(r.total)},
          {"explicit_bound", number(r.explicit_bound)},
          {"representation", number(r.representation)},
          {"s1", number(r.s1)},
          {"s2", number(r.s2)},
          {"s_phi", number(r.s_phi)},
          {"derivatives_available", r.derivatives_available},
          {"solver_depth", r.solver_depth},
          {"interpolation_constants", constants},
          {"components", comps},
          {"intervals", ivs}};
}

/// One adapt_log.jsonl record.
inline json to_json(const AdaptRound& r) {
  json ks = json::array();
  for (double k : r.max_step) {
    ks.push_back(k);
  }
  return {{"round", r.round},
          {"bound", number(r.bound)},
          {"TOL", number(r.tol)},
          {"total_intervals", r.total_intervals},
          {"per_component_max_k", ks},
          {"quadrature_depth", r.quadrature_depth},
          {"solver_converged", r.solver_converged}};
}

/// component,interval,node_time,value with one row per node.
inline void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
  os << "component,interval,node_time,value\n";
  const auto& p = traj.partition();
  for (std::size_t i = 0; i < traj.components(); ++i) {
    for (std::size_t j = 0; j < p.intervals(i); ++j) {
      for (double s : traj.tab(i, j).nodes.nodes) {
        os << i << ',' << j << ',' << format_number(traj.map_time(i, j, s)) << ','
           << format_number(traj.local_value(i, j, s)) << '\n';
      }
    }
  }
}

/// Dual values at the nodes of its (forward-time) intervals, same columns.
inline void write_dual_csv(std::ostream& os, const DualSolution& dual) {
  os << "component,interval,node_time,value\n";
  const auto& p = dual.partition();
  for (std::size_t i = 0; i < dual.components(); ++i) {
    for (std::size_t j = 0; j < p.intervals(i); ++j) {
      const auto& nodes = tableau(dual.method(i), p.order(i, j)).nodes.nodes;
      for (double s : nodes) {
        const double t = s == 1.0 ? p.end(i, j) : p.start(i, j) + s * p.step(i, j);
        const Side side = s == 0.0 ? Side::right : Side::left;
        os << i << ',' << j << ',' << format_number(t) << ',' << format_number(dual.value(i, t, side)) << '\n';
      }
    }
  }
}

/// One row per component.
inline void write_summary_csv(std::ostream& os, const ErrorReport& r, const Partition& p) {
  os << "component,method,intervals,min_step,max_step,stability,stability_mean,max_ckr,max_computational,"
        "max_quadrature\n";
  for (std::size_t i = 0; i < r.components.size(); ++i) {
    const auto& c = r.components[i];
    double kmin = p.horizon();
    double kmax = 0.0;
    for (std::size_t j = 0; j < p.intervals(i); ++j) {
      kmin = std::min(kmin, p.step(i, j));
      kmax = std::max(kmax, p.step(i, j));
    }
    os << i << ',' << to_string(c.method) << ',' << p.intervals(i) << ',' << format_number(kmin) << ','
       << format_number(kmax) << ',' << format_number(c.stability) << ',' << format_number(c.stability_mean) << ','
       << format_number(c.max_ckr) << ',' << format_number(c.max_computational) << ','
       << format_number(c.max_quadrature) << '\n';
  }
}

}  // namespace mag
