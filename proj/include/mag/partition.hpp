#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "mag/tableau.hpp"

namespace mag {

/// One-sided convention at breakpoints. Intervals are left-open, right-closed.
enum class Side { left, right };

/// Breakpoints t_0 = 0 < t_1 < ... < t_M = T and one order per interval.
struct ComponentGrid {
  std::vector<double> breakpoints;
  std::vector<int> orders;
};

/// Per-component time partitions of (0, T].
///
/// Interval j of component i (0-based) is (t_{i,j}, t_{i,j+1}].
class Partition {
 public:
  Partition() = default;

  /// Validates and normalizes: breakpoints of different components closer than
  /// 1e-12 T are merged to a single shared value, and every grid ends exactly at T.
  Partition(double horizon, std::vector<ComponentGrid> grids, std::span<const Method> methods)
      : horizon_(horizon), grids_(std::move(grids)) {
    if (!(horizon_ > 0.0) || !std::isfinite(horizon_)) {
      throw std::invalid_argument("partition: horizon T must be positive and finite");
    }
    if (grids_.empty()) {
      throw std::invalid_argument("partition: at least one component required");
    }
    if (!methods.empty() && methods.size() != grids_.size()) {
      throw std::invalid_argument("partition: method count does not match component count");
    }
    for (std::size_t i = 0; i < grids_.size(); ++i) {
      auto& g = grids_[i];
      if (g.breakpoints.size() < 2 || g.orders.size() + 1 != g.breakpoints.size()) {
        throw std::invalid_argument("partition: component " + std::to_string(i) +
                                    " needs M+1 breakpoints and M orders");
      }
      const int lo = methods.empty() ? 0 : min_order(methods[i]);
      for (int q : g.orders) {
        if (q < lo || q > max_order) {
          throw std::invalid_argument("partition: order " + std::to_string(q) + " out of range for component " +
                                      std::to_string(i));
        }
      }
    }
    snap();
    for (std::size_t i = 0; i < grids_.size(); ++i) {
      const auto& b = grids_[i].breakpoints;
      if (b.front() != 0.0 || b.back() != horizon_) {
        throw std::invalid_argument("partition: component " + std::to_string(i) + " must span [0, T]");
      }
      for (std::size_t j = 0; j + 1 < b.size(); ++j) {
        if (!(b[j + 1] > b[j])) {
          throw std::invalid_argument("partition: nonpositive step in component " + std::to_string(i));
        }
      }
    }
  }

  [[nodiscard]] double horizon() const { return horizon_; }
  [[nodiscard]] std::size_t components() const { return grids_.size(); }
  [[nodiscard]] const ComponentGrid& grid(std::size_t i) const { return grids_.at(i); }
  [[nodiscard]] std::size_t intervals(std::size_t i) const { return grids_[i].orders.size(); }
  [[nodiscard]] double start(std::size_t i, std::size_t j) const { return grids_[i].breakpoints[j]; }
  [[nodiscard]] double end(std::size_t i, std::size_t j) const { return grids_[i].breakpoints[j + 1]; }
  [[nodiscard]] double step(std::size_t i, std::size_t j) const { return end(i, j) - start(i, j); }
  [[nodiscard]] int order(std::size_t i, std::size_t j) const { return grids_[i].orders[j]; }

  [[nodiscard]] std::size_t total_intervals() const {
    std::size_t n = 0;
    for (const auto& g : grids_) {
      n += g.orders.size();
    }
    return n;
  }

  /// Index j of the interval containing t. At a breakpoint t_j, `left` selects
  /// the interval ending there and `right` the interval starting there; t = 0
  /// maps to the first interval.
  [[nodiscard]] std::size_t interval_at(std::size_t i, double t, Side side) const {
    if (i >= grids_.size()) {
      throw std::out_of_range("partition: component index out of range");
    }
    if (!(t >= 0.0 && t <= horizon_)) {
      throw std::out_of_range("partition: time " + std::to_string(t) + " outside [0, T]");
    }
    const auto& b = grids_[i].breakpoints;
    if (t == 0.0) {
      return 0;
    }
    if (side == Side::right && t == horizon_) {
      throw std::out_of_range("partition: no interval to the right of T");
    }
    // first breakpoint >= t (left) or > t (right)
    const auto it = side == Side::left ? std::lower_bound(b.begin(), b.end(), t)
                                       : std::upper_bound(b.begin(), b.end(), t);
    return static_cast<std::size_t>(it - b.begin()) - 1;
  }

 private:
  void snap() {
    const double tol = 1e-12 * horizon_;
    std::vector<double> all;
    for (const auto& g : grids_) {
      all.insert(all.end(), g.breakpoints.begin(), g.breakpoints.end());
    }
    all.push_back(0.0);
    all.push_back(horizon_);
    std::sort(all.begin(), all.end());
    // cluster representatives: 0 and T win, otherwise the smallest member.
    // lows holds the largest member of each cluster.
    std::vector<double> reps;
    std::vector<double> lows;
    for (double v : all) {
      if (lows.empty() || v - lows.back() > tol) {
        lows.push_back(v);
        reps.push_back(v);
      }
      if (std::abs(v) <= tol) {
        reps.back() = 0.0;
      }
      if (std::abs(v - horizon_) <= tol) {
        reps.back() = horizon_;
      }
      lows.back() = v;  // chain: cluster extends while gaps stay within tol
    }
    for (auto& g : grids_) {
      for (double& t : g.breakpoints) {
        // find cluster whose last member >= t
        const auto it = std::lower_bound(lows.begin(), lows.end(), t);
        t = reps[static_cast<std::size_t>(it - lows.begin())];
      }
    }
  }

  double horizon_ = 0.0;
  std::vector<ComponentGrid> grids_;
};

/// Step-sequence description for one component: a constant step, an explicit
/// list of steps, or a step-size function k(t).
using StepSpec = std::variant<double, std::vector<double>, std::function<double(double)>>;

/// A constant order or one order per resulting interval.
using OrderSpec = std::variant<int, std::vector<int>>;

namespace detail {

inline std::vector<double> march(const std::function<double(double)>& step, double horizon) {
  std::vector<double> b{0.0};
  double t = 0.0;
  for (std::size_t guard = 0;; ++guard) {
    if (guard > 50'000'000) {
      throw std::invalid_argument("partition: step sequence too fine");
    }
    const double k = step(t);
    if (!(k > 0.0) || !std::isfinite(k)) {
      throw std::invalid_argument("partition: nonpositive step");
    }
    const double remaining = horizon - t;
    if (remaining <= 1.1 * k) {
      b.push_back(horizon);
      break;
    }
    if (remaining < 2.0 * k) {
      // two equal steps rather than one long step followed by a sliver
      b.push_back(t + 0.5 * remaining);
      b.push_back(horizon);
      break;
    }
    t += k;
    b.push_back(t);
  }
  return b;
}

}  // namespace detail

/// Breakpoints for one component from a step specification. The final step is
/// stretched by up to 10% to land exactly on T; if that is not possible the
/// remainder is split into two equal steps.
inline std::vector<double> breakpoints_from_steps(const StepSpec& steps, double horizon) {
  if (!(horizon > 0.0)) {
    throw std::invalid_argument("partition: horizon T must be positive");
  }
  if (const auto* k = std::get_if<double>(&steps)) {
    if (!(*k > 0.0) || !std::isfinite(*k)) {
      throw std::invalid_argument("partition: nonpositive step");
    }
    const double ratio = horizon / *k;
    auto count = static_cast<std::size_t>(std::llround(ratio));
    if (count == 0 || std::abs(ratio - static_cast<double>(count)) > 0.1) {
      return detail::march([k](double) { return *k; }, horizon);
    }
    std::vector<double> b(count + 1);
    for (std::size_t j = 0; j < count; ++j) {
      b[j] = static_cast<double>(j) * *k;
    }
    b[count] = horizon;
    return b;
  }
  if (const auto* list = std::get_if<std::vector<double>>(&steps)) {
    if (list->empty()) {
      throw std::invalid_argument("partition: empty step list");
    }
    std::vector<double> b{0.0};
    double t = 0.0;
    for (std::size_t j = 0; j < list->size(); ++j) {
      const double k = (*list)[j];
      if (!(k > 0.0) || !std::isfinite(k)) {
        throw std::invalid_argument("partition: nonpositive step");
      }
      t += k;
      b.push_back(t);
    }
    if (std::abs(b.back() - horizon) > 0.1 * list->back()) {
      throw std::invalid_argument("partition: step list does not sum to T");
    }
    b.back() = horizon;
    return b;
  }
  return detail::march(std::get<std::function<double(double)>>(steps), horizon);
}

/// Builds a partition from per-component step and order specifications.
inline Partition build_partition(std::span<const StepSpec> steps, std::span<const OrderSpec> orders, double horizon,
                                 std::span<const Method> methods) {
  if (steps.empty()) {
    throw std::invalid_argument("partition: empty step specification");
  }
  if (orders.size() != steps.size()) {
    throw std::invalid_argument("partition: order specification count does not match step specification count");
  }
  std::vector<ComponentGrid> grids(steps.size());
  for (std::size_t i = 0; i < steps.size(); ++i) {
    grids[i].breakpoints = breakpoints_from_steps(steps[i], horizon);
    const std::size_t m = grids[i].breakpoints.size() - 1;
    if (const auto* q = std::get_if<int>(&orders[i])) {
      grids[i].orders.assign(m, *q);
    } else {
      grids[i].orders = std::get<std::vector<int>>(orders[i]);
      if (grids[i].orders.size() != m) {
        throw std::invalid_argument("partition: order list length does not match interval count for component " +
                                    std::to_string(i));
      }
    }
  }
  return Partition(horizon, std::move(grids), methods);
}

/// Convenience: the same constant step and order for all N components.
inline Partition uniform_partition(std::size_t n, double step, int order, double horizon,
                                   std::span<const Method> methods) {
  std::vector<StepSpec> s(n, StepSpec{step});
  std::vector<OrderSpec> o(n, OrderSpec{order});
  return build_partition(s, o, horizon, methods);
}

/// Intervals between two consecutive synchronized levels.
struct TimeSlab {
  double t_begin = 0.0;
  double t_end = 0.0;
  /// For each component, the half-open index range [first, second) of its
  /// intervals inside (t_begin, t_end].
  std::vector<std::pair<std::size_t, std::size_t>> ranges;
};

/// Time levels shared by every component (always including 0 and T).
inline std::vector<double> synchronized_levels(const Partition& p) {
  std::vector<double> levels;
  for (double t : p.grid(0).breakpoints) {
    bool shared = true;
    for (std::size_t i = 1; i < p.components() && shared; ++i) {
      const auto& b = p.grid(i).breakpoints;
      shared = std::binary_search(b.begin(), b.end(), t);
    }
    if (shared) {
      levels.push_back(t);
    }
  }
  return levels;
}

/// Coarsest tiling of (0, T] into slabs bounded by synchronized levels.
inline std::vector<TimeSlab> build_slabs(const Partition& p) {
  const auto levels = synchronized_levels(p);
  std::vector<TimeSlab> slabs;
  std::vector<std::size_t> cursor(p.components(), 0);
  for (std::size_t s = 0; s + 1 < levels.size(); ++s) {
    TimeSlab slab{levels[s], levels[s + 1], {}};
    for (std::size_t i = 0; i < p.components(); ++i) {
      const std::size_t first = cursor[i];
      std::size_t last = first;
      while (last < p.intervals(i) && p.end(i, last) <= slab.t_end) {
        ++last;
      }
      slab.ranges.emplace_back(first, last);
      cursor[i] = last;
    }
    slabs.push_back(std::move(slab));
  }
  return slabs;
}

}  // namespace mag
