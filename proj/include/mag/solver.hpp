#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <limits>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "mag/partition.hpp"
#include "mag/problem.hpp"
#include "mag/tableau.hpp"
#include "mag/trajectory.hpp"

namespace mag {

struct SolveSettings {
  /// Absolute bound on the sweep-to-sweep change of every nodal value.
  double tolerance = 1e-12;
  int max_sweeps = 200;
  /// ω in ξ ← ξ + ω (G(ξ) − ξ).
  double damping = 1.0;
  /// The nodal rule is applied on 2^depth equal sub-intervals.
  int quadrature_depth = 0;
  /// 0 = hardware concurrency.
  unsigned threads = 1;

  void validate() const {
    if (!(tolerance > 0.0)) {
      throw std::invalid_argument("solver: tolerance must be positive");
    }
    if (max_sweeps < 1) {
      throw std::invalid_argument("solver: max_sweeps must be at least 1");
    }
    if (!(damping > 0.0 && damping <= 1.0)) {
      throw std::invalid_argument("solver: damping must lie in (0, 1]");
    }
    if (quadrature_depth < 0 || quadrature_depth > 16) {
      throw std::invalid_argument("solver: quadrature depth must lie in [0, 16]");
    }
  }
};

struct SlabReport {
  double t_begin = 0.0;
  double t_end = 0.0;
  int sweeps = 0;
  double increment = 0.0;
  bool converged = false;
};

struct SolveReport {
  std::vector<SlabReport> slabs;
  std::size_t sweeps = 0;
  std::size_t rhs_evaluations = 0;

  [[nodiscard]] bool converged() const {
    return std::all_of(slabs.begin(), slabs.end(), [](const SlabReport& s) { return s.converged; });
  }
  [[nodiscard]] std::size_t unconverged() const {
    return static_cast<std::size_t>(
        std::count_if(slabs.begin(), slabs.end(), [](const SlabReport& s) { return !s.converged; }));
  }
  [[nodiscard]] double max_increment() const {
    double m = 0.0;
    for (const auto& s : slabs) {
      m = std::max(m, s.increment);
    }
    return m;
  }
};

struct Solution {
  Trajectory trajectory;
  SolveReport report;
};

namespace detail {

inline unsigned resolve_threads(unsigned requested) {
  if (requested == 0) {
    return std::max(1U, std::thread::hardware_concurrency());
  }
  return requested;
}

/// Runs fn(k) for k in [0, count), statically chunked over `threads` workers.
/// Each index must write only its own output, so the result does not depend
/// on the thread count.
template <class F>
void parallel_for(std::size_t count, unsigned threads, F&& fn) {
  if (threads <= 1 || count < 2) {
    for (std::size_t k = 0; k < count; ++k) {
      fn(k);
    }
    return;
  }
  const std::size_t workers = std::min<std::size_t>(threads, count);
  std::vector<std::exception_ptr> errors(workers);
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t k = w * count / workers; k < (w + 1) * count / workers; ++k) {
            fn(k);
          }
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) {
      std::rethrow_exception(e);
    }
  }
}

inline void check_finite(std::span<const double> v, double t) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw std::runtime_error("solver: non-finite right-hand side at t = " + std::to_string(t));
    }
  }
}

// Quadrature points of one interval, as indices into the slab's evaluation list.
struct IntervalWork {
  std::size_t component = 0;
  std::size_t interval = 0;
  const QuadraturePlan* plan = nullptr;
  std::vector<std::size_t> keys;
};

class PlanCache {
 public:
  const QuadraturePlan& get(const MethodTableau& tab, int depth) {
    auto& slot = plans_[{&tab, depth}];
    if (slot.points.empty()) {
      slot = tab.plan(depth);
    }
    return slot;
  }

 private:
  std::map<std::pair<const MethodTableau*, int>, QuadraturePlan> plans_;
};

}  // namespace detail

/// Solves the nodal fixed-point equations on one slab by damped Jacobi sweeps.
///
/// Within a sweep all f values come from the previous iterate; the incoming
/// value of each interval is the freshly updated end value of its predecessor
/// in the same component.
inline SlabReport solve_slab(const OdeProblem& problem, Trajectory& traj, const TimeSlab& slab,
                             const SolveSettings& settings, detail::PlanCache& plans,
                             std::size_t* rhs_count = nullptr) {
  const std::size_t n = traj.components();
  const unsigned threads = detail::resolve_threads(settings.threads);

  // distinct (time, side) evaluation points of the slab
  std::map<std::pair<std::uint64_t, int>, std::size_t> index;
  std::vector<std::pair<double, Side>> points;
  std::vector<detail::IntervalWork> work;
  std::vector<std::pair<std::size_t, std::size_t>> by_component(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto [first, last] = slab.ranges[i];
    by_component[i].first = work.size();
    for (std::size_t j = first; j < last; ++j) {
      detail::IntervalWork w;
      w.component = i;
      w.interval = j;
      w.plan = &plans.get(traj.tab(i, j), settings.quadrature_depth);
      for (std::size_t p = 0; p < w.plan->points.size(); ++p) {
        const double t = traj.map_time(i, j, w.plan->points[p]);
        const Side side = w.plan->at_left_end[p] ? Side::right : Side::left;
        const auto key = std::pair{std::bit_cast<std::uint64_t>(t), static_cast<int>(side)};
        auto [it, inserted] = index.try_emplace(key, points.size());
        if (inserted) {
          points.emplace_back(t, side);
        }
        w.keys.push_back(it->second);
      }
      work.push_back(std::move(w));
    }
    by_component[i].second = work.size();
  }

  // constant initial guess from the incoming value
  for (std::size_t i = 0; i < n; ++i) {
    const auto [first, last] = slab.ranges[i];
    const double u = traj.incoming(i, first);
    const std::size_t skip = traj.method(i) == Method::mcG ? 1 : 0;
    for (std::size_t j = first; j < last; ++j) {
      auto xi = traj.nodal(i, j);
      std::fill(xi.begin() + static_cast<std::ptrdiff_t>(skip), xi.end(), u);
    }
  }

  std::vector<double> fvals(points.size() * n);
  std::vector<double> increments(n);
  std::vector<double> floors(n);
  SlabReport report{slab.t_begin, slab.t_end, 0, 0.0, false};
  const double omega = settings.damping;

  for (int sweep = 1; sweep <= settings.max_sweeps; ++sweep) {
    detail::parallel_for(points.size(), threads, [&](std::size_t p) {
      const auto [t, side] = points[p];
      std::vector<double> u(n);
      for (std::size_t i = 0; i < n; ++i) {
        u[i] = traj.eval(i, t, side);
      }
      std::span<double> out(fvals.data() + p * n, n);
      problem.rhs(u, t, side, out);
      detail::check_finite(out, t);
    });
    if (rhs_count != nullptr) {
      *rhs_count += points.size();
    }

    detail::parallel_for(n, threads, [&](std::size_t i) {
      double delta = 0.0;
      double scale = 0.0;
      for (std::size_t w = by_component[i].first; w < by_component[i].second; ++w) {
        const auto& item = work[w];
        const auto& tab = traj.tab(i, item.interval);
        const double k = traj.partition().step(i, item.interval);
        const double base = traj.incoming(i, item.interval);
        auto xi = traj.nodal(i, item.interval);
        const int first = tab.first_solved();
        for (int r = 0; r < tab.rows(); ++r) {
          const auto& row = item.plan->row_weights[static_cast<std::size_t>(r)];
          double acc = 0.0;
          for (std::size_t p = 0; p < row.size(); ++p) {
            acc += row[p] * fvals[item.keys[p] * n + i];
          }
          double& x = xi[static_cast<std::size_t>(r + first)];
          const double next = x + omega * (base + k * acc - x);
          delta = std::max(delta, std::abs(next - x));
          scale = std::max(scale, std::abs(next));
          x = next;
        }
      }
      increments[i] = delta;
      // long chains of intervals settle into a rounding-level cycle
      const auto chain = static_cast<double>(by_component[i].second - by_component[i].first);
      floors[i] = 4.0 * std::numeric_limits<double>::epsilon() * chain * scale;
    });

    report.sweeps = sweep;
    report.increment = *std::max_element(increments.begin(), increments.end());
    if (!std::isfinite(report.increment)) {
      throw std::runtime_error("solver: iteration diverged on slab starting at t = " + std::to_string(slab.t_begin));
    }
    bool done = true;
    for (std::size_t i = 0; i < n; ++i) {
      done = done && increments[i] <= std::max(settings.tolerance, floors[i]);
    }
    if (done) {
      report.converged = true;
      break;
    }
  }
  return report;
}

/// Solves the problem on the given partition, slab after slab. Slabs that do
/// not converge within max_sweeps are reported; the solve carries on with the
/// last iterate.
inline Solution solve(const OdeProblem& problem, const Partition& partition, const SolveSettings& settings = {}) {
  problem.validate();
  settings.validate();
  if (partition.components() != problem.dimension) {
    throw std::invalid_argument("solve: partition has " + std::to_string(partition.components()) +
                                " components, problem has " + std::to_string(problem.dimension));
  }
  if (partition.horizon() != problem.horizon) {
    throw std::invalid_argument("solve: partition and problem horizons differ");
  }
  for (std::size_t i = 0; i < problem.dimension; ++i) {
    for (int q : partition.grid(i).orders) {
      if (q < min_order(problem.methods[i])) {
        throw std::invalid_argument("solve: order " + std::to_string(q) + " not allowed for " +
                                    std::string(to_string(problem.methods[i])) + " component " + std::to_string(i));
      }
    }
  }
  Solution sol{Trajectory(partition, problem.methods, problem.initial_state), {}};
  detail::PlanCache plans;
  for (const auto& slab : build_slabs(partition)) {
    auto rep = solve_slab(problem, sol.trajectory, slab, settings, plans, &sol.report.rhs_evaluations);
    sol.report.sweeps += static_cast<std::size_t>(rep.sweeps);
    sol.report.slabs.push_back(rep);
  }
  return sol;
}

/// R(t) = U'(t) − f(U(t), t) for all components, derivatives and values taken
/// on the side given at breakpoints.
inline std::vector<double> residual_vector(const Trajectory& traj, const OdeProblem& problem, double t,
                                           Side side = Side::left) {
  const std::size_t n = traj.components();
  const auto u = traj.state(t, side);
  std::vector<double> f(n);
  problem.rhs(u, t, side, f);
  for (std::size_t i = 0; i < n; ++i) {
    f[i] = traj.derivative(i, t, 1, side) - f[i];
  }
  return f;
}

/// R_i(t) at a point interior to an interval of component i.
inline double residual(const Trajectory& traj, const OdeProblem& problem, std::size_t i, double t) {
  const auto& b = traj.partition().grid(i).breakpoints;
  if (std::binary_search(b.begin(), b.end(), t)) {
    throw std::invalid_argument("residual: t = " + std::to_string(t) + " is a breakpoint of component " +
                                std::to_string(i));
  }
  return residual_vector(traj, problem, t)[i];
}

/// [U_i] at the start of interval j (0 for mcG).
inline double jump(const Trajectory& traj, std::size_t i, std::size_t j) { return traj.jump(i, j); }

}  // namespace mag
