#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mag/dual.hpp"
#include "mag/estimator.hpp"
#include "mag/partition.hpp"
#include "mag/problem.hpp"
#include "mag/solver.hpp"
#include "mag/trajectory.hpp"

namespace mag {

struct AdaptSettings {
  double tol = 1e-6;
  /// Fraction of TOL handed out to the components.
  double safety = 0.5;
  int max_rounds = 10;
  double min_step = 1e-8;
  /// 0 = horizon.
  double max_step = 0.0;
  /// Largest factor a step may grow by in one round.
  double max_growth = 2.0;
  /// fixed_residual: k = (TOL_i / (S_i C r̃))^{1/p} with r̃ held at its current
  /// value. scaled_residual: r̃ is taken to scale like k^q, so the E3 term goes
  /// like k^{p+q} and k = k_old (TOL_i / (S_i C k_old^p r̃))^{1/(p+q)}.
  enum class StepRule { fixed_residual, scaled_residual };
  StepRule rule = StepRule::scaled_residual;
  /// Rounds stop (unmet) when a proposal would exceed this many intervals.
  std::size_t max_intervals = 2'000'000;
  /// The solver's dyadic depth is raised (up to this) while E_C + E_Q exceed (1 − θ) TOL.
  int max_quadrature_depth = 8;
  /// Orders per component; empty = first order of each component in the initial partition.
  std::vector<int> orders;
  SolveSettings solve;
  SolveSettings dual_solve{.tolerance = 1e-12, .max_sweeps = 200, .damping = 1.0, .quadrature_depth = 2, .threads = 1};
  /// Terminal data for the dual; empty = (1, …, 1)/√N.
  std::vector<double> terminal;
  /// Computes terminal data from each round's primal when set (e.g. the normalized final error).
  std::function<std::vector<double>(const Trajectory&)> terminal_fn;
  ForcingFn forcing;

  void validate() const {
    if (!(tol > 0.0)) {
      throw std::invalid_argument("adapt: TOL must be positive");
    }
    if (!(safety > 0.0 && safety <= 1.0)) {
      throw std::invalid_argument("adapt: safety factor must lie in (0, 1]");
    }
    if (max_rounds < 1) {
      throw std::invalid_argument("adapt: max_rounds must be at least 1");
    }
    if (!(min_step > 0.0) || max_step < 0.0 || (max_step > 0.0 && min_step > max_step)) {
      throw std::invalid_argument("adapt: step bounds must be positive with min <= max");
    }
    if (!(max_growth >= 1.0)) {
      throw std::invalid_argument("adapt: max_growth must be at least 1");
    }
    solve.validate();
    dual_solve.validate();
  }
};

struct StepProposal {
  std::vector<StepSpec> steps;
  std::vector<OrderSpec> orders;
  /// Components whose stability factor vanished and were sent to the largest step.
  std::vector<std::size_t> clamped_zero_stability;
  /// Expected number of intervals of the new partition.
  double expected_intervals = 0.0;
  /// Old breakpoints and the proposed step on each old interval, per component.
  std::vector<std::vector<double>> breakpoints;
  std::vector<std::vector<double>> proposed;
  std::vector<int> order_per_component;
};

namespace detail {

// Step at t: the smallest proposal among the old intervals that [t, t + k] overlaps.
inline StepSpec step_generator(std::vector<double> bp, std::vector<double> ks) {
  return std::function<double(double)>([bp = std::move(bp), ks = std::move(ks)](double t) {
    auto it = std::upper_bound(bp.begin(), bp.end(), t);
    std::size_t j = it == bp.begin() ? 0 : static_cast<std::size_t>(it - bp.begin()) - 1;
    j = std::min(j, ks.size() - 1);
    double k = ks[j];
    for (std::size_t m = j + 1; m < ks.size() && bp[m] < t + k; ++m) {
      k = std::min(k, ks[m]);
    }
    return k;
  });
}

// Smallest proposal over the old intervals meeting (a, b).
inline double min_proposal(const std::vector<double>& bp, const std::vector<double>& ks, double a, double b) {
  auto it = std::upper_bound(bp.begin(), bp.end(), a);
  std::size_t j = it == bp.begin() ? 0 : static_cast<std::size_t>(it - bp.begin()) - 1;
  j = std::min(j, ks.size() - 1);
  double k = ks[j];
  for (++j; j < ks.size() && bp[j] < b; ++j) {
    k = std::min(k, ks[j]);
  }
  return k;
}

}  // namespace detail

/// Partition built slab by slab: each slab is as long as the largest proposed
/// step at its start, and every component divides it into equal steps no
/// larger than its own proposals. Slabs stay short enough for the sweeps.
inline Partition slab_partition(const StepProposal& proposal, double horizon, std::span<const Method> methods) {
  const std::size_t n = proposal.proposed.size();
  std::vector<ComponentGrid> grids(n);
  for (auto& g : grids) {
    g.breakpoints.push_back(0.0);
  }
  double t = 0.0;
  while (t < horizon) {
    double k = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      k = std::max(k, detail::min_proposal(proposal.breakpoints[i], proposal.proposed[i], t, t));
    }
    double end = t + k;
    if (horizon - end < 0.5 * k) {
      end = horizon;
    }
    for (std::size_t i = 0; i < n; ++i) {
      const double ki = detail::min_proposal(proposal.breakpoints[i], proposal.proposed[i], t, end);
      const auto m = static_cast<std::size_t>(std::max(1.0, std::ceil((end - t) / ki * (1.0 - 1e-12))));
      for (std::size_t j = 1; j < m; ++j) {
        grids[i].breakpoints.push_back(t + (end - t) * static_cast<double>(j) / static_cast<double>(m));
      }
      grids[i].breakpoints.push_back(end);
    }
    t = end;
  }
  for (std::size_t i = 0; i < n; ++i) {
    grids[i].orders.assign(grids[i].breakpoints.size() - 1, proposal.order_per_component[i]);
  }
  return Partition(horizon, std::move(grids), methods);
}

/// New step per old interval from the E3 term S_i C k^p r̃_ij against
/// TOL_i = θ TOL / N (see AdaptSettings::rule); clamped to bounds and growth.
inline StepProposal propose_steps(const ErrorReport& report, const Partition& partition, const AdaptSettings& settings) {
  settings.validate();
  const std::size_t n = partition.components();
  if (report.components.size() != n) {
    throw std::invalid_argument("propose_steps: report does not match partition");
  }
  const double kmax = settings.max_step > 0.0 ? settings.max_step : partition.horizon();
  const double tol_i = settings.safety * settings.tol / static_cast<double>(n);

  StepProposal out;
  std::vector<std::vector<double>> proposed(n);
  for (std::size_t i = 0; i < n; ++i) {
    proposed[i].assign(partition.intervals(i), kmax);
    if (!(report.components[i].stability > 0.0)) {
      out.clamped_zero_stability.push_back(i);
    }
  }
  for (const auto& iv : report.intervals) {
    const auto& comp = report.components[iv.component];
    const double rt = comp.method == Method::mdG ? iv.rbar : iv.r;
    const double denom = comp.stability * interp_constant(iv.derivative - 1) * rt;
    const double old = iv.t_end - iv.t_begin;
    double k = kmax;
    if (denom > 0.0) {
      if (settings.rule == AdaptSettings::StepRule::fixed_residual) {
        k = std::pow(tol_i / denom, 1.0 / iv.derivative);
      } else {
        const double term = denom * std::pow(old, iv.derivative);
        k = old * std::pow(tol_i / term, 1.0 / (iv.derivative + iv.order));
      }
    }
    k = std::min(k, settings.max_growth * old);
    proposed[iv.component][iv.interval] = std::clamp(k, settings.min_step, kmax);
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < partition.intervals(i); ++j) {
      out.expected_intervals += partition.step(i, j) / proposed[i][j];
    }
    out.steps.push_back(detail::step_generator(partition.grid(i).breakpoints, proposed[i]));
    const int q = settings.orders.empty() ? partition.order(i, 0) : settings.orders[i];
    out.orders.emplace_back(q);
    out.order_per_component.push_back(q);
    out.breakpoints.push_back(partition.grid(i).breakpoints);
    out.proposed.push_back(std::move(proposed[i]));
  }
  return out;
}

struct AdaptRound {
  int round = 0;
  double bound = 0.0;
  double tol = 0.0;
  std::size_t total_intervals = 0;
  int quadrature_depth = 0;
  std::vector<double> max_step;
  bool solver_converged = true;
};

struct AdaptResult {
  std::shared_ptr<const Trajectory> trajectory;
  std::shared_ptr<const DualSolution> dual;
  ErrorReport report;
  SolveReport solve_report;
  std::vector<AdaptRound> log;
  bool met = false;
  int rounds = 0;
  /// "met", "max_rounds", "interval_budget" or "stalled".
  std::string stop_reason;
  int quadrature_depth = 0;
};

namespace detail {

inline std::vector<double> default_terminal(std::size_t n) {
  return std::vector<double>(n, 1.0 / std::sqrt(static_cast<double>(n)));
}

}  // namespace detail

/// One solve → dual → estimate pass on a fixed partition. The dual and the
/// estimate are skipped (left empty) when the fixed-point sweeps fail.
inline AdaptResult evaluate(const OdeProblem& problem, const Partition& partition, const AdaptSettings& settings) {
  AdaptResult out;
  std::optional<Solution> sol;
  try {
    sol = solve(problem, partition, settings.solve);
  } catch (const std::runtime_error&) {
    // diverged sweeps produce non-finite values
    return out;
  }
  out.solve_report = sol->report;
  out.trajectory = std::make_shared<const Trajectory>(std::move(sol->trajectory));
  if (!out.solve_report.converged()) {
    return out;
  }
  std::vector<double> terminal = settings.terminal;
  if (settings.terminal_fn) {
    terminal = settings.terminal_fn(*out.trajectory);
  }
  if (terminal.empty()) {
    terminal = detail::default_terminal(problem.dimension);
  }
  DualSpec spec{problem, out.trajectory, nullptr, terminal, settings.forcing, 2};
  out.dual = std::make_shared<const DualSolution>(solve_dual(spec, settings.dual_solve));
  EstimatorSettings es;
  es.solver_depth = settings.solve.quadrature_depth;
  out.report = estimate(*out.trajectory, *out.dual, problem, es);
  return out;
}

/// Solve, estimate and re-partition until the E3-form bound is below TOL.
inline AdaptResult adapt(const OdeProblem& problem, const Partition& initial, const AdaptSettings& settings,
                         const std::function<void(const AdaptRound&)>& on_round = {}) {
  problem.validate();
  settings.validate();
  if (!settings.orders.empty() && settings.orders.size() != problem.dimension) {
    throw std::invalid_argument("adapt: orders must list one entry per component");
  }
  Partition part = initial;
  AdaptSettings current = settings;
  AdaptResult out;
  for (int round = 1; round <= settings.max_rounds; ++round) {
    auto res = evaluate(problem, part, current);
    res.quadrature_depth = current.solve.quadrature_depth;
    AdaptRound log;
    log.round = round;
    log.tol = settings.tol;
    log.total_intervals = part.total_intervals();
    log.quadrature_depth = current.solve.quadrature_depth;
    log.solver_converged = res.dual != nullptr;
    const auto bound = explicit_bound(res.report);
    log.bound = bound ? *bound : std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < part.components(); ++i) {
      double m = 0.0;
      for (std::size_t j = 0; j < part.intervals(i); ++j) {
        m = std::max(m, part.step(i, j));
      }
      log.max_step.push_back(m);
    }
    if (on_round) {
      on_round(log);
    }
    res.log = std::move(out.log);
    res.log.push_back(log);
    res.rounds = round;
    res.met = bound.has_value() && *bound <= settings.tol && log.solver_converged;
    out = std::move(res);
    if (out.met) {
      out.stop_reason = "met";
      break;
    }
    if (round == settings.max_rounds) {
      out.stop_reason = "max_rounds";
      break;
    }
    StepProposal proposal;
    if (!log.solver_converged) {
      // fixed-point sweeps diverge when k times the Lipschitz constant is too large
      for (std::size_t i = 0; i < part.components(); ++i) {
        std::vector<double> ks;
        for (std::size_t j = 0; j < part.intervals(i); ++j) {
          ks.push_back(0.5 * part.step(i, j));
        }
        proposal.expected_intervals += 2.0 * static_cast<double>(part.intervals(i));
        proposal.breakpoints.push_back(part.grid(i).breakpoints);
        proposal.proposed.push_back(std::move(ks));
        proposal.order_per_component.push_back(settings.orders.empty() ? part.order(i, 0) : settings.orders[i]);
      }
    } else {
      proposal = propose_steps(out.report, part, settings);
    }
    const double expected = proposal.expected_intervals;
    if (expected > static_cast<double>(settings.max_intervals)) {
      out.stop_reason = "interval_budget";
      break;
    }
    bool deeper = false;
    if (log.solver_converged && out.report.ec + out.report.eq > (1.0 - settings.safety) * settings.tol &&
        current.solve.quadrature_depth < settings.max_quadrature_depth) {
      ++current.solve.quadrature_depth;
      deeper = true;
    }
    auto next = slab_partition(proposal, problem.horizon, problem.methods);
    bool same = !deeper;
    for (std::size_t i = 0; same && i < next.components(); ++i) {
      same = next.grid(i).breakpoints == part.grid(i).breakpoints;
    }
    if (same) {
      out.stop_reason = "stalled";
      break;
    }
    part = std::move(next);
  }
  return out;
}

}  // namespace mag
