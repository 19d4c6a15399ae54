#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mag/partition.hpp"
#include "mag/problem.hpp"
#include "mag/solver.hpp"
#include "mag/trajectory.hpp"

namespace mag {

/// ∂f/∂u(u, t), from the analytic Jacobian when present, otherwise by central
/// differences with step cbrt(eps)(1 + |u_j|).
inline Eigen::MatrixXd jacobian_at(const OdeProblem& problem, std::span<const double> u, double t,
                                   Side side = Side::left) {
  const std::size_t n = problem.dimension;
  Eigen::MatrixXd jac(n, n);
  if (problem.jacobian) {
    problem.jacobian(u, t, jac);
  } else {
    const double h0 = std::cbrt(std::numeric_limits<double>::epsilon());
    std::vector<double> x(u.begin(), u.end());
    std::vector<double> fp(n), fm(n);
    for (std::size_t j = 0; j < n; ++j) {
      const double h = h0 * (1.0 + std::abs(u[j]));
      x[j] = u[j] + h;
      problem.rhs(x, t, side, fp);
      x[j] = u[j] - h;
      problem.rhs(x, t, side, fm);
      x[j] = u[j];
      for (std::size_t r = 0; r < n; ++r) {
        jac(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = (fp[r] - fm[r]) / (2.0 * h);
      }
    }
  }
  if (!jac.allFinite()) {
    throw std::runtime_error("jacobian: non-finite entry at t = " + std::to_string(t));
  }
  return jac;
}

/// J* = (∫_0^1 ∂f/∂u(s v1 + (1 − s) v2, t) ds)^T by an s_points Gauss rule.
inline Eigen::MatrixXd jstar(std::span<const double> v1, std::span<const double> v2, double t,
                             const OdeProblem& problem, int s_points = 2, Side side = Side::left) {
  if (s_points < 1) {
    throw std::invalid_argument("jstar: need at least one s point");
  }
  const std::size_t n = problem.dimension;
  if (v1.size() != n || v2.size() != n) {
    throw std::invalid_argument("jstar: vector size mismatch");
  }
  const bool same = std::equal(v1.begin(), v1.end(), v2.begin());
  if (same) {
    return jacobian_at(problem, v1, t, side).transpose();
  }
  const auto& rule = gauss_legendre(s_points);
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(n, n);
  std::vector<double> x(n);
  for (int p = 0; p < s_points; ++p) {
    const double s = 0.5 * (1.0 + rule.nodes[p]);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = s * v1[i] + (1.0 - s) * v2[i];
    }
    acc += 0.5 * rule.weights[p] * jacobian_at(problem, x, t, side);
  }
  return acc.transpose();
}

/// g(t), written into `out`.
using ForcingFn = std::function<void(double t, std::span<double> out)>;

/// Data of the backward linearized problem −φ' = J*(u, U, t) φ + g, φ(T) = φ_T.
struct DualSpec {
  OdeProblem problem;
  std::shared_ptr<const Trajectory> primal;
  /// Stand-in for the exact solution inside J*; the primal itself when empty.
  std::shared_ptr<const Trajectory> reference;
  std::vector<double> terminal;
  ForcingFn forcing;  // empty means g = 0
  int s_points = 2;
};

/// mcG partition on the primal breakpoints with every order raised by one.
inline Partition default_dual_partition(const Partition& primal) {
  std::vector<ComponentGrid> grids;
  for (std::size_t i = 0; i < primal.components(); ++i) {
    ComponentGrid g = primal.grid(i);
    for (int& q : g.orders) {
      q = std::min(q + 1, max_order);
    }
    grids.push_back(std::move(g));
  }
  return Partition(primal.horizon(), std::move(grids), {});
}

/// Partition on σ = T − t: breakpoints reflected, interval order reversed.
inline Partition reverse_partition(const Partition& p) {
  const double horizon = p.horizon();
  std::vector<ComponentGrid> grids;
  for (std::size_t i = 0; i < p.components(); ++i) {
    const auto& g = p.grid(i);
    ComponentGrid r;
    for (auto it = g.breakpoints.rbegin(); it != g.breakpoints.rend(); ++it) {
      r.breakpoints.push_back(*it == horizon ? 0.0 : (*it == 0.0 ? horizon : horizon - *it));
    }
    r.orders.assign(g.orders.rbegin(), g.orders.rend());
    grids.push_back(std::move(r));
  }
  return Partition(horizon, std::move(grids), {});
}

inline Side flip(Side s) { return s == Side::left ? Side::right : Side::left; }

/// Dual solution φ(t) = ψ(T − t), where ψ solves the forward problem in σ.
class DualSolution {
 public:
  DualSolution(Trajectory psi, OdeProblem sigma_problem, SolveReport report)
      : psi_(std::move(psi)), sigma_problem_(std::move(sigma_problem)), report_(std::move(report)) {
    for (std::size_t i = 0; i < psi_.components(); ++i) {
      for (int q : psi_.partition().grid(i).orders) {
        max_order_ = std::max(max_order_, q);
      }
    }
    t_partition_ = reverse_partition(psi_.partition());
  }

  [[nodiscard]] double horizon() const { return psi_.horizon(); }
  [[nodiscard]] std::size_t components() const { return psi_.components(); }
  /// Trajectory in the reversed variable σ.
  [[nodiscard]] const Trajectory& sigma_trajectory() const { return psi_; }
  [[nodiscard]] const OdeProblem& sigma_problem() const { return sigma_problem_; }
  [[nodiscard]] const SolveReport& report() const { return report_; }
  /// Dual partition expressed in t.
  [[nodiscard]] const Partition& partition() const { return t_partition_; }
  /// Highest local degree, which bounds the available derivatives.
  [[nodiscard]] int max_order() const { return max_order_; }
  [[nodiscard]] Method method(std::size_t i) const { return psi_.method(i); }

  /// Local degree of the dual piece containing t.
  [[nodiscard]] int order_at(std::size_t i, double t, Side side = Side::left) const {
    const double sigma = to_sigma(t);
    const Side s = sigma == horizon() ? Side::left : flip(side);
    return psi_.partition().order(i, psi_.partition().interval_at(i, sigma, s));
  }

  [[nodiscard]] double value(std::size_t i, double t, Side side = Side::left) const {
    return psi_.eval(i, to_sigma(t), flip(side));
  }

  /// d^r φ_i / dt^r = (−1)^r ψ_i^{(r)}(T − t).
  [[nodiscard]] double derivative(std::size_t i, double t, int r, Side side = Side::left) const {
    const double sigma = to_sigma(t);
    const Side s = sigma == horizon() ? Side::left : flip(side);
    const double d = psi_.derivative(i, sigma, r, s);
    return (r % 2 == 0) ? d : -d;
  }

  [[nodiscard]] std::vector<double> state(double t, Side side = Side::left) const {
    std::vector<double> v(components());
    for (std::size_t i = 0; i < v.size(); ++i) {
      v[i] = value(i, t, side);
    }
    return v;
  }

  [[nodiscard]] double to_sigma(double t) const {
    if (t == 0.0) {
      return horizon();
    }
    if (t == horizon()) {
      return 0.0;
    }
    return horizon() - t;
  }

 private:
  Trajectory psi_;
  OdeProblem sigma_problem_;
  SolveReport report_;
  Partition t_partition_;
  int max_order_ = 0;
};

namespace detail {

// Memo of J*(t) for the dual right-hand side; keyed on (t bits, side).
class JstarCache {
 public:
  template <class F>
  Eigen::MatrixXd get(double t, Side side, F&& make) {
    const auto key = std::pair{std::bit_cast<std::uint64_t>(t), static_cast<int>(side)};
    {
      std::lock_guard lock(mutex_);
      if (auto it = cache_.find(key); it != cache_.end()) {
        return it->second;
      }
    }
    Eigen::MatrixXd m = make();
    std::lock_guard lock(mutex_);
    return cache_.try_emplace(key, std::move(m)).first->second;
  }

 private:
  std::mutex mutex_;
  std::map<std::pair<std::uint64_t, int>, Eigen::MatrixXd> cache_;
};

}  // namespace detail

/// The σ-forward problem ψ' = J*(T − σ) ψ + g(T − σ), ψ(0) = φ_T. The dual
/// partition is given in t; `methods` defaults to mcG for every component.
inline OdeProblem dual_sigma_problem(const DualSpec& spec, std::vector<Method> methods = {}) {
  if (!spec.primal) {
    throw std::invalid_argument("dual: missing primal trajectory");
  }
  const std::size_t n = spec.problem.dimension;
  if (spec.terminal.size() != n) {
    throw std::invalid_argument("dual: terminal data has wrong size");
  }
  for (double v : spec.terminal) {
    if (!std::isfinite(v)) {
      throw std::invalid_argument("dual: terminal data not finite");
    }
  }
  if (spec.s_points < 1) {
    throw std::invalid_argument("dual: s quadrature needs at least one point");
  }
  if (spec.primal->horizon() != spec.problem.horizon) {
    throw std::invalid_argument("dual: primal horizon mismatch");
  }
  if (methods.empty()) {
    methods.assign(n, Method::mcG);
  }
  const double horizon = spec.problem.horizon;
  auto cache = std::make_shared<detail::JstarCache>();
  OdeProblem sigma;
  sigma.dimension = n;
  sigma.initial_state = spec.terminal;
  sigma.horizon = horizon;
  sigma.methods = std::move(methods);
  sigma.rhs = [spec, cache, horizon](std::span<const double> psi, double s, Side side, std::span<double> out) {
    const double t = s == 0.0 ? horizon : (s == horizon ? 0.0 : horizon - s);
    const Side ts = flip(side);
    const Eigen::MatrixXd js = cache->get(t, side, [&] {
      const auto u = spec.primal->state(t, ts);
      const auto v = spec.reference ? spec.reference->state(t, ts) : u;
      return jstar(v, u, t, spec.problem, spec.s_points, ts);
    });
    const Eigen::Map<const Eigen::VectorXd> x(psi.data(), static_cast<Eigen::Index>(psi.size()));
    Eigen::Map<Eigen::VectorXd> y(out.data(), static_cast<Eigen::Index>(out.size()));
    y = js * x;
    if (spec.forcing) {
      std::vector<double> g(out.size());
      spec.forcing(t, g);
      for (std::size_t i = 0; i < g.size(); ++i) {
        out[i] += g[i];
      }
    }
  };
  return sigma;
}

/// Solves the dual problem backward in time on `dual_partition` (given in t).
inline DualSolution solve_dual(const DualSpec& spec, const Partition& dual_partition,
                               const SolveSettings& settings = {}, std::vector<Method> methods = {}) {
  if (dual_partition.components() != spec.problem.dimension) {
    throw std::invalid_argument("dual: partition component count mismatch");
  }
  if (dual_partition.horizon() != spec.problem.horizon) {
    throw std::invalid_argument("dual: partition horizon mismatch");
  }
  auto sigma = dual_sigma_problem(spec, std::move(methods));
  auto sol = solve(sigma, reverse_partition(dual_partition), settings);
  return DualSolution(std::move(sol.trajectory), std::move(sigma), std::move(sol.report));
}

inline DualSolution solve_dual(const DualSpec& spec, const SolveSettings& settings = {}) {
  return solve_dual(spec, default_dual_partition(spec.primal->partition()), settings);
}

/// φ_T = e(T)/‖e(T)‖ for a known u(T) (zero vector when e(T) = 0).
inline std::vector<double> normalized_error(std::span<const double> approx, std::span<const double> exact) {
  std::vector<double> e(approx.size());
  double norm = 0.0;
  for (std::size_t i = 0; i < e.size(); ++i) {
    e[i] = approx[i] - exact[i];
    norm += e[i] * e[i];
  }
  norm = std::sqrt(norm);
  if (norm > 0.0) {
    for (double& v : e) {
      v /= norm;
    }
  }
  return e;
}

}  // namespace mag
