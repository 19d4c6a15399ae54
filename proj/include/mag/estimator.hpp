#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mag/dual.hpp"
#include "mag/partition.hpp"
#include "mag/polynomial.hpp"
#include "mag/problem.hpp"
#include "mag/solver.hpp"
#include "mag/tableau.hpp"
#include "mag/trajectory.hpp"

namespace mag {

/// C_q = 1/(2^q q!), the midpoint Taylor interpolation constant.
inline double interp_constant(int q) {
  if (q < 0) {
    throw std::invalid_argument("interp_constant: q must be nonnegative");
  }
  double d = 1.0;
  for (int r = 1; r <= q; ++r) {
    d *= 2.0 * r;
  }
  return 1.0 / d;
}

/// Q_q(x) = (P_q(x) + P_{q+1}(x)) / (x + 1), continuous at x = -1.
inline double radau_q(int q, double x) {
  if (x == -1.0) {
    return legendre(q, -1.0).dp + legendre(q + 1, -1.0).dp;
  }
  return (legendre_eval(q, x) + legendre_eval(q + 1, x)) / (x + 1.0);
}

/// Reference points in [0, 1] where the residual-zero interpolant matches the
/// dual: the q Gauss points (mcG), or 0 and the q zeros of Q_q mapped by
/// s = (1 + x)/2 (mdG).
inline std::vector<double> residual_zero_points(Method method, int q) {
  std::vector<double> s;
  if (method == Method::mcG) {
    const auto& g = gauss_legendre(q);
    for (double x : g.nodes) {
      s.push_back(0.5 * (1.0 + x));
    }
    return s;
  }
  s.push_back(0.0);
  const auto& radau = radau_nodes(q).nodes;
  // radau nodes are 1 - (1 + x)/2 for the interior zeros x of P_q + P_{q+1}
  for (auto it = radau.rbegin() + 1; it != radau.rend(); ++it) {
    s.push_back(1.0 - *it);
  }
  return s;
}

/// Constant c with ∫_I |R (φ − πφ)| = c k |R(t^-)| |(φ − πφ)(t^-)| when R and
/// φ − πφ have the model shapes of the residual-zero interpolant.
inline double eg_constant(Method method, int q) {
  const int n = 2 * q + 4;
  if (method == Method::mcG) {
    const double end = legendre_eval(q, 1.0);
    return integrate([q](double s) { return std::pow(legendre_eval(q, 2.0 * s - 1.0), 2); }, 0.0, 1.0, n) /
           (end * end);
  }
  auto g = [q](double s) {
    const double x = 2.0 * s - 1.0;
    return (x + 1.0) * radau_q(q, x) * radau_q(q, x);
  };
  return integrate_abs(g, 0.0, 1.0, n) / std::abs(g(1.0));
}

struct EstimatorSettings {
  /// Dyadic depth the primal was solved with; E_C uses depth + 1 and E_Q
  /// compares depth with depth + 1.
  int solver_depth = 0;
  /// Gauss points per piece for |·| integrals; 0 = 2(q + 2).
  int abs_points = 0;
};

struct IntervalEstimate {
  std::size_t component = 0;
  std::size_t interval = 0;
  double t_begin = 0.0;
  double t_end = 0.0;
  int order = 0;
  /// Dual derivative order used: q (mcG) or q + 1 (mdG).
  int derivative = 0;
  double r = 0.0;
  double rbar = 0.0;
  double jump = 0.0;
  double s = 0.0;
  double computational = 0.0;
  double quadrature_difference = 0.0;
  double quadrature_bound = 0.0;
  /// ∫ R (φ − πφ) with the residual-zero interpolant, and its sign α.
  double eg = 0.0;
  int alpha = 0;
};

struct ComponentEstimate {
  Method method = Method::mcG;
  /// ∫ |φ_i^{(p)}| with p = q (mcG) or q + 1 (mdG).
  double stability = 0.0;
  /// Σ_j k_ij |mean of φ_i on I_ij|.
  double stability_mean = 0.0;
  /// ∫ k^{-p} |φ_i − πφ_i| with the residual-zero interpolant.
  double stability_tilde = 0.0;
  double max_ckr = 0.0;
  double max_computational = 0.0;
  double max_quadrature = 0.0;
};

struct ErrorReport {
  std::string method;
  double e0 = 0.0;
  double e1 = 0.0;
  /// Unavailable when the dual has too low degree for φ^{(p)}.
  std::optional<double> e2, e3, e4, e5;
  /// Σ ∫ |R (φ − πφ)| with the residual-zero interpolant (used in the total).
  double eg = 0.0;
  /// |Σ ∫ R (φ − πφ)|.
  double eg_signed = 0.0;
  /// Σ c_q k |R(t^-)| |(φ − πφ)(t^-)|.
  double eg_shortcut = 0.0;
  double ec = 0.0;
  double eq = 0.0;
  double total = 0.0;
  /// E3 + E_C + E_Q.
  double explicit_bound = 0.0;
  /// Σ [∫ R φ + [U] φ], the computable error representation.
  double representation = 0.0;
  double s1 = 0.0;
  double s2 = 0.0;
  double s_phi = 0.0;
  bool derivatives_available = true;
  int solver_depth = 0;
  std::map<int, double> constants;
  std::vector<ComponentEstimate> components;
  std::vector<IntervalEstimate> intervals;
};

namespace detail {

// Sign changes of g on (a, b), found on a uniform sample grid and refined by bisection.
template <class G>
std::vector<double> sign_change_cuts(G&& g, double a, double b, int n) {
  std::vector<double> cuts;
  const int samples = 2 * n + 2;
  double prev_x = a;
  double prev_v = g(a + 1e-9 * (b - a));
  for (int k = 1; k <= samples; ++k) {
    const double x = (k == samples) ? b - 1e-9 * (b - a) : a + (b - a) * k / samples;
    const double v = g(x);
    if ((v < 0.0 && prev_v > 0.0) || (v > 0.0 && prev_v < 0.0)) {
      double lo = prev_x, hi = x, flo = prev_v;
      for (int it = 0; it < 80 && hi - lo > 1e-15 * (b - a); ++it) {
        const double m = 0.5 * (lo + hi);
        const double fm = g(m);
        if ((fm < 0.0) == (flo < 0.0)) {
          lo = m;
          flo = fm;
        } else {
          hi = m;
        }
      }
      cuts.push_back(0.5 * (lo + hi));
    }
    if (v != 0.0) {
      prev_v = v;
    }
    prev_x = x;
  }
  return cuts;
}

template <class F>
double integrate_over(F&& f, std::vector<double> cuts, double a, double b, int n) {
  cuts.push_back(a);
  cuts.push_back(b);
  std::sort(cuts.begin(), cuts.end());
  double total = 0.0;
  for (std::size_t p = 0; p + 1 < cuts.size(); ++p) {
    if (cuts[p + 1] > cuts[p]) {
      total += integrate(f, cuts[p], cuts[p + 1], n);
    }
  }
  return total;
}

// f(U(t), t) for all components, memoized on (t, side).
class RhsMemo {
 public:
  RhsMemo(const Trajectory& traj, const OdeProblem& problem) : traj_(traj), problem_(problem) {}

  const std::vector<double>& at(double t, Side side) {
    const auto key = std::pair{std::bit_cast<std::uint64_t>(t), static_cast<int>(side)};
    auto it = memo_.find(key);
    if (it != memo_.end()) {
      return it->second;
    }
    const auto u = traj_.state(t, side);
    std::vector<double> f(u.size());
    problem_.rhs(u, t, side, f);
    check_finite(f, t);
    return memo_.emplace(key, std::move(f)).first->second;
  }

 private:
  const Trajectory& traj_;
  const OdeProblem& problem_;
  std::map<std::pair<std::uint64_t, int>, std::vector<double>> memo_;
};

// Residual vector at interior points of one integration piece.
class PieceResidual {
 public:
  PieceResidual(const Trajectory& traj, const OdeProblem& problem) : traj_(traj), problem_(problem) {}

  void reset() { memo_.clear(); }

  double operator()(std::size_t i, double t) {
    auto it = memo_.find(t);
    if (it == memo_.end()) {
      it = memo_.emplace(t, residual_vector(traj_, problem_, t, Side::left)).first;
    }
    return it->second[i];
  }

 private:
  const Trajectory& traj_;
  const OdeProblem& problem_;
  std::map<double, std::vector<double>> memo_;
};

inline int dual_derivative_order(Method m, int q) { return m == Method::mcG ? q : q + 1; }

}  // namespace detail

/// ∫_{I_ij} f_i(U, ·) dt by the interval's nodal rule at the given dyadic depth.
inline double quadrature_integral(const Trajectory& traj, const OdeProblem& problem, std::size_t i, std::size_t j,
                                  int depth, detail::RhsMemo* memo = nullptr) {
  detail::RhsMemo local(traj, problem);
  auto& m = memo != nullptr ? *memo : local;
  const auto plan = traj.tab(i, j).plan(depth);
  const double k = traj.partition().step(i, j);
  double acc = 0.0;
  for (std::size_t p = 0; p < plan.points.size(); ++p) {
    const double t = traj.map_time(i, j, plan.points[p]);
    const Side side = plan.at_left_end[p] ? Side::right : Side::left;
    acc += plan.weights[p] * m.at(t, side)[i];
  }
  return k * acc;
}

/// R^C_ij = ((ξ_q − ξ_0^(−)) − ∫ f_i) / k with the integral one dyadic level
/// finer than the solver used.
inline double computational_residual(const Trajectory& traj, const OdeProblem& problem, std::size_t i,
                                     std::size_t j, int solver_depth = 0, detail::RhsMemo* memo = nullptr) {
  const double k = traj.partition().step(i, j);
  const double change = traj.nodal(i, j).back() - traj.incoming(i, j);
  return (change - quadrature_integral(traj, problem, i, j, solver_depth + 1, memo)) / k;
}

struct QuadratureResidual {
  /// (Q_m − Q_{m+1}) / k.
  double difference = 0.0;
  /// |difference| / (1 − 2^{-2q}) for mcG, / (1 − 2^{-1-2q}) for mdG.
  double bound = 0.0;
  double integral_m = 0.0;
  double integral_m1 = 0.0;
};

inline double dyadic_factor(Method method, int q) {
  const double e = method == Method::mcG ? -2.0 * q : -1.0 - 2.0 * q;
  return 1.0 / (1.0 - std::pow(2.0, e));
}

/// Bound on |R^Q_m| from the integrals at depths m and m + 1.
inline QuadratureResidual quadrature_residual(const Trajectory& traj, const OdeProblem& problem, std::size_t i,
                                              std::size_t j, int m, detail::RhsMemo* memo = nullptr) {
  if (m < 0) {
    throw std::invalid_argument("quadrature_residual: depth must be nonnegative");
  }
  QuadratureResidual r;
  const double k = traj.partition().step(i, j);
  r.integral_m = quadrature_integral(traj, problem, i, j, m, memo);
  r.integral_m1 = quadrature_integral(traj, problem, i, j, m + 1, memo);
  r.difference = (r.integral_m - r.integral_m1) / k;
  r.bound = std::abs(r.difference) * dyadic_factor(traj.method(i), traj.partition().order(i, j));
  return r;
}

/// All estimators for a solved primal and its dual.
inline ErrorReport estimate(const Trajectory& traj, const DualSolution& dual, const OdeProblem& problem,
                            const EstimatorSettings& settings = {}) {
  const std::size_t n = traj.components();
  if (dual.components() != n || problem.dimension != n) {
    throw std::invalid_argument("estimate: component count mismatch");
  }
  if (dual.horizon() != traj.horizon() || problem.horizon != traj.horizon()) {
    throw std::invalid_argument("estimate: mismatched horizons");
  }
  const Partition& part = traj.partition();

  ErrorReport rep;
  rep.solver_depth = settings.solver_depth;
  {
    bool cg = false, dg = false;
    for (auto m : traj.methods()) {
      (m == Method::mcG ? cg : dg) = true;
    }
    rep.method = cg && dg ? "mixed" : (cg ? "mcG" : "mdG");
  }

  // breakpoints of every primal and dual component
  std::vector<double> cuts;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& a = part.grid(i).breakpoints;
    const auto& b = dual.partition().grid(i).breakpoints;
    cuts.insert(cuts.end(), a.begin(), a.end());
    cuts.insert(cuts.end(), b.begin(), b.end());
  }
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

  struct Local {
    int q = 0;
    int p = 0;
    std::vector<double> taylor;  // φ^{(r)}(x0)/r!
    double x0 = 0.0;
    const LagrangeBasis* basis = nullptr;
    std::vector<double> pin;  // φ at residual-zero points
    double abs_r = 0.0, r2 = 0.0, e0 = 0.0, e1 = 0.0, abs_dphi = 0.0, dphi2 = 0.0;
    double g = 0.0, g_abs = 0.0, phi = 0.0, tilde = 0.0, rep = 0.0;
  };
  std::map<std::pair<int, int>, LagrangeBasis> eg_bases;
  std::vector<std::vector<Local>> loc(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Method m = traj.method(i);
    loc[i].resize(part.intervals(i));
    for (std::size_t j = 0; j < part.intervals(i); ++j) {
      auto& L = loc[i][j];
      L.q = part.order(i, j);
      L.p = detail::dual_derivative_order(m, L.q);
      const double a = part.start(i, j), k = part.step(i, j);
      L.x0 = a + 0.5 * k;
      const int dual_deg = dual.order_at(i, L.x0);
      int taylor_deg = L.p - 1;
      if (dual_deg < L.p) {
        rep.derivatives_available = false;
        taylor_deg = std::max(0, std::min(L.p - 1, dual_deg - 1));
      }
      double fact = 1.0;
      for (int r = 0; r <= taylor_deg; ++r) {
        if (r > 0) {
          fact *= r;
        }
        L.taylor.push_back(dual.derivative(i, L.x0, r) / fact);
      }
      const auto key = std::pair{static_cast<int>(m), L.q};
      auto it = eg_bases.find(key);
      if (it == eg_bases.end()) {
        it = eg_bases.emplace(key, LagrangeBasis(residual_zero_points(m, L.q))).first;
      }
      L.basis = &it->second;
      for (double s : it->second.nodes()) {
        L.pin.push_back(dual.value(i, s == 0.0 ? a : a + s * k, Side::right));
      }
    }
  }

  auto taylor_eval = [](const Local& L, double t) {
    const double h = t - L.x0;
    double v = 0.0;
    for (auto it = L.taylor.rbegin(); it != L.taylor.rend(); ++it) {
      v = v * h + *it;
    }
    return v;
  };

  detail::PieceResidual R(traj, problem);
  std::vector<std::size_t> cursor(n, 0);
  int qmax = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (int q : part.grid(i).orders) {
      qmax = std::max(qmax, q);
    }
  }
  const int global_points = settings.abs_points > 0 ? settings.abs_points : 2 * (qmax + 3);

  for (std::size_t c = 0; c + 1 < cuts.size(); ++c) {
    const double lo = cuts[c], hi = cuts[c + 1];
    R.reset();
    std::vector<int> p_of(n);
    for (std::size_t i = 0; i < n; ++i) {
      while (part.end(i, cursor[i]) <= lo) {
        ++cursor[i];
      }
      const std::size_t j = cursor[i];
      auto& L = loc[i][j];
      p_of[i] = L.p;
      const double a = part.start(i, j), k = part.step(i, j);
      const int npts = settings.abs_points > 0 ? settings.abs_points : 2 * (L.q + 2);
      auto res = [&](double t) { return R(i, t); };
      auto phi = [&](double t) { return dual.value(i, t); };
      auto dphi = [&](double t) { return dual.derivative(i, t, L.p); };
      auto pig = [&](double t) { return L.basis->interpolate(L.pin, (t - a) / k); };

      L.abs_r += integrate_abs(res, lo, hi, npts);
      L.r2 += integrate([&](double t) { return res(t) * res(t); }, lo, hi, npts);
      auto e_taylor = [&](double t) { return res(t) * (phi(t) - taylor_eval(L, t)); };
      L.e0 += integrate(e_taylor, lo, hi, npts);
      L.e1 += integrate_abs(e_taylor, lo, hi, npts);
      L.abs_dphi += integrate_abs(dphi, lo, hi, npts);
      L.dphi2 += integrate([&](double t) { return dphi(t) * dphi(t); }, lo, hi, npts);
      auto e_zero = [&](double t) { return res(t) * (phi(t) - pig(t)); };
      L.g += integrate(e_zero, lo, hi, npts);
      L.g_abs += integrate_abs(e_zero, lo, hi, npts);
      L.phi += integrate(phi, lo, hi, npts);
      L.tilde += integrate_abs([&](double t) { return phi(t) - pig(t); }, lo, hi, npts) / std::pow(k, L.p);
      L.rep += integrate([&](double t) { return res(t) * phi(t); }, lo, hi, npts);
    }
    // ∫ ‖φ^{(p)}‖ and ∫ ‖φ‖, split where any component changes sign
    std::vector<double> dcuts, vcuts;
    for (std::size_t i = 0; i < n; ++i) {
      auto di = detail::sign_change_cuts([&](double t) { return dual.derivative(i, t, p_of[i]); }, lo, hi,
                                         global_points);
      auto vi = detail::sign_change_cuts([&](double t) { return dual.value(i, t); }, lo, hi, global_points);
      dcuts.insert(dcuts.end(), di.begin(), di.end());
      vcuts.insert(vcuts.end(), vi.begin(), vi.end());
    }
    rep.s1 += detail::integrate_over(
        [&](double t) {
          double s = 0.0;
          for (std::size_t i = 0; i < n; ++i) {
            const double d = dual.derivative(i, t, p_of[i]);
            s += d * d;
          }
          return std::sqrt(s);
        },
        dcuts, lo, hi, global_points);
    rep.s_phi += detail::integrate_over(
        [&](double t) {
          double s = 0.0;
          for (std::size_t i = 0; i < n; ++i) {
            const double v = dual.value(i, t);
            s += v * v;
          }
          return std::sqrt(s);
        },
        vcuts, lo, hi, global_points);
  }

  detail::RhsMemo memo(traj, problem);
  double e0 = 0.0, e1 = 0.0, e2 = 0.0, l2 = 0.0, s2 = 0.0, g_signed = 0.0;
  double max_ckr_all = 0.0;
  std::map<std::pair<int, int>, double> eg_consts;
  rep.components.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Method m = traj.method(i);
    auto& comp = rep.components[i];
    comp.method = m;
    for (std::size_t j = 0; j < part.intervals(i); ++j) {
      auto& L = loc[i][j];
      const double a = part.start(i, j), b = part.end(i, j), k = part.step(i, j);
      IntervalEstimate iv;
      iv.component = i;
      iv.interval = j;
      iv.t_begin = a;
      iv.t_end = b;
      iv.order = L.q;
      iv.derivative = L.p;
      if (m == Method::mdG) {
        const double jmp = traj.jump(i, j);
        const double phi_a = dual.value(i, a, Side::right);
        L.e0 += jmp * (phi_a - taylor_eval(L, a));
        L.e1 += std::abs(jmp) * std::abs(phi_a - taylor_eval(L, a));
        L.g += jmp * (phi_a - L.basis->interpolate(L.pin, 0.0));
        L.rep += jmp * phi_a;
        iv.jump = jmp;
      }
      iv.r = L.abs_r / k;
      iv.rbar = iv.r + std::abs(iv.jump) / k;
      iv.s = L.abs_dphi / k;
      const double rt = m == Method::mdG ? iv.rbar : iv.r;
      const double cst = interp_constant(L.p - 1);
      rep.constants[L.p - 1] = cst;
      e2 += cst * std::pow(k, L.p + 1) * rt * iv.s;
      const double ckr = cst * std::pow(k, L.p) * rt;
      comp.max_ckr = std::max(comp.max_ckr, ckr);
      const double jk = std::abs(iv.jump) / k;
      l2 += cst * cst * std::pow(k, 2 * L.p) * (L.r2 + 2.0 * jk * L.abs_r + jk * jk * k);
      s2 += L.dphi2;
      comp.stability += L.abs_dphi;
      comp.stability_mean += std::abs(L.phi);
      comp.stability_tilde += L.tilde;
      e0 += L.e0;
      e1 += L.e1;
      g_signed += L.g;
      rep.eg += L.g_abs;
      rep.representation += L.rep;
      iv.eg = L.g;
      iv.alpha = L.g > 0.0 ? 1 : (L.g < 0.0 ? -1 : 0);

      // shortcut with the model-shape constant
      const auto ckey = std::pair{static_cast<int>(m), L.q};
      auto cit = eg_consts.find(ckey);
      if (cit == eg_consts.end()) {
        cit = eg_consts.emplace(ckey, eg_constant(m, L.q)).first;
      }
      const auto r_end = residual_vector(traj, problem, b, Side::left)[i];
      const double d_end = dual.value(i, b, Side::left) - L.basis->interpolate(L.pin, 1.0);
      rep.eg_shortcut += cit->second * k * std::abs(r_end) * std::abs(d_end);

      iv.computational = computational_residual(traj, problem, i, j, settings.solver_depth, &memo);
      const auto qr = quadrature_residual(traj, problem, i, j, settings.solver_depth, &memo);
      iv.quadrature_difference = qr.difference;
      iv.quadrature_bound = qr.bound;
      comp.max_computational = std::max(comp.max_computational, std::abs(iv.computational));
      comp.max_quadrature = std::max(comp.max_quadrature, qr.bound);
      rep.intervals.push_back(iv);
    }
    max_ckr_all = std::max(max_ckr_all, comp.max_ckr);
  }

  rep.e0 = std::abs(e0);
  rep.e1 = e1;
  rep.eg_signed = std::abs(g_signed);
  rep.s2 = std::sqrt(s2);
  double e3 = 0.0;
  for (const auto& comp : rep.components) {
    e3 += comp.stability * comp.max_ckr;
    rep.ec += comp.stability_mean * comp.max_computational;
    rep.eq += comp.stability_mean * comp.max_quadrature;
  }
  if (rep.derivatives_available) {
    rep.e2 = e2;
    rep.e3 = e3;
    rep.e4 = rep.s1 * std::sqrt(static_cast<double>(n)) * max_ckr_all;
    rep.e5 = rep.s2 * std::sqrt(l2);
  }
  rep.total = rep.eg + rep.ec + rep.eq;
  rep.explicit_bound = e3 + rep.ec + rep.eq;
  return rep;
}

struct GalerkinEstimates {
  double e0 = 0.0;
  double e1 = 0.0;
  std::optional<double> e2, e3, e4, e5;
  bool derivatives_available = true;
};

inline GalerkinEstimates galerkin_estimates(const Trajectory& traj, const DualSolution& dual,
                                            const OdeProblem& problem, const EstimatorSettings& settings = {}) {
  const auto r = estimate(traj, dual, problem, settings);
  return {r.e0, r.e1, r.e2, r.e3, r.e4, r.e5, r.derivatives_available};
}

struct ResidualZeroEstimate {
  double eg = 0.0;
  double eg_signed = 0.0;
  double shortcut = 0.0;
  std::vector<int> alpha;
};

inline ResidualZeroEstimate eg_residual_zero(const Trajectory& traj, const DualSolution& dual,
                                             const OdeProblem& problem, const EstimatorSettings& settings = {}) {
  const auto r = estimate(traj, dual, problem, settings);
  ResidualZeroEstimate out{r.eg, r.eg_signed, r.eg_shortcut, {}};
  for (const auto& iv : r.intervals) {
    out.alpha.push_back(iv.alpha);
  }
  return out;
}

/// Σ_ij [∫ R_i φ_i + [U_i] φ_i(t_{i,j-1})].
inline double error_representation(const Trajectory& traj, const DualSolution& dual, const OdeProblem& problem) {
  if (dual.horizon() != traj.horizon()) {
    throw std::invalid_argument("error_representation: mismatched horizons");
  }
  const std::size_t n = traj.components();
  const Partition& part = traj.partition();
  std::vector<double> cuts;
  int qmax = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& a = part.grid(i).breakpoints;
    const auto& b = dual.partition().grid(i).breakpoints;
    cuts.insert(cuts.end(), a.begin(), a.end());
    cuts.insert(cuts.end(), b.begin(), b.end());
    for (int q : part.grid(i).orders) {
      qmax = std::max(qmax, q);
    }
  }
  qmax = std::max(qmax, dual.max_order());
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  const int npts = 2 * qmax + 8;
  const auto& rule = gauss_legendre(npts);
  double sum = 0.0;
  for (std::size_t c = 0; c + 1 < cuts.size(); ++c) {
    const double lo = cuts[c], hi = cuts[c + 1];
    const double half = 0.5 * (hi - lo), mid = 0.5 * (lo + hi);
    for (int g = 0; g < npts; ++g) {
      const double t = mid + half * rule.nodes[g];
      const auto r = residual_vector(traj, problem, t);
      double dot = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        dot += r[i] * dual.value(i, t);
      }
      sum += half * rule.weights[g] * dot;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (traj.method(i) != Method::mdG) {
      continue;
    }
    for (std::size_t j = 0; j < part.intervals(i); ++j) {
      sum += traj.jump(i, j) * dual.value(i, part.start(i, j), Side::right);
    }
  }
  return sum;
}

/// E_G + E_C + E_Q.
inline double total_error(const ErrorReport& r) { return r.eg + r.ec + r.eq; }

/// The explicit E3-form bound E3 + E_C + E_Q, or nullopt without E3.
inline std::optional<double> explicit_bound(const ErrorReport& r) {
  if (!r.e3) {
    return std::nullopt;
  }
  return *r.e3 + r.ec + r.eq;
}

/// S_Φ(T) = ∫ ‖Φ‖ dt.
inline double dual_stability_factor(const DualSolution& dual) {
  const auto& part = dual.partition();
  std::vector<double> cuts;
  for (std::size_t i = 0; i < dual.components(); ++i) {
    const auto& b = part.grid(i).breakpoints;
    cuts.insert(cuts.end(), b.begin(), b.end());
  }
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  const int npts = 2 * dual.max_order() + 6;
  double s = 0.0;
  for (std::size_t c = 0; c + 1 < cuts.size(); ++c) {
    std::vector<double> sc;
    for (std::size_t i = 0; i < dual.components(); ++i) {
      auto v = detail::sign_change_cuts([&](double t) { return dual.value(i, t); }, cuts[c], cuts[c + 1], npts);
      sc.insert(sc.end(), v.begin(), v.end());
    }
    s += detail::integrate_over(
        [&](double t) {
          double acc = 0.0;
          for (std::size_t i = 0; i < dual.components(); ++i) {
            acc += dual.value(i, t) * dual.value(i, t);
          }
          return std::sqrt(acc);
        },
        sc, cuts[c], cuts[c + 1], npts);
  }
  return s;
}

/// ∫_0^T ‖R_Φ‖ dt for the dual approximation (its residual in σ).
inline double dual_residual_norm(const DualSolution& dual) {
  for (std::size_t i = 0; i < dual.components(); ++i) {
    if (dual.method(i) != Method::mcG) {
      throw std::invalid_argument("stability_factor_error: dual must come from the continuous method");
    }
  }
  const auto& psi = dual.sigma_trajectory();
  const auto& sp = dual.sigma_problem();
  std::vector<double> cuts;
  for (std::size_t i = 0; i < psi.components(); ++i) {
    const auto& b = psi.partition().grid(i).breakpoints;
    cuts.insert(cuts.end(), b.begin(), b.end());
  }
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  const int npts = 2 * dual.max_order() + 6;
  double total = 0.0;
  for (std::size_t c = 0; c + 1 < cuts.size(); ++c) {
    total += integrate(
        [&](double s) {
          const auto r = residual_vector(psi, sp, s);
          double acc = 0.0;
          for (double v : r) {
            acc += v * v;
          }
          return std::sqrt(acc);
        },
        cuts[c], cuts[c + 1], npts);
  }
  return total;
}

/// Relative-error bound C ∫ ‖R_Φ‖ for S_Φ(T).
inline double stability_factor_error(const DualSolution& dual, double c = 1.0) {
  if (!(c >= 0.0)) {
    throw std::invalid_argument("stability_factor_error: C must be nonnegative");
  }
  return c * dual_residual_norm(dual);
}

/// Same bound with C = max ‖ω‖ / S_Φ(T) taken from a dual-of-dual trajectory
/// (sampled at its nodes).
inline double stability_factor_error(const DualSolution& dual, const Trajectory& omega) {
  double wmax = 0.0;
  std::vector<double> times;
  for (std::size_t i = 0; i < omega.components(); ++i) {
    for (std::size_t j = 0; j < omega.partition().intervals(i); ++j) {
      for (std::size_t m = 0; m < omega.nodal(i, j).size(); ++m) {
        times.push_back(omega.node_time(i, j, m));
      }
    }
  }
  for (double t : times) {
    const auto w = omega.state(t);
    double acc = 0.0;
    for (double v : w) {
      acc += v * v;
    }
    wmax = std::max(wmax, std::sqrt(acc));
  }
  const double s = dual_stability_factor(dual);
  if (!(s > 0.0)) {
    throw std::invalid_argument("stability_factor_error: zero stability factor");
  }
  return stability_factor_error(dual, wmax / s);
}

}  // namespace mag
