#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mag/problem.hpp"
#include "mag/tableau.hpp"

namespace mag {

struct Model {
  std::string name;
  std::string description;
  std::size_t dimension = 0;
  SimpleRhsFn rhs;
  JacobianFn jacobian;
  std::vector<double> initial;
  double horizon = 1.0;
  /// u(t) from u(0); empty when no closed form is known.
  std::function<std::vector<double>(double, std::span<const double>)> exact;
  /// Conserved quantity along the exact flow, if any.
  std::function<double(std::span<const double>)> invariant;
  /// Suggested step per component relative to a base step.
  std::vector<double> step_ratios;
  /// (position, velocity) component pairs for Hamiltonian models.
  std::vector<std::pair<std::size_t, std::size_t>> pairs;

  [[nodiscard]] OdeProblem problem(std::vector<Method> methods, double t_end = 0.0,
                                   std::vector<double> u0 = {}) const {
    return make_problem(rhs, u0.empty() ? initial : std::move(u0), t_end > 0.0 ? t_end : horizon,
                        std::move(methods), jacobian);
  }

  [[nodiscard]] OdeProblem problem(Method method, double t_end = 0.0, std::vector<double> u0 = {}) const {
    return problem(std::vector<Method>(dimension, method), t_end, std::move(u0));
  }
};

namespace models {

/// Solves M = E − e sin E for E (elliptic, 0 ≤ e < 1).
inline double solve_kepler(double mean_anomaly, double e) {
  if (!(e >= 0.0 && e < 1.0)) {
    throw std::domain_error("kepler: eccentricity must lie in [0, 1)");
  }
  double ecc = e > 0.8 ? std::numbers::pi : mean_anomaly;
  for (int it = 0; it < 60; ++it) {
    const double f = ecc - e * std::sin(ecc) - mean_anomaly;
    const double step = f / (1.0 - e * std::cos(ecc));
    ecc -= step;
    if (std::abs(step) < 1e-16 * (1.0 + std::abs(ecc))) {
      break;
    }
  }
  return ecc;
}

/// Orbital period 2π sqrt(a³/μ) of a bound planar orbit with state (x, y, vx, vy).
inline double kepler_period(std::span<const double> s, double mu = 1.0) {
  const double r = std::hypot(s[0], s[1]);
  const double v2 = s[2] * s[2] + s[3] * s[3];
  const double a = 1.0 / (2.0 / r - v2 / mu);
  if (!(a > 0.0)) {
    throw std::domain_error("kepler: orbit is not bound");
  }
  return 2.0 * std::numbers::pi * std::sqrt(a * a * a / mu);
}

/// Propagates a bound planar Kepler orbit (x, y, vx, vy) by time t with Lagrange f and g coefficients.
inline std::vector<double> kepler_propagate(std::span<const double> s, double t, double mu = 1.0) {
  const double x = s[0], y = s[1], vx = s[2], vy = s[3];
  const double r0 = std::hypot(x, y);
  const double v2 = vx * vx + vy * vy;
  const double a = 1.0 / (2.0 / r0 - v2 / mu);
  if (!(a > 0.0)) {
    throw std::domain_error("kepler: orbit is not bound");
  }
  const double n = std::sqrt(mu / (a * a * a));
  const double ec = 1.0 - r0 / a;
  const double es = (x * vx + y * vy) / std::sqrt(mu * a);
  const double e = std::hypot(ec, es);
  const double e0 = std::atan2(es, ec);
  const double m0 = e0 - e * std::sin(e0);
  const double de = solve_kepler(m0 + n * t, e) - e0;
  const double r = a * (1.0 - ec * std::cos(de) + es * std::sin(de));
  const double f = 1.0 - a / r0 * (1.0 - std::cos(de));
  const double g = t - (de - std::sin(de)) / n;
  const double fd = -std::sqrt(mu * a) / (r * r0) * std::sin(de);
  const double gd = 1.0 - a / r * (1.0 - std::cos(de));
  return {f * x + g * vx, f * y + g * vy, fd * x + gd * vx, fd * y + gd * vy};
}

/// Perihelion state of an orbit with semi-major axis a and eccentricity e.
inline std::vector<double> perihelion(double a, double e, double mu = 1.0) {
  const double rp = a * (1.0 - e);
  return {rp, 0.0, 0.0, std::sqrt(mu * (1.0 + e) / rp)};
}

inline Model linear_decay() {
  Model m;
  m.name = "linear_decay";
  m.description = "u' = -u";
  m.dimension = 1;
  m.rhs = [](std::span<const double> u, double, std::span<double> f) { f[0] = -u[0]; };
  m.jacobian = [](std::span<const double>, double, Eigen::MatrixXd& j) { j = Eigen::MatrixXd::Constant(1, 1, -1.0); };
  m.initial = {1.0};
  m.horizon = 1.0;
  m.exact = [](double t, std::span<const double> u0) { return std::vector<double>{u0[0] * std::exp(-t)}; };
  m.step_ratios = {1.0};
  return m;
}

inline Model linear_system() {
  Model m;
  m.name = "linear_system";
  m.description = "u1' = -u1 + u2, u2' = -10 u2 (two rates)";
  m.dimension = 2;
  m.rhs = [](std::span<const double> u, double, std::span<double> f) {
    f[0] = -u[0] + u[1];
    f[1] = -10.0 * u[1];
  };
  m.jacobian = [](std::span<const double>, double, Eigen::MatrixXd& j) {
    j.resize(2, 2);
    j << -1.0, 1.0, 0.0, -10.0;
  };
  m.initial = {1.0, 1.0};
  m.horizon = 1.0;
  m.exact = [](double t, std::span<const double> u0) {
    const double c = u0[1] / 9.0;
    return std::vector<double>{(u0[0] + c) * std::exp(-t) - c * std::exp(-10.0 * t), u0[1] * std::exp(-10.0 * t)};
  };
  m.step_ratios = {1.0, 0.1};
  return m;
}

inline Model harmonic() {
  Model m;
  m.name = "harmonic";
  m.description = "x' = v, v' = -x";
  m.dimension = 2;
  m.rhs = [](std::span<const double> u, double, std::span<double> f) {
    f[0] = u[1];
    f[1] = -u[0];
  };
  m.jacobian = [](std::span<const double>, double, Eigen::MatrixXd& j) {
    j.resize(2, 2);
    j << 0.0, 1.0, -1.0, 0.0;
  };
  m.initial = {1.0, 0.0};
  m.horizon = 10.0;
  m.exact = [](double t, std::span<const double> u0) {
    const double c = std::cos(t), s = std::sin(t);
    return std::vector<double>{u0[0] * c + u0[1] * s, -u0[0] * s + u0[1] * c};
  };
  m.invariant = [](std::span<const double> u) { return 0.5 * (u[0] * u[0] + u[1] * u[1]); };
  m.step_ratios = {1.0, 1.0};
  m.pairs = {{0, 1}};
  return m;
}

/// Two planets on independent orbits around a fixed unit mass: an inner
/// eccentric orbit (a = 1, e = 0.5) and an outer one (a = 4, e = 0.5) with
/// eight times the period. Layout (x, y, vx, vy) per planet.
inline Model kepler_2body() {
  Model m;
  m.name = "kepler_2body";
  m.description = "two planets around a fixed sun, periods 2pi and 16pi, e = 0.5";
  m.dimension = 8;
  m.rhs = [](std::span<const double> u, double, std::span<double> f) {
    for (std::size_t p = 0; p < 8; p += 4) {
      const double r = std::hypot(u[p], u[p + 1]);
      const double r3 = r * r * r;
      f[p] = u[p + 2];
      f[p + 1] = u[p + 3];
      f[p + 2] = -u[p] / r3;
      f[p + 3] = -u[p + 1] / r3;
    }
  };
  m.jacobian = [](std::span<const double> u, double, Eigen::MatrixXd& j) {
    j = Eigen::MatrixXd::Zero(8, 8);
    for (Eigen::Index p = 0; p < 8; p += 4) {
      const double x = u[p], y = u[p + 1];
      const double r2 = x * x + y * y;
      const double r = std::sqrt(r2);
      const double r3 = r2 * r, r5 = r3 * r2;
      j(p, p + 2) = 1.0;
      j(p + 1, p + 3) = 1.0;
      j(p + 2, p) = -1.0 / r3 + 3.0 * x * x / r5;
      j(p + 2, p + 1) = 3.0 * x * y / r5;
      j(p + 3, p) = 3.0 * x * y / r5;
      j(p + 3, p + 1) = -1.0 / r3 + 3.0 * y * y / r5;
    }
  };
  m.initial = perihelion(1.0, 0.5);
  const auto outer = perihelion(4.0, 0.5);
  m.initial.insert(m.initial.end(), outer.begin(), outer.end());
  m.horizon = 10.0;
  m.exact = [](double t, std::span<const double> u0) {
    auto a = kepler_propagate(u0.subspan(0, 4), t);
    const auto b = kepler_propagate(u0.subspan(4, 4), t);
    a.insert(a.end(), b.begin(), b.end());
    return a;
  };
  m.invariant = [](std::span<const double> u) {
    double e = 0.0;
    for (std::size_t p = 0; p < 8; p += 4) {
      e += 0.5 * (u[p + 2] * u[p + 2] + u[p + 3] * u[p + 3]) - 1.0 / std::hypot(u[p], u[p + 1]);
    }
    return e;
  };
  m.step_ratios = {1.0, 1.0, 1.0, 1.0, 4.0, 4.0, 4.0, 4.0};
  m.pairs = {{0, 2}, {1, 3}, {4, 6}, {5, 7}};
  return m;
}

inline Model lorenz(double sigma = 10.0, double rho = 28.0, double beta = 8.0 / 3.0) {
  Model m;
  m.name = "lorenz";
  m.description = "Lorenz system, (sigma, rho, beta) = (10, 28, 8/3)";
  m.dimension = 3;
  m.rhs = [=](std::span<const double> u, double, std::span<double> f) {
    f[0] = sigma * (u[1] - u[0]);
    f[1] = u[0] * (rho - u[2]) - u[1];
    f[2] = u[0] * u[1] - beta * u[2];
  };
  m.jacobian = [=](std::span<const double> u, double, Eigen::MatrixXd& j) {
    j.resize(3, 3);
    j << -sigma, sigma, 0.0, rho - u[2], -1.0, -u[0], u[1], u[0], -beta;
  };
  m.initial = {1.0, 0.0, 0.0};
  m.horizon = 1.0;
  m.step_ratios = {1.0, 1.0, 1.0};
  return m;
}

/// f = −∇V with the convex potential
/// V(u) = Σ a_i u_i²/2 + Σ log cosh(u_i − u_{i+1}) + u_0⁴/4, a = (1, 10, 40).
inline Model monotone_gradient() {
  static constexpr double a[3] = {1.0, 10.0, 40.0};
  Model m;
  m.name = "monotone_gradient";
  m.description = "gradient flow of a convex potential, rates 1, 10, 40";
  m.dimension = 3;
  m.rhs = [](std::span<const double> u, double, std::span<double> f) {
    for (std::size_t i = 0; i < 3; ++i) {
      f[i] = -a[i] * u[i];
    }
    f[0] -= u[0] * u[0] * u[0];
    for (std::size_t i = 0; i + 1 < 3; ++i) {
      const double th = std::tanh(u[i] - u[i + 1]);
      f[i] -= th;
      f[i + 1] += th;
    }
  };
  m.jacobian = [](std::span<const double> u, double, Eigen::MatrixXd& j) {
    j = Eigen::MatrixXd::Zero(3, 3);
    for (Eigen::Index i = 0; i < 3; ++i) {
      j(i, i) = -a[i];
    }
    j(0, 0) -= 3.0 * u[0] * u[0];
    for (Eigen::Index i = 0; i + 1 < 3; ++i) {
      const double th = std::tanh(u[i] - u[i + 1]);
      const double s = 1.0 - th * th;
      j(i, i) -= s;
      j(i, i + 1) += s;
      j(i + 1, i) += s;
      j(i + 1, i + 1) -= s;
    }
  };
  m.initial = {1.0, -0.5, 2.0};
  m.horizon = 2.0;
  m.step_ratios = {1.0, 0.2, 0.05};
  return m;
}

}  // namespace models

inline std::vector<std::string> model_names() {
  return {"linear_decay", "linear_system", "harmonic", "kepler_2body", "lorenz", "monotone_gradient"};
}

inline Model model(const std::string& name) {
  if (name == "linear_decay") {
    return models::linear_decay();
  }
  if (name == "linear_system") {
    return models::linear_system();
  }
  if (name == "harmonic") {
    return models::harmonic();
  }
  if (name == "kepler_2body") {
    return models::kepler_2body();
  }
  if (name == "lorenz") {
    return models::lorenz();
  }
  if (name == "monotone_gradient") {
    return models::monotone_gradient();
  }
  throw std::invalid_argument("unknown model '" + name + "'");
}

}  // namespace mag
