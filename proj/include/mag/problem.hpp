#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mag/partition.hpp"
#include "mag/tableau.hpp"

namespace mag {

/// f(u, t) written into `out`. The side tells which one-sided limit the
/// caller used for u at t; ordinary problems ignore it.
using RhsFn = std::function<void(std::span<const double> u, double t, Side side, std::span<double> out)>;

/// ∂f/∂u(u, t), an N×N matrix.
using JacobianFn = std::function<void(std::span<const double> u, double t, Eigen::MatrixXd& out)>;

/// Side-free right-hand side, the common case.
using SimpleRhsFn = std::function<void(std::span<const double> u, double t, std::span<double> out)>;

/// u' = f(u, t) on (0, T], u(0) = u_0, with a method tag per component.
struct OdeProblem {
  std::size_t dimension = 0;
  RhsFn rhs;
  JacobianFn jacobian;  // may be empty
  std::vector<double> initial_state;
  double horizon = 1.0;
  std::vector<Method> methods;

  void validate() const {
    if (dimension == 0) {
      throw std::invalid_argument("problem: dimension must be positive");
    }
    if (!rhs) {
      throw std::invalid_argument("problem: missing right-hand side");
    }
    if (initial_state.size() != dimension) {
      throw std::invalid_argument("problem: initial state has " + std::to_string(initial_state.size()) +
                                  " entries, expected " + std::to_string(dimension));
    }
    if (methods.size() != dimension) {
      throw std::invalid_argument("problem: need one method per component");
    }
    if (!(horizon > 0.0)) {
      throw std::invalid_argument("problem: horizon must be positive");
    }
  }
};

inline RhsFn sideless(SimpleRhsFn f) {
  return [f = std::move(f)](std::span<const double> u, double t, Side, std::span<double> out) { f(u, t, out); };
}

inline OdeProblem make_problem(SimpleRhsFn f, std::vector<double> u0, double horizon, std::vector<Method> methods,
                               JacobianFn jac = {}) {
  OdeProblem p;
  p.dimension = u0.size();
  p.rhs = sideless(std::move(f));
  p.jacobian = std::move(jac);
  p.initial_state = std::move(u0);
  p.horizon = horizon;
  p.methods = std::move(methods);
  if (p.methods.size() == 1 && p.dimension > 1) {
    p.methods.assign(p.dimension, p.methods.front());
  }
  p.validate();
  return p;
}

/// Same method for every component.
inline OdeProblem make_problem(SimpleRhsFn f, std::vector<double> u0, double horizon, Method method,
                               JacobianFn jac = {}) {
  std::vector<Method> m(u0.size(), method);
  return make_problem(std::move(f), std::move(u0), horizon, std::move(m), std::move(jac));
}

}  // namespace mag
