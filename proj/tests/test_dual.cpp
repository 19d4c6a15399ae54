#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <memory>
#include <vector>

#include "mag/dual.hpp"

namespace {

using mag::Method;

mag::OdeProblem linear(const Eigen::MatrixXd& a, std::vector<double> u0, double horizon, bool with_jacobian = true) {
  auto f = [a](std::span<const double> u, double, std::span<double> out) {
    Eigen::Map<const Eigen::VectorXd> x(u.data(), static_cast<Eigen::Index>(u.size()));
    Eigen::Map<Eigen::VectorXd>(out.data(), static_cast<Eigen::Index>(out.size())) = a * x;
  };
  mag::JacobianFn jac;
  if (with_jacobian) {
    jac = [a](std::span<const double>, double, Eigen::MatrixXd& j) { j = a; };
  }
  return mag::make_problem(f, std::move(u0), horizon, Method::mcG, jac);
}

mag::OdeProblem quadratic() {
  auto f = [](std::span<const double> u, double, std::span<double> out) {
    out[0] = u[0] * u[0] - u[1];
    out[1] = u[0] * u[1];
  };
  auto jac = [](std::span<const double> u, double, Eigen::MatrixXd& j) {
    j.resize(2, 2);
    j << 2 * u[0], -1.0, u[1], u[0];
  };
  return mag::make_problem(f, {0.0, 0.0}, 1.0, Method::mcG, jac);
}

TEST(Jstar, LinearIsTransposedMatrix) {
  Eigen::MatrixXd a(2, 2);
  a << -1.0, 2.0, 0.5, -3.0;
  const auto p = linear(a, {0, 0}, 1.0);
  const std::vector<double> v1{1.0, 2.0}, v2{-0.3, 0.7};
  for (int s = 1; s <= 4; ++s) {
    EXPECT_TRUE(mag::jstar(v1, v2, 0.2, p, s).isApprox(a.transpose(), 1e-15));
  }
  const auto fd = linear(a, {0, 0}, 1.0, false);
  EXPECT_TRUE(mag::jstar(v1, v2, 0.2, fd, 2).isApprox(a.transpose(), 1e-8));
}

TEST(Jstar, MeanValueIdentityForQuadratic) {
  const auto p = quadratic();
  const std::vector<double> v1{0.8, -1.1}, v2{-0.4, 0.3};
  const Eigen::MatrixXd js = mag::jstar(v1, v2, 0.0, p, 2);
  std::vector<double> f1(2), f2(2);
  p.rhs(v1, 0.0, mag::Side::left, f1);
  p.rhs(v2, 0.0, mag::Side::left, f2);
  const Eigen::Vector2d d(v1[0] - v2[0], v1[1] - v2[1]);
  const Eigen::Vector2d lhs = js.transpose() * d;
  EXPECT_NEAR(lhs(0), f1[0] - f2[0], 1e-14);
  EXPECT_NEAR(lhs(1), f1[1] - f2[1], 1e-14);
}

TEST(Jstar, DegenerateSegment) {
  const auto p = quadratic();
  const std::vector<double> v{0.5, 2.0};
  Eigen::MatrixXd j;
  p.jacobian(v, 0.0, j);
  EXPECT_TRUE(mag::jstar(v, v, 0.0, p, 3).isApprox(j.transpose()));
  EXPECT_THROW(mag::jstar(v, v, 0.0, p, 0), std::invalid_argument);
}

std::shared_ptr<const mag::Trajectory> primal_of(const mag::OdeProblem& p, double k, int q) {
  const auto part = mag::uniform_partition(p.dimension, k, q, p.horizon, p.methods);
  return std::make_shared<const mag::Trajectory>(mag::solve(p, part).trajectory);
}

TEST(Dual, ScalarDecayAdjoint) {
  Eigen::MatrixXd a(1, 1);
  a << -1.0;
  const auto p = linear(a, {1.0}, 2.0);
  mag::DualSpec spec{p, primal_of(p, 0.1, 1), nullptr, {1.0}, {}, 2};
  const auto dual = mag::solve_dual(spec);
  for (double t : {0.0, 0.5, 1.3, 2.0}) {
    EXPECT_NEAR(dual.value(0, t), std::exp(-(2.0 - t)), 1e-6);
    EXPECT_NEAR(dual.derivative(0, t, 1), std::exp(-(2.0 - t)), 2e-3);
  }
  EXPECT_EQ(dual.max_order(), 2);
}

TEST(Dual, MatrixExponentialOracle) {
  Eigen::MatrixXd a(2, 2);
  a << -1.0, 2.0, -0.5, -0.3;
  const auto p = linear(a, {1.0, 0.0}, 1.5);
  const std::vector<double> phi_t{0.6, -0.8};
  mag::DualSpec spec{p, primal_of(p, 0.05, 2), nullptr, phi_t, {}, 2};
  const auto dual = mag::solve_dual(spec);
  const Eigen::Vector2d expected = (a.transpose() * 1.5).exp() * Eigen::Vector2d(phi_t[0], phi_t[1]);
  EXPECT_NEAR(dual.value(0, 0.0), expected(0), 1e-10);
  EXPECT_NEAR(dual.value(1, 0.0), expected(1), 1e-10);
}

TEST(Dual, ZeroProblemKeepsTerminalData) {
  auto p = mag::make_problem([](std::span<const double>, double, std::span<double> f) { f[0] = f[1] = 0.0; },
                             {1.0, 2.0}, 1.0, Method::mdG);
  mag::DualSpec spec{p, primal_of(p, 0.25, 0), nullptr, {3.0, -1.0}, {}, 1};
  const auto dual = mag::solve_dual(spec);
  for (double t : {0.0, 0.3, 0.75, 1.0}) {
    EXPECT_NEAR(dual.value(0, t), 3.0, 1e-14);
    EXPECT_NEAR(dual.value(1, t), -1.0, 1e-14);
  }
}

TEST(Dual, ForcingTerm) {
  Eigen::MatrixXd a(1, 1);
  a << -1.0;
  const auto p = linear(a, {1.0}, 1.0);
  mag::DualSpec spec{p, primal_of(p, 0.1, 1), nullptr, {0.0}, [](double, std::span<double> g) { g[0] = 1.0; }, 2};
  const auto dual = mag::solve_dual(spec);
  for (double t : {0.0, 0.4, 0.9}) {
    EXPECT_NEAR(dual.value(0, t), 1.0 - std::exp(-(1.0 - t)), 1e-6);
  }
}

TEST(Dual, NonlinearUsesPrimalLinearization) {
  // u' = -u^2, u(0) = 1: u = 1/(1+t), J = -2u. Adjoint: φ(t) = u(T)^2/u(t)^2 φ_T.
  auto p = mag::make_problem([](std::span<const double> u, double, std::span<double> f) { f[0] = -u[0] * u[0]; },
                             {1.0}, 1.0, Method::mcG);
  mag::DualSpec spec{p, primal_of(p, 0.02, 2), nullptr, {1.0}, {}, 2};
  const auto dual = mag::solve_dual(spec);
  for (double t : {0.0, 0.5}) {
    const double ratio = (1.0 + t) / 2.0;
    EXPECT_NEAR(dual.value(0, t), ratio * ratio, 1e-6);
  }
}

TEST(Dual, ReversalRoundTrip) {
  std::vector<mag::StepSpec> steps{std::vector<double>{0.1, 0.3, 0.6}, 0.25};
  std::vector<mag::OrderSpec> orders{std::vector<int>{1, 2, 3}, 2};
  std::vector<Method> m{Method::mcG, Method::mcG};
  const auto p = mag::build_partition(steps, orders, 1.0, m);
  const auto r = mag::reverse_partition(p);
  EXPECT_EQ(r.grid(0).orders, (std::vector<int>{3, 2, 1}));
  EXPECT_NEAR(r.grid(0).breakpoints[1], 0.6, 1e-15);
  const auto rr = mag::reverse_partition(r);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(rr.grid(i).orders, p.grid(i).orders);
    ASSERT_EQ(rr.grid(i).breakpoints.size(), p.grid(i).breakpoints.size());
    for (std::size_t j = 0; j < p.grid(i).breakpoints.size(); ++j) {
      EXPECT_NEAR(rr.grid(i).breakpoints[j], p.grid(i).breakpoints[j], 1e-15);
    }
  }
  const auto d = mag::default_dual_partition(p);
  EXPECT_EQ(d.grid(0).orders, (std::vector<int>{2, 3, 4}));
}

TEST(Dual, RejectsBadSpec) {
  Eigen::MatrixXd a(1, 1);
  a << -1.0;
  const auto p = linear(a, {1.0}, 1.0);
  mag::DualSpec spec{p, primal_of(p, 0.1, 1), nullptr, {1.0, 2.0}, {}, 2};
  EXPECT_THROW(mag::solve_dual(spec), std::invalid_argument);
  spec.terminal = {std::nan("")};
  EXPECT_THROW(mag::solve_dual(spec), std::invalid_argument);
}

}  // namespace
