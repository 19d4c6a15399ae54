#pragma once

// Test-only oracle: solves the local Galerkin problem on [0, k] directly in a
// monomial basis, for a right-hand side that depends on t only. Independent of
// the nodal tableau machinery.

#include <Eigen/Dense>

#include <cmath>
#include <functional>

#include "mag/tableau.hpp"

namespace mag::testing {

/// Returns U as a function of the reference coordinate s in [0, 1].
/// `f` is a function of s as well (f(t) with t = k s).
inline std::function<double(double)> weak_form_solve(Method method, int q, double incoming, double k,
                                                     const std::function<double(double)>& f) {
  // U(s) = Σ_p c_p s^p ; derivative w.r.t. t is U'(s)/k.
  const int n = q + 1;
  auto integral = [](auto g) {
    // 40-point Gauss on [0, 1] is exact far beyond the degrees used here.
    return mag::integrate(g, 0.0, 1.0, 40);
  };
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
  int row = 0;
  if (method == Method::mcG) {
    // U(0) = incoming
    a(0, 0) = 1.0;
    b(0) = incoming;
    row = 1;
    // test functions s^m, m = 0..q-1: ∫ U' v ds = k ∫ f v ds
    for (int m = 0; m < q; ++m, ++row) {
      for (int p = 1; p <= q; ++p) {
        a(row, p) = integral([&](double s) { return p * std::pow(s, p - 1) * std::pow(s, m); });
      }
      b(row) = k * integral([&](double s) { return f(s) * std::pow(s, m); });
    }
  } else {
    // test functions s^m, m = 0..q: (U(0) - incoming) v(0) + ∫ U' v ds = k ∫ f v ds
    for (int m = 0; m <= q; ++m, ++row) {
      const double v0 = m == 0 ? 1.0 : 0.0;
      a(row, 0) += v0;
      for (int p = 1; p <= q; ++p) {
        a(row, p) += integral([&](double s) { return p * std::pow(s, p - 1) * std::pow(s, m); });
      }
      b(row) = k * integral([&](double s) { return f(s) * std::pow(s, m); }) + incoming * v0;
    }
  }
  const Eigen::VectorXd c = a.fullPivLu().solve(b);
  return [c](double s) {
    double v = 0.0;
    for (int p = static_cast<int>(c.size()) - 1; p >= 0; --p) {
      v = v * s + c(p);
    }
    return v;
  };
}

}  // namespace mag::testing
