#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "mag/polynomial.hpp"

namespace mag {

/// Highest polynomial order supported in double precision.
inline constexpr int max_order = 12;

enum class Method { mcG, mdG };

inline std::string_view to_string(Method m) { return m == Method::mcG ? "mcG" : "mdG"; }

inline Method method_from_string(std::string_view s) {
  if (s == "mcG" || s == "mcg" || s == "cG" || s == "cg") {
    return Method::mcG;
  }
  if (s == "mdG" || s == "mdg" || s == "dG" || s == "dg") {
    return Method::mdG;
  }
  throw std::invalid_argument("unknown method '" + std::string(s) + "' (expected mcG or mdG)");
}

inline int min_order(Method m) { return m == Method::mcG ? 1 : 0; }

enum class NodeKind { Lobatto, Radau };

/// Quadrature/collocation nodes on [0, 1].
struct NodeSet {
  int order = 0;
  std::vector<double> nodes;
  NodeKind kind = NodeKind::Lobatto;
};

/// xP_q(x) - P_{q-1}(x), whose zeros on [-1, 1] are the Lobatto points.
inline double lobatto_polynomial(int q, double x) {
  return x * legendre_eval(q, x) - legendre_eval(q - 1, x);
}

/// P_q(x) + P_{q+1}(x), whose zeros on [-1, 1] are the (left) Radau points.
inline double radau_polynomial(int q, double x) { return legendre_eval(q, x) + legendre_eval(q + 1, x); }

/// The q+1 Lobatto points mapped to [0, 1]; both end-points included.
inline NodeSet lobatto_nodes(int q) {
  if (q < 1 || q > max_order) {
    throw std::invalid_argument("lobatto_nodes: order " + std::to_string(q) + " outside [1, " +
                                std::to_string(max_order) + "]");
  }
  auto f = [q](double x) {
    const auto a = legendre(q, x);
    const auto b = legendre(q - 1, x);
    return std::pair{x * a.p - b.p, a.p + x * a.dp - b.dp};
  };
  const auto interior = bracketed_roots(f, -1.0, 1.0, static_cast<std::size_t>(32 * (q + 1)));
  if (static_cast<int>(interior.size()) != q - 1) {
    throw std::logic_error("lobatto_nodes: found " + std::to_string(interior.size() + 2) + " roots, expected " +
                           std::to_string(q + 1));
  }
  NodeSet set{q, {}, NodeKind::Lobatto};
  set.nodes.push_back(0.0);
  for (double x : interior) {
    if (std::abs(lobatto_polynomial(q, x)) >= 1e-13) {
      throw std::logic_error("lobatto_nodes: root residual too large");
    }
    set.nodes.push_back(0.5 * (1.0 + x));
  }
  set.nodes.push_back(1.0);
  return set;
}

/// The q+1 Radau points with time reversed so that the right end-point 1 is a node.
inline NodeSet radau_nodes(int q) {
  if (q < 0 || q > max_order) {
    throw std::invalid_argument("radau_nodes: order " + std::to_string(q) + " outside [0, " +
                                std::to_string(max_order) + "]");
  }
  auto f = [q](double x) {
    const auto a = legendre(q, x);
    const auto b = legendre(q + 1, x);
    return std::pair{a.p + b.p, a.dp + b.dp};
  };
  const auto interior = bracketed_roots(f, -1.0, 1.0, static_cast<std::size_t>(32 * (q + 2)));
  if (static_cast<int>(interior.size()) != q) {
    throw std::logic_error("radau_nodes: found " + std::to_string(interior.size() + 1) + " roots, expected " +
                           std::to_string(q + 1));
  }
  NodeSet set{q, {}, NodeKind::Radau};
  for (auto it = interior.rbegin(); it != interior.rend(); ++it) {
    if (std::abs(radau_polynomial(q, *it)) >= 1e-13) {
      throw std::logic_error("radau_nodes: root residual too large");
    }
    set.nodes.push_back(0.5 * (1.0 - *it));
  }
  set.nodes.push_back(1.0);
  return set;
}

inline LagrangeBasis lagrange_basis(const NodeSet& nodes) { return LagrangeBasis(nodes.nodes); }

/// Composite form of a tableau's nodal rule on 2^depth equal sub-intervals.
///
/// Entry p is evaluated at reference point `points[p]`; row r of the scheme
/// uses weight `row_weights[r][p]` and the plain integral uses `weights[p]`.
/// All weights already include the 1/2^depth sub-interval length.
struct QuadraturePlan {
  int depth = 0;
  std::vector<double> points;
  std::vector<bool> at_left_end;
  std::vector<double> weights;
  std::vector<std::vector<double>> row_weights;
};

/// Discrete scheme data for mcG(q) or mdG(q) on the reference interval [0, 1].
///
/// Rows of `quad_weights` correspond to the solved degrees of freedom
/// (m = 1..q for mcG, m = 0..q for mdG); columns to the quadrature nodes.
/// The scheme reads ξ_m = ξ_0(^-) + k Σ_n quad_weights(r, n) f(t_n).
struct MethodTableau {
  Method method = Method::mcG;
  int order = 0;
  NodeSet nodes;
  LagrangeBasis trial;
  LagrangeBasis test;
  Eigen::MatrixXd amat;
  Eigen::MatrixXd amat_inv;
  /// a_{m0} (mcG) or λ_n(0) (mdG): the coupling to the incoming value.
  Eigen::VectorXd incoming;
  /// Rows: weight functions w_m expressed in the test basis.
  Eigen::MatrixXd weight_fns;
  /// ∫_0^1 λ_n ds, the plain nodal quadrature weights.
  std::vector<double> rule_weights;
  Eigen::MatrixXd quad_weights;

  [[nodiscard]] int first_solved() const { return method == Method::mcG ? 1 : 0; }
  [[nodiscard]] int rows() const { return static_cast<int>(quad_weights.rows()); }
  [[nodiscard]] int node_count() const { return order + 1; }

  /// w_m(s) for solved row r (m = r + first_solved()).
  [[nodiscard]] double weight_function(int r, double s) const {
    std::vector<double> coeff(weight_fns.cols());
    for (int c = 0; c < weight_fns.cols(); ++c) {
      coeff[c] = weight_fns(r, c);
    }
    return test.interpolate(coeff, s);
  }

  [[nodiscard]] QuadraturePlan plan(int depth) const {
    if (depth < 0 || depth > 16) {
      throw std::invalid_argument("quadrature depth must lie in [0, 16]");
    }
    QuadraturePlan p;
    p.depth = depth;
    const int pieces = 1 << depth;
    p.row_weights.resize(rows());
    for (int piece = 0; piece < pieces; ++piece) {
      for (int n = 0; n <= order; ++n) {
        const double s = (piece + nodes.nodes[n]) / pieces;
        p.points.push_back(s);
        p.at_left_end.push_back(piece == 0 && nodes.nodes[n] == 0.0);
        const double w = rule_weights[n] / pieces;
        p.weights.push_back(w);
        for (int r = 0; r < rows(); ++r) {
          p.row_weights[r].push_back(depth == 0 ? quad_weights(r, n) : w * weight_function(r, s));
        }
      }
    }
    return p;
  }
};

namespace detail {

inline std::vector<double> unit_gauss_nodes(int n) {
  const auto& g = gauss_legendre(n);
  std::vector<double> s(n);
  for (int k = 0; k < n; ++k) {
    s[k] = 0.5 * (1.0 + g.nodes[k]);
  }
  return s;
}

inline void fold_quadrature(MethodTableau& t) {
  const int nn = t.order + 1;
  t.rule_weights.resize(nn);
  for (int n = 0; n < nn; ++n) {
    t.rule_weights[n] = integrate([&](double s) { return t.trial.eval(n, s); }, 0.0, 1.0, nn + 1);
  }
  const int rows = static_cast<int>(t.weight_fns.rows());
  t.quad_weights.resize(rows, nn);
  for (int r = 0; r < rows; ++r) {
    for (int n = 0; n < nn; ++n) {
      t.quad_weights(r, n) = t.rule_weights[n] * t.weight_function(r, t.nodes.nodes[n]);
    }
  }
}

}  // namespace detail

/// mcG(q): Lobatto nodes, test space P^{q-1}, A(m, n) = ∫ λ_n' μ_{m-1} for m, n = 1..q.
inline MethodTableau build_mcg_tableau(int q) {
  if (q < 1 || q > max_order) {
    throw std::invalid_argument("build_mcg_tableau: order " + std::to_string(q) + " outside [1, " +
                                std::to_string(max_order) + "]");
  }
  MethodTableau t;
  t.method = Method::mcG;
  t.order = q;
  t.nodes = lobatto_nodes(q);
  t.trial = LagrangeBasis(t.nodes.nodes);
  // Any basis of P^{q-1} yields the same weight functions; Gauss points keep it well conditioned.
  t.test = LagrangeBasis(detail::unit_gauss_nodes(q));

  Eigen::MatrixXd full(q, q + 1);
  for (int m = 0; m < q; ++m) {
    for (int n = 0; n <= q; ++n) {
      full(m, n) = integrate([&](double s) { return t.trial.eval_derivative(n, s) * t.test.eval(m, s); }, 0.0, 1.0,
                             q + 1);
    }
  }
  t.amat = full.rightCols(q);
  t.incoming = full.col(0);
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(t.amat);
  if (!(std::abs(lu.determinant()) > 1e-300)) {
    throw std::logic_error("build_mcg_tableau: singular coefficient matrix");
  }
  t.amat_inv = lu.inverse();
  const Eigen::VectorXd identity = t.amat_inv * t.incoming;
  for (int m = 0; m < q; ++m) {
    if (std::abs(identity(m) + 1.0) > 1e-12) {
      throw std::logic_error("build_mcg_tableau: constant-preservation identity violated");
    }
  }
  t.weight_fns = t.amat_inv;
  detail::fold_quadrature(t);
  return t;
}

/// mdG(q): Radau nodes, A(m, n) = ∫ λ_n' λ_m + λ_n(0) λ_m(0) for m, n = 0..q.
inline MethodTableau build_mdg_tableau(int q) {
  if (q < 0 || q > max_order) {
    throw std::invalid_argument("build_mdg_tableau: order " + std::to_string(q) + " outside [0, " +
                                std::to_string(max_order) + "]");
  }
  MethodTableau t;
  t.method = Method::mdG;
  t.order = q;
  t.nodes = radau_nodes(q);
  t.trial = LagrangeBasis(t.nodes.nodes);
  t.test = t.trial;

  const int nn = q + 1;
  t.incoming.resize(nn);
  for (int n = 0; n < nn; ++n) {
    t.incoming(n) = t.trial.eval(n, 0.0);
  }
  t.amat.resize(nn, nn);
  for (int m = 0; m < nn; ++m) {
    for (int n = 0; n < nn; ++n) {
      t.amat(m, n) = integrate([&](double s) { return t.trial.eval_derivative(n, s) * t.trial.eval(m, s); }, 0.0,
                               1.0, q + 2) +
                     t.incoming(n) * t.incoming(m);
    }
  }
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(t.amat);
  if (!(std::abs(lu.determinant()) > 1e-300)) {
    throw std::logic_error("build_mdg_tableau: singular coefficient matrix");
  }
  t.amat_inv = lu.inverse();
  const Eigen::VectorXd identity = t.amat_inv * t.incoming;
  for (int m = 0; m < nn; ++m) {
    if (std::abs(identity(m) - 1.0) > 1e-12) {
      throw std::logic_error("build_mdg_tableau: constant-preservation identity violated");
    }
  }
  t.weight_fns = t.amat_inv;
  detail::fold_quadrature(t);
  return t;
}

inline MethodTableau build_tableau(Method method, int q) {
  return method == Method::mcG ? build_mcg_tableau(q) : build_mdg_tableau(q);
}

/// Shared immutable tableau for (method, q), built on first use.
inline const MethodTableau& tableau(Method method, int q) {
  if (q < min_order(method) || q > max_order) {
    throw std::invalid_argument(std::string(to_string(method)) + " order " + std::to_string(q) + " outside [" +
                                std::to_string(min_order(method)) + ", " + std::to_string(max_order) + "]");
  }
  static std::mutex mutex;
  static std::array<std::array<std::unique_ptr<const MethodTableau>, max_order + 1>, 2> cache;
  std::lock_guard lock(mutex);
  auto& slot = cache[method == Method::mcG ? 0 : 1][q];
  if (!slot) {
    slot = std::make_unique<const MethodTableau>(build_tableau(method, q));
  }
  return *slot;
}

}  // namespace mag
