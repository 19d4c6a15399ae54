#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

namespace mag {

/// Value of the Legendre polynomial P_q and its first two derivatives.
struct LegendreValue {
  double p = 1.0;
  double dp = 0.0;
  double ddp = 0.0;
};

/// P_q(x), P_q'(x), P_q''(x) by the three-term recurrence
/// (n+1) P_{n+1} = (2n+1) x P_n - n P_{n-1} and P'_{n+1} = P'_{n-1} + (2n+1) P_n.
inline LegendreValue legendre(int q, double x) {
  if (q < 0) {
    throw std::invalid_argument("legendre: order must be nonnegative");
  }
  if (q == 0) {
    return {1.0, 0.0, 0.0};
  }
  double p0 = 1.0, d0 = 0.0, dd0 = 0.0;
  double p1 = x, d1 = 1.0, dd1 = 0.0;
  for (int n = 1; n < q; ++n) {
    const double p2 = ((2.0 * n + 1.0) * x * p1 - n * p0) / (n + 1.0);
    const double d2 = d0 + (2.0 * n + 1.0) * p1;
    const double dd2 = dd0 + (2.0 * n + 1.0) * d1;
    p0 = p1, d0 = d1, dd0 = dd1;
    p1 = p2, d1 = d2, dd1 = dd2;
  }
  return {p1, d1, dd1};
}

inline double legendre_eval(int q, double x) { return legendre(q, x).p; }

namespace detail {

// Safeguarded Newton inside a sign-change bracket [a, b].
template <class F>
double polish_root(F& f, double a, double b, double fa) {
  double x = 0.5 * (a + b);
  for (int it = 0; it < 200; ++it) {
    const auto [v, d] = f(x);
    if (v == 0.0) {
      return x;
    }
    if ((v < 0.0) == (fa < 0.0)) {
      a = x;
      fa = v;
    } else {
      b = x;
    }
    double next = (d != 0.0) ? x - v / d : 0.5 * (a + b);
    if (!(next > a && next < b)) {
      next = 0.5 * (a + b);
    }
    if (std::abs(next - x) <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(x))) {
      return next;
    }
    x = next;
  }
  return x;
}

}  // namespace detail

/// Simple roots of f on the open interval (lo, hi).
///
/// The interval is scanned on a Chebyshev-distributed grid of `samples` points
/// (dense near the ends, where roots of orthogonal polynomials cluster); every
/// sign change is polished by Newton's method with a bisection fallback.
/// `f(x)` returns the pair (value, derivative).
template <class F>
std::vector<double> bracketed_roots(F&& f, double lo, double hi, std::size_t samples) {
  std::vector<double> roots;
  const double mid = 0.5 * (lo + hi);
  const double half = 0.5 * (hi - lo);
  double prev_x = 0.0, prev_v = 0.0;
  bool have_prev = false;
  for (std::size_t k = 1; k < samples; ++k) {
    const double x = mid - half * std::cos(std::numbers::pi * static_cast<double>(k) / static_cast<double>(samples));
    const double v = f(x).first;
    if (v == 0.0) {
      roots.push_back(x);
      have_prev = false;
      continue;
    }
    if (have_prev && ((v < 0.0) != (prev_v < 0.0))) {
      roots.push_back(detail::polish_root(f, prev_x, x, prev_v));
    }
    prev_x = x;
    prev_v = v;
    have_prev = true;
  }
  return roots;
}

/// Gauss–Legendre rule on [-1, 1].
struct GaussRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

namespace detail {

inline GaussRule compute_gauss_rule(int n) {
  GaussRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  for (int i = 0; i < n; ++i) {
    double x = -std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    for (int it = 0; it < 100; ++it) {
      const auto v = legendre(n, x);
      const double dx = v.p / v.dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) {
        break;
      }
    }
    const auto v = legendre(n, x);
    rule.nodes[i] = x;
    rule.weights[i] = 2.0 / ((1.0 - x * x) * v.dp * v.dp);
  }
  return rule;
}

}  // namespace detail

/// n-point Gauss–Legendre rule (cached; exact for polynomials of degree 2n-1).
inline const GaussRule& gauss_legendre(int n) {
  if (n < 1) {
    throw std::invalid_argument("gauss_legendre: need at least one point");
  }
  static std::mutex mutex;
  static std::map<int, std::unique_ptr<const GaussRule>> cache;
  std::lock_guard lock(mutex);
  auto& slot = cache[n];
  if (!slot) {
    slot = std::make_unique<const GaussRule>(detail::compute_gauss_rule(n));
  }
  return *slot;
}

/// Integrate f over [a, b] with an n-point Gauss–Legendre rule.
template <class F>
double integrate(F&& f, double a, double b, int n) {
  const auto& rule = gauss_legendre(n);
  const double half = 0.5 * (b - a);
  const double mid = 0.5 * (a + b);
  double sum = 0.0;
  for (int k = 0; k < n; ++k) {
    sum += rule.weights[k] * f(mid + half * rule.nodes[k]);
  }
  return half * sum;
}

/// Integrate |f| over [a, b]. Sign changes of f are located on a sampling grid,
/// refined by bisection, and each sign-definite piece is integrated with an
/// n-point Gauss–Legendre rule.
template <class F>
double integrate_abs(F&& f, double a, double b, int n) {
  if (!(b > a)) {
    return 0.0;
  }
  const int samples = 2 * n + 2;
  std::vector<double> cuts{a};
  double prev_x = a;
  double prev_v = f(a + 1e-9 * (b - a));
  for (int k = 1; k <= samples; ++k) {
    const double x = (k == samples) ? b - 1e-9 * (b - a) : a + (b - a) * k / samples;
    const double v = f(x);
    if ((v < 0.0 && prev_v > 0.0) || (v > 0.0 && prev_v < 0.0)) {
      double lo = prev_x, hi = x, flo = prev_v;
      for (int it = 0; it < 80 && hi - lo > 1e-15 * (b - a); ++it) {
        const double m = 0.5 * (lo + hi);
        const double fm = f(m);
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
  cuts.push_back(b);
  double total = 0.0;
  for (std::size_t p = 0; p + 1 < cuts.size(); ++p) {
    total += std::abs(integrate(f, cuts[p], cuts[p + 1], n));
  }
  return total;
}

/// Lagrange basis {λ_n} on a set of distinct nodes, evaluated in barycentric form.
class LagrangeBasis {
 public:
  LagrangeBasis() = default;

  explicit LagrangeBasis(std::vector<double> nodes) : nodes_(std::move(nodes)) {
    const std::size_t n = nodes_.size();
    if (n == 0) {
      throw std::invalid_argument("LagrangeBasis: empty node set");
    }
    weights_.assign(n, 1.0);
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t k = 0; k < n; ++k) {
        if (k == j) {
          continue;
        }
        const double diff = nodes_[j] - nodes_[k];
        if (diff == 0.0) {
          throw std::invalid_argument("LagrangeBasis: duplicate nodes");
        }
        weights_[j] /= diff;
      }
    }
    // D(j, k) = λ_k'(s_j)
    diff_.assign(n * n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      double diag = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        if (k == j) {
          continue;
        }
        const double v = (weights_[k] / weights_[j]) / (nodes_[j] - nodes_[k]);
        diff_[j * n + k] = v;
        diag -= v;
      }
      diff_[j * n + j] = diag;
    }
  }

  [[nodiscard]] std::size_t size() const { return nodes_.size(); }
  [[nodiscard]] int degree() const { return static_cast<int>(nodes_.size()) - 1; }
  [[nodiscard]] const std::vector<double>& nodes() const { return nodes_; }

  /// Σ_n values[n] λ_n(s).
  [[nodiscard]] double interpolate(std::span<const double> values, double s) const {
    const std::size_t n = nodes_.size();
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const double d = s - nodes_[k];
      if (d == 0.0) {
        return values[k];
      }
      const double c = weights_[k] / d;
      num += c * values[k];
      den += c;
    }
    return num / den;
  }

  /// λ_n(s).
  [[nodiscard]] double eval(std::size_t n, double s) const {
    std::vector<double> e(nodes_.size(), 0.0);
    e[n] = 1.0;
    return interpolate(e, s);
  }

  /// Nodal values of the `order`-th derivative (with respect to s) of the
  /// interpolant of `values`.
  [[nodiscard]] std::vector<double> derivative_values(std::span<const double> values, int order) const {
    const std::size_t n = nodes_.size();
    std::vector<double> cur(values.begin(), values.end());
    std::vector<double> next(n);
    for (int r = 0; r < order; ++r) {
      for (std::size_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          acc += diff_[j * n + k] * cur[k];
        }
        next[j] = acc;
      }
      std::swap(cur, next);
    }
    return cur;
  }

  /// d^order/ds^order of the interpolant of `values` at s.
  [[nodiscard]] double derivative(std::span<const double> values, int order, double s) const {
    if (order == 0) {
      return interpolate(values, s);
    }
    if (order > degree()) {
      return 0.0;
    }
    const auto d = derivative_values(values, order);
    return interpolate(d, s);
  }

  /// λ_n'(s).
  [[nodiscard]] double eval_derivative(std::size_t n, double s) const {
    std::vector<double> e(nodes_.size(), 0.0);
    e[n] = 1.0;
    return derivative(e, 1, s);
  }

 private:
  std::vector<double> nodes_;
  std::vector<double> weights_;
  std::vector<double> diff_;
};

}  // namespace mag
