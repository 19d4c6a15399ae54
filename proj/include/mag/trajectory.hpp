#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mag/partition.hpp"
#include "mag/tableau.hpp"

namespace mag {

/// Piecewise polynomial U_i on each component's partition, stored as nodal
/// values ξ_ijm at the method's nodes mapped onto I_ij.
///
/// mcG intervals share their end values: node 0 of interval j+1 is node q of
/// interval j. mdG intervals are independent and U_i(0^-) is kept separately.
class Trajectory {
 public:
  Trajectory() = default;

  Trajectory(Partition partition, std::vector<Method> methods, std::span<const double> initial)
      : partition_(std::move(partition)), methods_(std::move(methods)) {
    const std::size_t n = partition_.components();
    if (methods_.size() != n || initial.size() != n) {
      throw std::invalid_argument("trajectory: component count mismatch");
    }
    comps_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      auto& c = comps_[i];
      const std::size_t m = partition_.intervals(i);
      c.offsets.resize(m);
      c.tabs.resize(m);
      std::size_t off = 0;
      for (std::size_t j = 0; j < m; ++j) {
        const int q = partition_.order(i, j);
        c.tabs[j] = &tableau(methods_[i], q);
        c.offsets[j] = off;
        off += methods_[i] == Method::mcG ? static_cast<std::size_t>(q) : static_cast<std::size_t>(q) + 1;
      }
      if (methods_[i] == Method::mcG) {
        ++off;
      }
      c.coeffs.assign(off, initial[i]);
      c.initial = initial[i];
    }
  }

  [[nodiscard]] const Partition& partition() const { return partition_; }
  [[nodiscard]] std::size_t components() const { return comps_.size(); }
  [[nodiscard]] Method method(std::size_t i) const { return methods_[i]; }
  [[nodiscard]] const std::vector<Method>& methods() const { return methods_; }
  [[nodiscard]] double horizon() const { return partition_.horizon(); }
  [[nodiscard]] const MethodTableau& tab(std::size_t i, std::size_t j) const { return *comps_[i].tabs[j]; }

  /// U_i(0^-), the initial value.
  [[nodiscard]] double initial(std::size_t i) const { return comps_[i].initial; }

  [[nodiscard]] std::span<const double> nodal(std::size_t i, std::size_t j) const {
    const auto& c = comps_[i];
    return {c.coeffs.data() + c.offsets[j], static_cast<std::size_t>(partition_.order(i, j)) + 1};
  }
  [[nodiscard]] std::span<double> nodal(std::size_t i, std::size_t j) {
    auto& c = comps_[i];
    return {c.coeffs.data() + c.offsets[j], static_cast<std::size_t>(partition_.order(i, j)) + 1};
  }

  /// All stored coefficients of component i (flat, interval after interval).
  [[nodiscard]] const std::vector<double>& coefficients(std::size_t i) const { return comps_[i].coeffs; }

  /// Value the local problem on I_ij starts from: ξ_ij0 for mcG,
  /// U(t_{i,j-1}^-) for mdG.
  [[nodiscard]] double incoming(std::size_t i, std::size_t j) const {
    if (methods_[i] == Method::mcG) {
      return nodal(i, j)[0];
    }
    return j == 0 ? comps_[i].initial : nodal(i, j - 1).back();
  }

  /// Time of node m of I_ij. End-points are exact breakpoints.
  [[nodiscard]] double node_time(std::size_t i, std::size_t j, std::size_t m) const {
    const double s = tab(i, j).nodes.nodes[m];
    return map_time(i, j, s);
  }

  [[nodiscard]] double map_time(std::size_t i, std::size_t j, double s) const {
    if (s == 0.0) {
      return partition_.start(i, j);
    }
    if (s == 1.0) {
      return partition_.end(i, j);
    }
    return partition_.start(i, j) + s * partition_.step(i, j);
  }

  /// U_i on interval j at reference coordinate s (extrapolates outside [0, 1]).
  [[nodiscard]] double local_value(std::size_t i, std::size_t j, double s) const {
    return tab(i, j).trial.interpolate(nodal(i, j), s);
  }

  /// d^r U_i / dt^r on interval j at reference coordinate s.
  [[nodiscard]] double local_derivative(std::size_t i, std::size_t j, int r, double s) const {
    const double k = partition_.step(i, j);
    double scale = 1.0;
    for (int p = 0; p < r; ++p) {
      scale /= k;
    }
    return scale * tab(i, j).trial.derivative(nodal(i, j), r, s);
  }

  /// U_i(t) with the requested one-sided convention at breakpoints. At t = T
  /// both sides give the left limit; for mdG, side left at t = 0 gives U(0^-).
  [[nodiscard]] double eval(std::size_t i, double t, Side side = Side::left) const {
    if (t == horizon()) {
      side = Side::left;
    }
    if (t == 0.0 && side == Side::left) {
      return methods_[i] == Method::mdG ? comps_[i].initial : comps_[i].coeffs[0];
    }
    const std::size_t j = partition_.interval_at(i, t, side);
    return local_value(i, j, reference(i, j, t));
  }

  /// d^r U_i / dt^r at t, on the interval selected by `side`.
  [[nodiscard]] double derivative(std::size_t i, double t, int r, Side side = Side::left) const {
    if (t == horizon()) {
      side = Side::left;
    }
    const std::size_t j = partition_.interval_at(i, t, side);
    return local_derivative(i, j, r, reference(i, j, t));
  }

  /// [U_i] at t_ij = start of interval j: right limit minus left limit.
  /// Always 0 for mcG.
  [[nodiscard]] double jump(std::size_t i, std::size_t j) const {
    if (j >= partition_.intervals(i)) {
      throw std::out_of_range("trajectory: jump index out of range");
    }
    if (methods_[i] == Method::mcG) {
      return 0.0;
    }
    return local_value(i, j, 0.0) - incoming(i, j);
  }

  /// U(t) for all components.
  [[nodiscard]] std::vector<double> state(double t, Side side = Side::left) const {
    std::vector<double> u(components());
    for (std::size_t i = 0; i < u.size(); ++i) {
      u[i] = eval(i, t, side);
    }
    return u;
  }

  /// Left limits at T.
  [[nodiscard]] std::vector<double> final_state() const { return state(horizon(), Side::left); }

  [[nodiscard]] double reference(std::size_t i, std::size_t j, double t) const {
    return (t - partition_.start(i, j)) / partition_.step(i, j);
  }

  void set_initial(std::size_t i, double v) {
    comps_[i].initial = v;
    if (methods_[i] == Method::mcG) {
      comps_[i].coeffs[0] = v;
    }
  }

 private:
  struct Component {
    std::vector<std::size_t> offsets;
    std::vector<double> coeffs;
    std::vector<const MethodTableau*> tabs;
    double initial = 0.0;
  };

  Partition partition_;
  std::vector<Method> methods_;
  std::vector<Component> comps_;
};

}  // namespace mag
