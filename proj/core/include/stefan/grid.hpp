#pragma once

#include <span>
#include <vector>

#include "stefan/errors.hpp"

namespace stefan {

/// Uniform spatial grid with n nodes on [a, b].
struct SpaceGrid {
  double a = -1.0;
  double b = 1.0;
  int n = 0;

  double dx() const { return (b - a) / (n - 1); }
  double x(int i) const { return a + i * dx(); }

  std::vector<double> nodes() const {
    std::vector<double> xs(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) xs[static_cast<size_t>(i)] = x(i);
    return xs;
  }

  /// Grid on [0, 1] used for the cylinder domain.
  static SpaceGrid unit(int n) { return {0.0, 1.0, n}; }

  /// Grid on [-1, 1] used for the extended perturbation domain.
  /// n must be odd so that x = 0 is a node shared with the unit grid.
  static SpaceGrid extended(int n) {
    if (n < 5 || n % 2 == 0)
      throw DimensionError("extended grid needs an odd node count >= 5, got " +
                           std::to_string(n));
    return {-1.0, 1.0, n};
  }
};

/// Uniform time grid with m steps (m + 1 levels) on [0, T].
struct TimeGrid {
  double T = 1.0;
  int m = 0;

  double dt() const { return T / m; }
  double t(int k) const { return (T * k) / m; }
};

/// Dense time history of a nodal field: slice k is the spatial profile at
/// time level k, stored contiguously.
struct Field2D {
  int levels = 0;
  int n = 0;
  std::vector<double> v;

  Field2D() = default;
  Field2D(int levels_, int n_)
      : levels(levels_), n(n_), v(static_cast<size_t>(levels_) * n_, 0.0) {}

  double& at(int k, int i) { return v[static_cast<size_t>(k) * n + i]; }
  double at(int k, int i) const { return v[static_cast<size_t>(k) * n + i]; }

  std::span<double> slice(int k) {
    return {v.data() + static_cast<size_t>(k) * n, static_cast<size_t>(n)};
  }
  std::span<const double> slice(int k) const {
    return {v.data() + static_cast<size_t>(k) * n, static_cast<size_t>(n)};
  }
};

}  // namespace stefan
