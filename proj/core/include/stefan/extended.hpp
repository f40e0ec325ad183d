#pragma once

#include <functional>
#include <span>

#include "stefan/linear_system.hpp"

namespace stefan {

/// Options for the nonlinear extended-domain march.
struct ExtendedOptions {
  double picard_tol = 1e-12;
  int picard_max = 30;
  int picard_min = 2;
  /// Floor for qbar + 2 h / beta; crossing it aborts with an
  /// admissibility error.
  double q_star = 0.0;
  /// Manufactured-solution hooks for the z and h equations.
  std::function<double(double, double)> source_z;
  std::function<double(double)> source_h;
};

struct ExtendedTrajectory {
  SpaceGrid grid;
  TimeGrid time;
  Field2D z;
  std::vector<double> h;
  std::vector<double> trace;
  /// Quadratic remainder actually absorbed at each slice, recorded so a
  /// linear march with this source reproduces the trajectory exactly.
  Field2D f1_applied;
};

/// March the nonlinear perturbation system
///
///   (qbar + 2h/beta) z_t - z_xx + (a + x tau / beta) z_x
///       + coupling tau + load h = w + F,      tau = z_x(1, t),
///   h_t + tau = G,
///
/// with implicit Euler in time and a Picard iteration per slice on the
/// lagged pair (h, tau). The control field may be null.
ExtendedTrajectory solve_extended_nonlinear(const CoefficientSet& coeffs,
                                            std::span<const double> z0,
                                            double h0, const Field2D* control,
                                            const ExtendedOptions& opts);

}  // namespace stefan
