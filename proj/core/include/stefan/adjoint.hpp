#pragma once

#include <functional>
#include <span>
#include <vector>

#include "stefan/linear_system.hpp"
#include "stefan/rng.hpp"

namespace stefan {

/// Options and sources for the backward adjoint solve.
struct AdjointOptions {
  /// Coefficient c in the terminal coupling phi_T(1) = c gamma_T +
  /// (coupling(.,T), phi_T).
  double compat_coefficient = 1.0;
  double compat_tol = 1e-10;
  std::function<double(double, double)> g1;
  std::function<double(double)> g2;
  const Field2D* g1_grid = nullptr;
  const std::vector<double>* g2_grid = nullptr;
};

struct AdjointTrajectory {
  SpaceGrid grid;
  TimeGrid time;
  Field2D phi;                // all nodes; the x = -1 column is zero
  std::vector<double> gamma;  // size m + 1
};

/// Solve the backward adjoint system
///
///   -qbar phi_t - phi_xx - a phi_x + a(1,t) phi = g1,
///   phi(-1,t) = 0,  phi(1,t) = gamma + (coupling, phi)_2,
///   gamma' = (load, phi)_2 + g2,
///
/// from terminal data (phi_T, gamma_T) at t = T down to t = 0. The terminal
/// pair must satisfy the compatibility relations within compat_tol, else a
/// CompatibilityError is raised. The nonlocal boundary value is resolved
/// exactly per slice through two influence solves.
AdjointTrajectory solve_adjoint(const CoefficientSet& coeffs,
                                std::span<const double> phi_T, double gamma_T,
                                const AdjointOptions& opts);

/// Nodal data for the exact discrete duality identity.
struct DualityData {
  std::vector<double> z0;  // full nodes
  double h0 = 0.0;
  Field2D f1;              // forward sources, read at (level, node)
  std::vector<double> f2;
  Field2D w;               // control contribution
  std::vector<double> xi;  // terminal dual data over (interior, front slot)
  Field2D g1;              // dual sources
  std::vector<double> g2;
};

DualityData random_duality_data(const CoefficientSet& coeffs,
                                RandomStream& rng);

struct DualityReport {
  double lhs = 0.0;
  double rhs = 0.0;
  double gap() const;
};

/// Exact discrete duality: pair the implicit Euler march with its algebraic
/// transpose march. The two sides agree to rounding error for arbitrary
/// data; any larger gap indicates an inconsistent operator pair.
DualityReport duality_gap_discrete(const CoefficientSet& coeffs,
                                   const DualityData& data);

/// Smooth data for the transposition identity between independently
/// discretized forward and adjoint solves.
struct SmoothDualityProblem {
  std::function<double(double)> z0;
  double h0 = 0.0;
  std::function<double(double, double)> f1;
  std::function<double(double)> f2;
  std::function<double(double, double)> w;
  std::function<double(double, double)> g1;
  std::function<double(double)> g2;
  std::function<double(double)> phi_T;  // must vanish at x = -1
};

/// Evaluate both sides of the transposition identity
///
///   int (f1 + w, phi) + int f2 gamma
///     = [ (qbar z, phi) + h gamma ]_0^T + int (z, g1) + int h g2
///
/// with the adjoint solved under gamma' = (load, phi)_2 - g2. The terminal
/// gamma is derived from phi_T so the compatibility relation holds on the
/// given grid. The gap decays at the combined order of both schemes.
DualityReport transposition_check(const CoefficientSet& coeffs,
                                  const SmoothDualityProblem& prob,
                                  const AdjointOptions& base_opts = {});

}  // namespace stefan
