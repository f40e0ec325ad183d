#pragma once

#include <functional>
#include <span>
#include <vector>

#include "stefan/grid.hpp"

namespace stefan {

/// Classical similarity solution of the one-phase melting problem with
/// constant boundary temperature V:
///   ell(t) = 2 k sqrt(t + t0),
///   u(x, t) = V [1 - erf(x / (2 sqrt(t + t0))) / erf(k)],
/// where k solves sqrt(pi) k exp(k^2) erf(k) = V / beta. In the cylinder
/// frame the profile p(y) = u(y ell) is independent of time and
/// q(t) = 4 k^2 (t + t0) is affine.
struct SimilaritySolution {
  double V = 0.5;
  double beta = 1.0;
  double t0 = 0.25;
  double k = 0.0;

  double ell(double t) const;
  double q(double t) const;
  double u(double x, double t) const;
  double p(double y) const;
  double p_y(double y) const;
};

/// Solve the transcendental front-coefficient equation by bisection.
SimilaritySolution solve_similarity(double V, double beta, double t0);

/// Options for the cylinder-frame forward solver.
struct CylinderOptions {
  enum class QRule { trapezoid, backward_euler };
  QRule q_rule = QRule::trapezoid;
  double picard_tol = 1e-11;
  int picard_max = 25;
  int picard_min = 2;
  double q_star = 0.01;

  /// Manufactured-solution hooks; empty functions mean zero sources.
  std::function<double(double, double)> source_p;  // S_p(x, t)
  std::function<double(double)> source_q;          // S_q(t)
};

/// Discrete trajectory of the transformed system.
struct CylinderHistory {
  SpaceGrid grid;
  TimeGrid time;
  Field2D p;
  std::vector<double> q;
  std::vector<double> trace1;  // one-sided p_x at the right end, per level
};

/// March the fixed-cylinder system
///   q p_t - p_xx + (x / beta) p_x(1, .) p_x = S_p,
///   beta q' + 2 p_x(1, .) = S_q,
/// with Dirichlet data v(t) at the left end of `grid` and 0 at the right
/// end. Implicit Euler in time; the trace p_x(1, .) and the new front value
/// q are refined by an inner Picard loop each step. Works on both the unit
/// domain (left end x = 0) and the extended domain (left end x = -1).
CylinderHistory solve_cylinder_stefan(std::span<const double> p0, double q0,
                                      const std::function<double(double)>& v,
                                      const SpaceGrid& grid,
                                      const TimeGrid& time, double beta,
                                      const CylinderOptions& opts = {});

/// Max interior residual of the continuous equations evaluated on a stored
/// trajectory with centered differences (interior time levels only).
double cylinder_residual(const CylinderHistory& hist, double beta,
                         const CylinderOptions& opts = {});

enum class ReferenceKind { neumann, numeric };

struct ReferenceRequest {
  ReferenceKind kind = ReferenceKind::neumann;
  double beta = 1.0;
  double ell_star = 0.1;

  // neumann kind: similarity seed
  double V = 0.5;
  double t0 = 0.25;

  // numeric kind: initial profile on [-1, 1] (must vanish at x = 1) and
  // initial squared front; the trajectory is generated on a twice-finer
  // grid with homogeneous Dirichlet data at x = -1 and then restricted.
  std::function<double(double)> numeric_p0;
  double numeric_q0 = 1.0;

  double blend_width = 0.25;
  CylinderOptions cylinder;

  /// Time-derivative convention for the stored p_t field: backward
  /// differences close the discrete control loop exactly; centered
  /// differences are second order for smooth diagnostics.
  bool centered_pt = false;
};

/// Reference trajectory around which the control problem is linearized.
/// All profile fields live on the extended grid; the right half restricts
/// to the unit domain (nodes mid()..n-1).
struct ReferenceTrajectory {
  ReferenceKind kind = ReferenceKind::neumann;
  double beta = 1.0;
  double ell_star = 0.1;
  SpaceGrid unit, ext;
  TimeGrid time;

  Field2D p;                  // extended profiles
  Field2D p_t;                // stored time derivative (see ReferenceRequest)
  Field2D p_x;                // centered space derivative per level
  std::vector<double> q;      // squared front per level
  std::vector<double> trace1; // p_x(1, .) one-sided, per level
  std::vector<double> v;      // boundary values p(0, .) per level

  SimilaritySolution similarity;  // populated for the neumann kind
  bool centered_pt = false;

  /// March options the trajectory was generated with (q_star resolved from
  /// ell_star); re-simulations against this reference reuse them.
  CylinderOptions cylinder;

  /// Blend width of the even-reflection extension; perturbation data built
  /// against this reference should extend with the same value.
  double blend_width = 0.25;

  int mid() const { return unit.n - 1; }
  std::span<const double> unit_slice(int k) const {
    return p.slice(k).subspan(static_cast<size_t>(mid()));
  }
};

ReferenceTrajectory make_reference_trajectory(const ReferenceRequest& req,
                                              const SpaceGrid& ext,
                                              const TimeGrid& time);

/// Max residual of the stored reference in the continuous cylinder
/// equations over the unit domain, centered differences, interior levels.
double reference_residual(const ReferenceTrajectory& ref);

}  // namespace stefan
