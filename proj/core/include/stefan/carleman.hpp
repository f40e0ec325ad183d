#pragma once

#include <vector>

#include "stefan/adjoint.hpp"
#include "stefan/grid.hpp"
#include "stefan/linear_system.hpp"
#include "stefan/rng.hpp"
#include "stefan/weights.hpp"

namespace stefan {

/// Open interval on which the distributed control acts. It must contain the
/// closed plateau of the shape function driving the weights.
struct ObservationWindow {
  double left = -0.7;
  double right = -0.3;

  bool contains(double x) const { return x > left && x < right; }
};

/// Two sides of a weighted observability functional.
///
/// Every stored component is the true integral multiplied by
/// exp(log_scale); the common factor keeps stiff parameter choices
/// representable and cancels in the ratio.
struct CarlemanReport {
  double lhs_interior = 0.0;  // weighted interior energy terms
  double lhs_boundary = 0.0;  // weighted trace and front terms
  double lhs_initial = 0.0;   // t = 0 trace terms, modified functional only
  double rhs_local = 0.0;     // observation-window term
  double rhs_f = 0.0;         // distributed source term
  double rhs_g = 0.0;         // front source term
  double log_scale = 0.0;
  double s = 0.0;
  double lambda = 0.0;

  double lhs() const { return lhs_interior + lhs_boundary + lhs_initial; }
  double rhs() const { return rhs_local + rhs_f + rhs_g; }

  /// lhs / rhs; zero data reports 0, a vanishing right side with a
  /// non-vanishing left side reports infinity.
  double ratio() const;
};

/// Evaluate both sides of the weighted estimate for a solution of the
/// reduced backward system psi_t + d(t) psi_xx = f with the nonlocal
/// boundary pair gamma. All interior derivatives are centered differences
/// on interior nodes and levels; traces use one-sided second-order stencils.
CarlemanReport carleman_sides_basic(const WeightTable& table,
                                    const AdjointTrajectory& psi,
                                    const Field2D& f,
                                    const std::vector<double>& g,
                                    const ObservationWindow& omega);

/// Same functional for the adjoint of the linearized front problem, whose
/// right-hand side pairs (g1, g2) enter the estimate directly.
CarlemanReport carleman_sides_trajectory(const WeightTable& table,
                                         const AdjointTrajectory& phi,
                                         const Field2D& g1,
                                         const std::vector<double>& g2,
                                         const ObservationWindow& omega);

/// Variant with the time-plateau weight family, which stays finite at t = 0;
/// the left side gains the initial H^1 trace of phi and |gamma(0)|^2, and
/// the source weights use the per-level extremal values. The integrand keeps
/// the same parameter powers as the primary functional so that the two
/// coincide on the half cylinder where the weight families agree; fixed
/// powers of s and lambda move into the empirical constant.
///
/// Components are stored unscaled (log_scale = 0): the mixture of weighted
/// and unweighted terms rules out a common shift, so the report is meant for
/// moderate parameter choices where exp(-2 s zeta) stays representable.
CarlemanReport carleman_sides_modified(const WeightTable& table,
                                       const AdjointTrajectory& phi,
                                       const Field2D& g1,
                                       const std::vector<double>& g2,
                                       const ObservationWindow& omega);

/// Split of the conjugated operator applied to w = e^{-s alpha} psi into a
/// self-adjoint and a skew part, with the exact expansion of the cross term
/// and its integrated-by-parts form. All inner products are plain interior
/// sums weighted by dx dt, so the binomial and distributivity gaps are pure
/// rounding; the integrated-by-parts comparison carries the quadrature
/// error of the trace terms. Fields are built from the shifted variable
/// e^{s(alpha_min - alpha)} psi; the common factor cancels in every gap.
struct IdentityReport {
  double total = 0.0;      // || P_e w + (P_k w - s d alpha_xx w) ||^2
  double self_part = 0.0;  // || P_e w ||^2
  double skew_part = 0.0;  // || P_k w - s d alpha_xx w ||^2
  double cross = 0.0;      // 2 (P_e w, P_k w - s d alpha_xx w)
  double cross_direct = 0.0;  // the same pairing expanded term by term
  double cross_ibp = 0.0;     // integrated-by-parts value of the cross term
  double source_residual = 0.0;  // relative defect of (P_e + P_k) w against
                                 // e^{-s alpha} f on the shifted scale

  double identity_gap() const;
  double cross_direct_gap() const;
  double cross_ibp_gap() const;
};

IdentityReport decomposition_identity(const WeightTable& table,
                                      const Field2D& psi, const Field2D& f,
                                      const std::vector<double>& d);

/// Coefficient frame of the reduced backward equation psi_t + d(t) psi_xx
/// = f: diffusion 1/d, no transport, no nonlocal kernels. d must be positive
/// on every level.
CoefficientSet reduced_frame(const SpaceGrid& grid, const TimeGrid& time,
                             const std::vector<double>& d);

/// Smooth random dataset for the reduced system: a terminal profile built
/// from low sine modes (vanishing at x = -1), the matching front value, and
/// trigonometric sources. Consumes a fixed number of random draws, so a
/// reseeded stream reproduces the same continuum dataset on any grid.
struct ReducedDataset {
  std::vector<double> psi_T;
  double gamma_T = 0.0;
  Field2D f;
  std::vector<double> g;
};

ReducedDataset random_reduced_dataset(const SpaceGrid& grid,
                                      const TimeGrid& time, RandomStream& rng);

struct CarlemanSweepRow {
  double s = 0.0;
  double lambda = 0.0;
  int dataset = 0;
  double lhs = 0.0;
  double rhs = 0.0;
  double ratio = 0.0;
};

/// Evaluate the basic functional over the admissible parameter sweep for a
/// batch of random datasets solved once on the reduced frame. Rows are
/// ordered by s multiplier, then lambda multiplier, then dataset index.
std::vector<CarlemanSweepRow> carleman_basic_sweep(
    const SpaceGrid& grid, const TimeGrid& time, const std::vector<double>& d,
    const EtaFunction& eta, const CarlemanParams& base,
    const std::vector<double>& s_multipliers,
    const std::vector<double>& lambda_multipliers, int datasets,
    RandomStream& rng, const ObservationWindow& omega);

}  // namespace stefan
