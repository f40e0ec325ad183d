#pragma once

#include <vector>

#include "stefan/grid.hpp"

namespace stefan {

/// C^2 shape function on [-1, 1]: positive, equal to its minimum at both
/// endpoints, maximal on the plateau [c1, c2], slope bounded away from zero
/// outside the closed plateau. Built from cubic rise segments whose first
/// two derivatives vanish at the plateau edges.
struct EtaFunction {
  double eta_min = 0.05;
  double height = 0.05;
  double c1 = -0.6;
  double c2 = -0.4;

  double value(double x) const;
  double slope(double x) const;
  double curvature(double x) const;

  double max() const { return eta_min + height; }
};

/// Shape function whose plateau is exactly the observation core (a0, b0).
/// Requires -1 < a0 < b0 < 0 and positive eta_min, height.
EtaFunction build_eta(double a0, double b0, double eta_min, double height);

/// Parameters of the exponential weights. lambda <= 0 or s <= 0 request the
/// derived defaults lambda_floor(eta) and s0 * (T + T^2).
struct CarlemanParams {
  double m = 4.0;
  double lambda = 0.0;
  double s = 0.0;
  double s0 = 1.0;
};

/// Smallest admissible frequency parameter: max(1, ln 2 / (||eta|| (m-1))).
double lambda_floor(const EtaFunction& eta, double m);

/// Fill requested defaults and enforce the admissibility thresholds.
CarlemanParams resolve_params(const CarlemanParams& raw,
                              const EtaFunction& eta, double T);

/// Tabulated weight system on a space-time grid.
///
/// alpha and xi blow up at t = 0 and t = T; zeta and mu replace the time
/// factor t(T-t) by a plateau on [0, T/2] and blow up only at t = T.
/// Degenerate levels store +infinity; the associated integrand factors
/// exp(-2 s alpha) vanish there. The rho columns are stored as logarithms
/// so that stiff parameter ranges stay representable.
struct WeightTable {
  SpaceGrid grid;
  TimeGrid time;
  CarlemanParams params;
  EtaFunction eta;

  Field2D alpha, xi, zeta, mu;

  // Closed-form derivatives of alpha and xi on interior levels.
  Field2D alpha_x, alpha_xx, alpha_t, alpha_xt, alpha_tt, xi_x, xi_t;

  // Per-level extrema: hat quantities are attained at x = +-1, star
  // quantities on the plateau.
  std::vector<double> alpha_hat, xi_hat;
  std::vector<double> zeta_hat, zeta_star, mu_hat, mu_star;
  std::vector<double> zeta_hat_t, mu_hat_t;

  // log rho0 = s zeta*            (state weight)
  // log rho1 = s zeta_hat         (front weight)
  // log rho2 = s zeta* - 1.5 ln mu*   (control weight)
  // log rho3 = s zeta_hat - 1.5 ln mu_hat (source weight)
  // log rho4 = 0.5 log rho3
  std::vector<double> log_rho0, log_rho1, log_rho2, log_rho3, log_rho4;

  // Time derivative of rho4 in closed form (0 on the time plateau).
  std::vector<double> rho4_t;

  // Smallest interior alpha value and the associated log shift 2 s min;
  // weighted ratios factor this out to stay representable.
  double alpha_interior_min = 0.0;
  double log_shift = 0.0;
};

WeightTable tabulate_weights(const SpaceGrid& grid, const TimeGrid& time,
                             const CarlemanParams& params,
                             const EtaFunction& eta);

/// Finiteness and sign checks that the weight system must satisfy for the
/// synthesis to close.
struct WeightBoundReport {
  double sup_rho4_over_rho3 = 0.0;
  double sup_rho4_over_rho2 = 0.0;
  double sup_rho4t_over_rho0 = 0.0;
  double positivity_margin = 0.0;   // exp(lam m ||eta||) - 2 exp(lam ||eta||) + exp(lam eta(1))
  double min_slope_outside = 0.0;   // min |eta_x| off the closed plateau
  bool all_finite = false;
};

WeightBoundReport check_weight_bounds(const WeightTable& table);

}  // namespace stefan
