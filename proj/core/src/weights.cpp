#include "stefan/weights.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "stefan/errors.hpp"

namespace stefan {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

// Rising edge 1 - (1 - sigma)^3 for sigma in [0, 1]: starts with slope 3,
// reaches the plateau with vanishing first and second derivatives.
double edge(double sigma) {
  const double r = 1.0 - sigma;
  return 1.0 - r * r * r;
}
double edge_d1(double sigma) {
  const double r = 1.0 - sigma;
  return 3.0 * r * r;
}
double edge_d2(double sigma) { return -6.0 * (1.0 - sigma); }
}  // namespace

double EtaFunction::value(double x) const {
  if (x < c1) {
    const double sigma = (x + 1.0) / (c1 + 1.0);
    return eta_min + height * edge(sigma);
  }
  if (x > c2) {
    const double sigma = (1.0 - x) / (1.0 - c2);
    return eta_min + height * edge(sigma);
  }
  return eta_min + height;
}

double EtaFunction::slope(double x) const {
  if (x < c1) return height * edge_d1((x + 1.0) / (c1 + 1.0)) / (c1 + 1.0);
  if (x > c2) return -height * edge_d1((1.0 - x) / (1.0 - c2)) / (1.0 - c2);
  return 0.0;
}

double EtaFunction::curvature(double x) const {
  if (x < c1) {
    const double w = c1 + 1.0;
    return height * edge_d2((x + 1.0) / w) / (w * w);
  }
  if (x > c2) {
    const double w = 1.0 - c2;
    return height * edge_d2((1.0 - x) / w) / (w * w);
  }
  return 0.0;
}

EtaFunction build_eta(double a0, double b0, double eta_min, double height) {
  if (!(-1.0 < a0 && a0 < b0 && b0 < 0.0))
    throw GeometryError("build_eta: plateau (" + std::to_string(a0) + ", " +
                        std::to_string(b0) +
                        ") must be ordered and contained in (-1, 0)");
  if (eta_min <= 0.0 || height <= 0.0)
    throw GeometryError("build_eta: eta_min and height must be positive");
  EtaFunction eta;
  eta.eta_min = eta_min;
  eta.height = height;
  eta.c1 = a0;
  eta.c2 = b0;
  return eta;
}

double lambda_floor(const EtaFunction& eta, double m) {
  return std::max(1.0, std::log(2.0) / (eta.max() * (m - 1.0)));
}

CarlemanParams resolve_params(const CarlemanParams& raw,
                              const EtaFunction& eta, double T) {
  if (raw.m <= 1.0)
    throw ParameterError("resolve_params: m must exceed 1, got " +
                         std::to_string(raw.m));
  if (raw.s0 <= 0.0)
    throw ParameterError("resolve_params: s0 must be positive");
  CarlemanParams p = raw;
  const double lam0 = lambda_floor(eta, p.m);
  if (p.lambda <= 0.0) p.lambda = lam0;
  if (p.lambda < lam0 * (1.0 - 1e-12))
    throw ParameterError("resolve_params: lambda = " + std::to_string(p.lambda) +
                         " below the floor " + std::to_string(lam0));
  const double s_min = p.s0 * (T + T * T);
  if (p.s <= 0.0) p.s = s_min;
  if (p.s < s_min * (1.0 - 1e-9))
    throw ParameterError("resolve_params: s = " + std::to_string(p.s) +
                         " below the floor " + std::to_string(s_min));
  return p;
}

WeightTable tabulate_weights(const SpaceGrid& grid, const TimeGrid& time,
                             const CarlemanParams& params,
                             const EtaFunction& eta) {
  WeightTable tb;
  tb.grid = grid;
  tb.time = time;
  tb.params = resolve_params(params, eta, time.T);
  tb.eta = eta;

  const int n = grid.n;
  const int m = time.m;
  const double T = time.T;
  const double lam = tb.params.lambda;
  const double s = tb.params.s;

  const double sup = eta.max();
  const double A1 = std::exp(2.0 * lam * tb.params.m * sup);
  const double A2_plateau = std::exp(lam * (tb.params.m * sup + sup));
  const double A2_boundary = std::exp(lam * (tb.params.m * sup + eta.eta_min));

  std::vector<double> A2(static_cast<size_t>(n)), eta_x(static_cast<size_t>(n)),
      eta_xx(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double x = grid.x(i);
    A2[static_cast<size_t>(i)] =
        std::exp(lam * (tb.params.m * sup + eta.value(x)));
    eta_x[static_cast<size_t>(i)] = eta.slope(x);
    eta_xx[static_cast<size_t>(i)] = eta.curvature(x);
  }

  auto field = [&](Field2D& f) { f = Field2D(m + 1, n); };
  field(tb.alpha);
  field(tb.xi);
  field(tb.zeta);
  field(tb.mu);
  field(tb.alpha_x);
  field(tb.alpha_xx);
  field(tb.alpha_t);
  field(tb.alpha_xt);
  field(tb.alpha_tt);
  field(tb.xi_x);
  field(tb.xi_t);

  auto vec = [&](std::vector<double>& v) {
    v.assign(static_cast<size_t>(m + 1), kInf);
  };
  vec(tb.alpha_hat);
  vec(tb.xi_hat);
  vec(tb.zeta_hat);
  vec(tb.zeta_star);
  vec(tb.mu_hat);
  vec(tb.mu_star);
  tb.zeta_hat_t.assign(static_cast<size_t>(m + 1), 0.0);
  tb.mu_hat_t.assign(static_cast<size_t>(m + 1), 0.0);
  vec(tb.log_rho0);
  vec(tb.log_rho1);
  vec(tb.log_rho2);
  vec(tb.log_rho3);
  vec(tb.log_rho4);
  tb.rho4_t.assign(static_cast<size_t>(m + 1), 0.0);

  for (int k = 0; k <= m; ++k) {
    const double t = time.t(k);
    const double theta = t * (T - t);
    const double theta_t = T - 2.0 * t;
    const double r = (t < 0.5 * T) ? 0.25 * T * T : theta;
    const bool alpha_finite = (k > 0 && k < m);
    const bool zeta_finite = (k < m);

    for (int i = 0; i < n; ++i) {
      const double diff = A1 - A2[static_cast<size_t>(i)];
      if (alpha_finite) {
        const double al = diff / theta;
        const double xv = A2[static_cast<size_t>(i)] / theta;
        tb.alpha.at(k, i) = al;
        tb.xi.at(k, i) = xv;
        tb.alpha_x.at(k, i) = -lam * xv * eta_x[static_cast<size_t>(i)];
        tb.alpha_xx.at(k, i) =
            -lam * lam * xv * eta_x[static_cast<size_t>(i)] *
                eta_x[static_cast<size_t>(i)] -
            lam * xv * eta_xx[static_cast<size_t>(i)];
        tb.alpha_t.at(k, i) = -al * theta_t / theta;
        tb.alpha_tt.at(k, i) =
            al * (2.0 * theta_t * theta_t + 2.0 * theta) / (theta * theta);
        const double xi_t = -xv * theta_t / theta;
        tb.xi_t.at(k, i) = xi_t;
        tb.xi_x.at(k, i) = lam * xv * eta_x[static_cast<size_t>(i)];
        tb.alpha_xt.at(k, i) = -lam * xi_t * eta_x[static_cast<size_t>(i)];
      } else {
        tb.alpha.at(k, i) = kInf;
        tb.xi.at(k, i) = kInf;
        tb.alpha_x.at(k, i) = kInf;
        tb.alpha_xx.at(k, i) = kInf;
        tb.alpha_t.at(k, i) = kInf;
        tb.alpha_xt.at(k, i) = kInf;
        tb.alpha_tt.at(k, i) = kInf;
        tb.xi_x.at(k, i) = kInf;
        tb.xi_t.at(k, i) = kInf;
      }
      if (zeta_finite) {
        tb.zeta.at(k, i) = diff / r;
        tb.mu.at(k, i) = A2[static_cast<size_t>(i)] / r;
      } else {
        tb.zeta.at(k, i) = kInf;
        tb.mu.at(k, i) = kInf;
      }
    }

    if (alpha_finite) {
      tb.alpha_hat[static_cast<size_t>(k)] = (A1 - A2_boundary) / theta;
      tb.xi_hat[static_cast<size_t>(k)] = A2_boundary / theta;
    }
    if (zeta_finite) {
      const double zh = (A1 - A2_boundary) / r;
      const double zs = (A1 - A2_plateau) / r;
      const double mh = A2_boundary / r;
      const double ms = A2_plateau / r;
      tb.zeta_hat[static_cast<size_t>(k)] = zh;
      tb.zeta_star[static_cast<size_t>(k)] = zs;
      tb.mu_hat[static_cast<size_t>(k)] = mh;
      tb.mu_star[static_cast<size_t>(k)] = ms;
      if (t >= 0.5 * T) {
        tb.zeta_hat_t[static_cast<size_t>(k)] = -zh * theta_t / theta;
        tb.mu_hat_t[static_cast<size_t>(k)] = -mh * theta_t / theta;
      }
      tb.log_rho0[static_cast<size_t>(k)] = s * zs;
      tb.log_rho1[static_cast<size_t>(k)] = s * zh;
      tb.log_rho2[static_cast<size_t>(k)] = s * zs - 1.5 * std::log(ms);
      tb.log_rho3[static_cast<size_t>(k)] = s * zh - 1.5 * std::log(mh);
      tb.log_rho4[static_cast<size_t>(k)] =
          0.5 * tb.log_rho3[static_cast<size_t>(k)];
      const double bracket =
          0.5 * s * tb.zeta_hat_t[static_cast<size_t>(k)] * std::pow(mh, -0.75) -
          0.75 * std::pow(mh, -1.75) * tb.mu_hat_t[static_cast<size_t>(k)];
      tb.rho4_t[static_cast<size_t>(k)] = std::exp(0.5 * s * zh) * bracket;
    } else {
      tb.rho4_t[static_cast<size_t>(k)] = kInf;
      tb.zeta_hat_t[static_cast<size_t>(k)] = kInf;
      tb.mu_hat_t[static_cast<size_t>(k)] = kInf;
    }
  }

  tb.alpha_interior_min = kInf;
  for (int k = 1; k < m; ++k) {
    const double t = time.t(k);
    const double theta = t * (T - t);
    tb.alpha_interior_min =
        std::min(tb.alpha_interior_min, (A1 - A2_plateau) / theta);
  }
  tb.log_shift = 2.0 * s * tb.alpha_interior_min;
  return tb;
}

WeightBoundReport check_weight_bounds(const WeightTable& tb) {
  WeightBoundReport rep;
  const int m = tb.time.m;
  const double s = tb.params.s;
  const double lam = tb.params.lambda;

  double sup43 = -kInf, sup42 = -kInf, sup4t0 = -kInf;
  bool finite = true;
  for (int k = 0; k < m; ++k) {
    const size_t ks = static_cast<size_t>(k);
    const double l43 = -0.5 * tb.log_rho3[ks];
    const double l42 = tb.log_rho4[ks] - tb.log_rho2[ks];
    sup43 = std::max(sup43, l43);
    sup42 = std::max(sup42, l42);
    if (tb.zeta_hat_t[ks] > 0.0) {
      const double mh = tb.mu_hat[ks];
      const double bracket = 0.5 * s * tb.zeta_hat_t[ks] * std::pow(mh, -0.75) -
                             0.75 * std::pow(mh, -1.75) * tb.mu_hat_t[ks];
      if (bracket > 0.0) {
        const double l4t0 =
            0.5 * s * tb.zeta_hat[ks] + std::log(bracket) - tb.log_rho0[ks];
        sup4t0 = std::max(sup4t0, l4t0);
      }
    }
    if (!std::isfinite(tb.log_rho0[ks]) || !std::isfinite(tb.log_rho3[ks]))
      finite = false;
  }
  rep.sup_rho4_over_rho3 = std::exp(sup43);
  rep.sup_rho4_over_rho2 = std::exp(sup42);
  rep.sup_rho4t_over_rho0 = (sup4t0 == -kInf) ? 0.0 : std::exp(sup4t0);

  const double sup = tb.eta.max();
  rep.positivity_margin = std::exp(lam * tb.params.m * sup) -
                          2.0 * std::exp(lam * sup) +
                          std::exp(lam * tb.eta.value(1.0));

  // Exclude the plateau with half a cell of slack: nodes that land on its
  // edges up to rounding carry a slope that underflows to zero.
  double min_slope = kInf;
  const double pad = 0.5 * tb.grid.dx();
  for (int i = 0; i < tb.grid.n; ++i) {
    const double x = tb.grid.x(i);
    if (x >= tb.eta.c1 - pad && x <= tb.eta.c2 + pad) continue;
    min_slope = std::min(min_slope, std::abs(tb.eta.slope(x)));
  }
  rep.min_slope_outside = min_slope;

  rep.all_finite = finite && std::isfinite(rep.sup_rho4_over_rho3) &&
                   std::isfinite(rep.sup_rho4_over_rho2) &&
                   std::isfinite(rep.sup_rho4t_over_rho0) &&
                   rep.positivity_margin > 0.0 && min_slope > 0.0;
  return rep;
}

}  // namespace stefan
