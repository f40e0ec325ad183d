#include "stefan/extended.hpp"

#include <cmath>

#include "stefan/errors.hpp"
#include "stefan/numerics.hpp"

namespace stefan {

ExtendedTrajectory solve_extended_nonlinear(const CoefficientSet& coeffs,
                                            std::span<const double> z0,
                                            double h0, const Field2D* control,
                                            const ExtendedOptions& opts) {
  const int n = coeffs.grid.n;
  const int m = coeffs.time.m;
  if (static_cast<int>(z0.size()) != n)
    throw DimensionError("initial profile does not match the grid");
  if (n < 5) throw DimensionError("extended march needs at least five nodes");
  const double dx = coeffs.grid.dx();
  const double dt = coeffs.time.dt();
  const double beta = coeffs.beta;
  const int I = n - 2;
  const int j1 = I - 2, j2 = I - 1;
  const double c1 = 1.0 / (2.0 * dx), c2 = -2.0 / dx;

  ExtendedTrajectory out;
  out.grid = coeffs.grid;
  out.time = coeffs.time;
  out.z = Field2D(m + 1, n);
  out.h.assign(static_cast<size_t>(m) + 1, 0.0);
  out.trace.assign(static_cast<size_t>(m) + 1, 0.0);
  out.f1_applied = Field2D(m + 1, n);

  std::vector<double> zc(static_cast<size_t>(I));
  for (int j = 0; j < I; ++j) zc[static_cast<size_t>(j)] = z0[static_cast<size_t>(j + 1)];
  double h = h0;
  auto trace_of = [&](std::span<const double> s) {
    return c1 * s[static_cast<size_t>(j1)] + c2 * s[static_cast<size_t>(j2)];
  };
  out.trace[0] = trace_of(zc);
  for (int j = 0; j < I; ++j) out.z.at(0, j + 1) = zc[static_cast<size_t>(j)];
  out.h[0] = h0;

  BorderedTridiagonal bt;
  bt.lower.resize(static_cast<size_t>(I));
  bt.diag.resize(static_cast<size_t>(I));
  bt.upper.resize(static_cast<size_t>(I));
  bt.border_col.resize(static_cast<size_t>(I));
  bt.border_row.assign(static_cast<size_t>(I), 0.0);
  bt.border_row[static_cast<size_t>(j1)] = -c1;
  bt.border_row[static_cast<size_t>(j2)] = -c2;
  bt.corner = 1.0;
  std::vector<double> packed(static_cast<size_t>(I) + 1);

  const double rxx = dt / (dx * dx);
  for (int k = 1; k <= m; ++k) {
    const double t = coeffs.time.t(k);
    const double qb = coeffs.qbar[static_cast<size_t>(k)];
    // warm start the slice iteration from the previous level
    double h_lag = h;
    double tau_lag = out.trace[static_cast<size_t>(k - 1)];

    const double rhs_h =
        h + dt * (opts.source_h ? opts.source_h(t) : 0.0);

    std::vector<double> znew;
    double tau = 0.0, hnew = 0.0;
    bool done = false;
    for (int it = 1; it <= opts.picard_max; ++it) {
      const double qt = qb + 2.0 * h_lag / beta;
      if (!(qt > opts.q_star) || qt <= 1e-12)
        throw AdmissibilityError(
            "front variable left the admissible range during the march");
      for (int j = 0; j < I; ++j) {
        const int i = j + 1;
        const double drift =
            coeffs.a.at(k, i) + coeffs.grid.x(i) * tau_lag / beta;
        const double adv = drift * dt / (2.0 * dx);
        bt.lower[static_cast<size_t>(j)] = -rxx - adv;
        bt.diag[static_cast<size_t>(j)] = qt + 2.0 * rxx;
        bt.upper[static_cast<size_t>(j)] = -rxx + adv;
        bt.border_col[static_cast<size_t>(j)] =
            dt * coeffs.coupling.at(k, i) - dt * dt * coeffs.load.at(k, i);
        double f = 0.0;
        if (control) f += control->at(k, i);
        if (opts.source_z) f += opts.source_z(coeffs.grid.x(i), t);
        packed[static_cast<size_t>(j)] = qt * zc[static_cast<size_t>(j)] +
                                         dt * f -
                                         dt * coeffs.load.at(k, i) * rhs_h;
      }
      packed[static_cast<size_t>(I)] = 0.0;
      auto sol = solve_bordered(bt, packed);
      tau = sol.back();
      hnew = rhs_h - dt * tau;
      sol.pop_back();
      znew = std::move(sol);

      const bool tau_ok = std::abs(tau - tau_lag) <=
                          opts.picard_tol * (1.0 + std::abs(tau));
      const bool h_ok =
          std::abs(hnew - h_lag) <= opts.picard_tol * (1.0 + std::abs(hnew));
      if (tau_ok && h_ok && it >= opts.picard_min) {
        done = true;
        break;
      }
      tau_lag = tau;
      h_lag = hnew;
    }
    if (!done)
      throw PicardError("slice iteration did not converge in the march");

    // remainder absorbed by this slice, written with the lagged pair the
    // final solve actually used so the linear march closes exactly
    for (int j = 0; j < I; ++j) {
      const int i = j + 1;
      const double zt = (znew[static_cast<size_t>(j)] - zc[static_cast<size_t>(j)]) / dt;
      const double left = (j > 0) ? znew[static_cast<size_t>(j - 1)] : 0.0;
      const double right = (j + 1 < I) ? znew[static_cast<size_t>(j + 1)] : 0.0;
      const double zx = (right - left) / (2.0 * dx);
      out.f1_applied.at(k, i) =
          -(2.0 * h_lag / beta) * zt - coeffs.grid.x(i) * tau_lag * zx / beta;
    }

    zc = std::move(znew);
    h = hnew;
    for (int j = 0; j < I; ++j) out.z.at(k, j + 1) = zc[static_cast<size_t>(j)];
    out.h[static_cast<size_t>(k)] = h;
    out.trace[static_cast<size_t>(k)] = tau;
  }
  return out;
}

}  // namespace stefan
