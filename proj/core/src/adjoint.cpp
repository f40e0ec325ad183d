#include "stefan/adjoint.hpp"

#include <cmath>

#include "stefan/errors.hpp"
#include "stefan/numerics.hpp"

namespace stefan {

namespace {

double full_inner(const Field2D& coef, int level, std::span<const double> f,
                  double dx) {
  const int n = static_cast<int>(f.size());
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    const double wq = (i == 0 || i == n - 1) ? 0.5 * dx : dx;
    acc += wq * coef.at(level, i) * f[static_cast<size_t>(i)];
  }
  return acc;
}

}  // namespace

AdjointTrajectory solve_adjoint(const CoefficientSet& coeffs,
                                std::span<const double> phi_T, double gamma_T,
                                const AdjointOptions& opts) {
  const int n = coeffs.grid.n;
  const int m = coeffs.time.m;
  if (static_cast<int>(phi_T.size()) != n)
    throw DimensionError("terminal profile does not match the grid");
  const double dx = coeffs.grid.dx();
  const double dt = coeffs.time.dt();
  const int I = n - 2;

  double scale = 1.0 + std::abs(gamma_T);
  for (double v : phi_T) scale = std::max(scale, std::abs(v));
  if (std::abs(phi_T[0]) > opts.compat_tol * scale)
    throw CompatibilityError("terminal profile must vanish at x = -1");
  const double coupled =
      opts.compat_coefficient * gamma_T + full_inner(coeffs.coupling, m, phi_T, dx);
  if (std::abs(phi_T[static_cast<size_t>(n - 1)] - coupled) >
      opts.compat_tol * scale)
    throw CompatibilityError(
        "terminal profile and front multiplier are incompatible");

  AdjointTrajectory out;
  out.grid = coeffs.grid;
  out.time = coeffs.time;
  out.phi = Field2D(m + 1, n);
  out.gamma.assign(static_cast<size_t>(m) + 1, 0.0);
  for (int i = 0; i < n; ++i) out.phi.at(m, i) = phi_T[static_cast<size_t>(i)];
  out.gamma[static_cast<size_t>(m)] = gamma_T;

  std::vector<double> lower(static_cast<size_t>(I)), diag(static_cast<size_t>(I)),
      upper(static_cast<size_t>(I));
  std::vector<double> rhs0(static_cast<size_t>(I)), rhs1(static_cast<size_t>(I));
  std::vector<double> f0(static_cast<size_t>(n)), f1v(static_cast<size_t>(n));

  for (int k = m - 1; k >= 0; --k) {
    const double q = coeffs.qbar[static_cast<size_t>(k)];
    const double zero = coeffs.a.at(k, n - 1);
    const double rxx = dt / (dx * dx);
    for (int j = 0; j < I; ++j) {
      const double adv = coeffs.a.at(k, j + 1) * dt / (2.0 * dx);
      lower[static_cast<size_t>(j)] = -rxx + adv;
      diag[static_cast<size_t>(j)] = q + 2.0 * rxx + dt * zero;
      upper[static_cast<size_t>(j)] = -rxx - adv;
    }
    TridiagonalFactor lu(lower, diag, upper);

    const double t = coeffs.time.t(k);
    double g2 = 0.0;
    if (opts.g2) g2 += opts.g2(t);
    if (opts.g2_grid) g2 += (*opts.g2_grid)[static_cast<size_t>(k)];
    for (int j = 0; j < I; ++j) {
      double g1 = 0.0;
      if (opts.g1) g1 += opts.g1(coeffs.grid.x(j + 1), t);
      if (opts.g1_grid) g1 += opts.g1_grid->at(k, j + 1);
      rhs0[static_cast<size_t>(j)] = q * out.phi.at(k + 1, j + 1) + dt * g1;
      rhs1[static_cast<size_t>(j)] = 0.0;
    }
    // influence of a unit boundary value at x = 1 on the last interior row
    rhs1[static_cast<size_t>(I - 1)] = -upper[static_cast<size_t>(I - 1)];
    lu.solve(rhs0);
    lu.solve(rhs1);

    f0[0] = 0.0;
    f1v[0] = 0.0;
    for (int j = 0; j < I; ++j) {
      f0[static_cast<size_t>(j + 1)] = rhs0[static_cast<size_t>(j)];
      f1v[static_cast<size_t>(j + 1)] = rhs1[static_cast<size_t>(j)];
    }
    f0[static_cast<size_t>(n - 1)] = 0.0;
    f1v[static_cast<size_t>(n - 1)] = 1.0;

    const double n0 = full_inner(coeffs.coupling, k, f0, dx);
    const double n1 = full_inner(coeffs.coupling, k, f1v, dx);
    const double r0 = full_inner(coeffs.load, k, f0, dx);
    const double r1 = full_inner(coeffs.load, k, f1v, dx);

    const double den = 1.0 - n1 + dt * r1;
    if (std::abs(den) < 1e-8)
      throw ConditioningError(
          "nonlocal boundary reduction is nearly singular");
    const double gnext = out.gamma[static_cast<size_t>(k + 1)];
    const double phib = (n0 + gnext - dt * r0 - dt * g2) / den;
    const double gamma = gnext - dt * (r0 + phib * r1 + g2);

    out.phi.at(k, 0) = 0.0;
    for (int j = 0; j < I; ++j)
      out.phi.at(k, j + 1) =
          rhs0[static_cast<size_t>(j)] + phib * rhs1[static_cast<size_t>(j)];
    out.phi.at(k, n - 1) = phib;
    out.gamma[static_cast<size_t>(k)] = gamma;
  }
  return out;
}

DualityData random_duality_data(const CoefficientSet& coeffs,
                                RandomStream& rng) {
  const int n = coeffs.grid.n;
  const int m = coeffs.time.m;
  DualityData d;
  d.z0.assign(static_cast<size_t>(n), 0.0);
  for (int i = 1; i < n - 1; ++i) d.z0[static_cast<size_t>(i)] = rng.uniform(-1.0, 1.0);
  d.h0 = rng.uniform(-1.0, 1.0);
  d.f1 = Field2D(m + 1, n);
  d.w = Field2D(m + 1, n);
  d.g1 = Field2D(m + 1, n);
  d.f2.assign(static_cast<size_t>(m) + 1, 0.0);
  d.g2.assign(static_cast<size_t>(m) + 1, 0.0);
  for (int k = 0; k <= m; ++k) {
    for (int i = 1; i < n - 1; ++i) {
      d.f1.at(k, i) = rng.uniform(-1.0, 1.0);
      d.w.at(k, i) = rng.uniform(-1.0, 1.0);
      d.g1.at(k, i) = rng.uniform(-1.0, 1.0);
    }
    d.f2[static_cast<size_t>(k)] = rng.uniform(-1.0, 1.0);
    d.g2[static_cast<size_t>(k)] = rng.uniform(-1.0, 1.0);
  }
  d.xi.assign(static_cast<size_t>(n - 1), 0.0);
  for (auto& v : d.xi) v = rng.uniform(-1.0, 1.0);
  return d;
}

double DualityReport::gap() const {
  const double scale = std::max({std::abs(lhs), std::abs(rhs), 1e-30});
  return std::abs(lhs - rhs) / scale;
}

DualityReport duality_gap_discrete(const CoefficientSet& coeffs,
                                   const DualityData& data) {
  const int m = coeffs.time.m;
  StepOperator op(coeffs);
  const int I = op.interior_size();
  const int S = op.state_size();
  const double dt = coeffs.time.dt();

  LinearSources src;
  src.f1_grid = &data.f1;
  src.control_grid = &data.w;
  src.f2_grid = &data.f2;
  auto fwd = solve_linearized(coeffs, data.z0, data.h0, src);

  auto state_at = [&](int k) {
    std::vector<double> s(static_cast<size_t>(S));
    for (int j = 0; j < I; ++j) s[static_cast<size_t>(j)] = fwd.z.at(k, j + 1);
    s[static_cast<size_t>(I)] = fwd.h[static_cast<size_t>(k)];
    return s;
  };

  // backward weighted dual march: psi^k = W Phi^k
  std::vector<std::vector<double>> psi(static_cast<size_t>(m) + 1);
  {
    std::vector<double> rhs(static_cast<size_t>(S));
    for (int j = 0; j < S; ++j)
      rhs[static_cast<size_t>(j)] = op.weight(j) * data.xi[static_cast<size_t>(j)];
    psi[static_cast<size_t>(m)] = op.solve_m_transpose(m, rhs);
    for (int k = m - 1; k >= 1; --k) {
      std::vector<double> carried(static_cast<size_t>(S));
      op.apply_e(k + 1, psi[static_cast<size_t>(k + 1)], carried);
      for (int j = 0; j < I; ++j)
        carried[static_cast<size_t>(j)] +=
            dt * op.weight(j) * data.g1.at(k, j + 1);
      carried[static_cast<size_t>(I)] +=
          dt * op.weight(I) * data.g2[static_cast<size_t>(k)];
      psi[static_cast<size_t>(k)] = op.solve_m_transpose(k, carried);
    }
  }

  DualityReport rep;
  for (int k = 1; k <= m; ++k) {
    const auto& pk = psi[static_cast<size_t>(k)];
    double acc = 0.0;
    for (int j = 0; j < I; ++j)
      acc += (data.f1.at(k, j + 1) + data.w.at(k, j + 1)) * pk[static_cast<size_t>(j)];
    acc += data.f2[static_cast<size_t>(k)] * pk[static_cast<size_t>(I)];
    rep.lhs += dt * acc;
  }

  const auto xm = state_at(m);
  for (int j = 0; j < S; ++j)
    rep.rhs += op.weight(j) * xm[static_cast<size_t>(j)] * data.xi[static_cast<size_t>(j)];
  {
    const auto x0 = state_at(0);
    std::vector<double> e1psi(static_cast<size_t>(S));
    op.apply_e(1, psi[1], e1psi);
    for (int j = 0; j < S; ++j)
      rep.rhs -= x0[static_cast<size_t>(j)] * e1psi[static_cast<size_t>(j)];
  }
  for (int k = 1; k <= m - 1; ++k) {
    const auto xk = state_at(k);
    double acc = 0.0;
    for (int j = 0; j < I; ++j)
      acc += op.weight(j) * xk[static_cast<size_t>(j)] * data.g1.at(k, j + 1);
    acc += op.weight(I) * xk[static_cast<size_t>(I)] * data.g2[static_cast<size_t>(k)];
    rep.rhs += dt * acc;
  }
  return rep;
}

DualityReport transposition_check(const CoefficientSet& coeffs,
                                  const SmoothDualityProblem& prob,
                                  const AdjointOptions& base_opts) {
  const int n = coeffs.grid.n;
  const int m = coeffs.time.m;
  const double dx = coeffs.grid.dx();
  const double dt = coeffs.time.dt();

  std::vector<double> phi_T(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) phi_T[static_cast<size_t>(i)] = prob.phi_T(coeffs.grid.x(i));
  // derive the terminal front multiplier so compatibility holds on this grid
  const double gamma_T =
      (phi_T[static_cast<size_t>(n - 1)] - full_inner(coeffs.coupling, m, phi_T, dx)) /
      base_opts.compat_coefficient;

  AdjointOptions opts = base_opts;
  opts.g1 = prob.g1;
  // the identity pairs h with +g2 when the multiplier law carries -g2
  opts.g2 = [&prob](double t) { return -prob.g2(t); };
  auto adj = solve_adjoint(coeffs, phi_T, gamma_T, opts);

  std::vector<double> z0(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) z0[static_cast<size_t>(i)] = prob.z0(coeffs.grid.x(i));
  LinearSources src;
  src.f1 = prob.f1;
  src.f2 = prob.f2;
  src.control = prob.w;
  auto fwd = solve_linearized(coeffs, z0, prob.h0, src);

  auto pair_x = [&](int k, auto&& fval, const Field2D& phi) {
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
      const double wq = (i == 0 || i == n - 1) ? 0.5 * dx : dx;
      acc += wq * fval(i) * phi.at(k, i);
    }
    return acc;
  };

  DualityReport rep;
  double lhs_prev = 0.0, rhs_prev = 0.0;
  for (int k = 0; k <= m; ++k) {
    const double t = coeffs.time.t(k);
    const double lhs_k =
        pair_x(k, [&](int i) { return prob.f1(coeffs.grid.x(i), t) +
                                      prob.w(coeffs.grid.x(i), t); },
               adj.phi) +
        prob.f2(t) * adj.gamma[static_cast<size_t>(k)];
    const double rhs_k =
        pair_x(k, [&](int i) { return prob.g1(coeffs.grid.x(i), t); }, fwd.z) +
        fwd.h[static_cast<size_t>(k)] * prob.g2(t);
    if (k > 0) {
      rep.lhs += 0.5 * dt * (lhs_k + lhs_prev);
      rep.rhs += 0.5 * dt * (rhs_k + rhs_prev);
    }
    lhs_prev = lhs_k;
    rhs_prev = rhs_k;
  }

  auto state_pair = [&](int k, const std::vector<double>& phiv, double gam) {
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
      const double wq = (i == 0 || i == n - 1) ? 0.5 * dx : dx;
      acc += wq * fwd.z.at(k, i) * phiv[static_cast<size_t>(i)];
    }
    return coeffs.qbar[static_cast<size_t>(k)] * acc +
           fwd.h[static_cast<size_t>(k)] * gam;
  };
  std::vector<double> phi0(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) phi0[static_cast<size_t>(i)] = adj.phi.at(0, i);
  rep.rhs += state_pair(m, phi_T, gamma_T) - state_pair(0, phi0, adj.gamma[0]);
  return rep;
}

}  // namespace stefan
