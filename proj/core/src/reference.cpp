#include "stefan/reference.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "stefan/errors.hpp"
#include "stefan/numerics.hpp"
#include "stefan/transform.hpp"

namespace stefan {

namespace {
const double kSqrtPi = std::sqrt(std::numbers::pi);
}

double SimilaritySolution::ell(double t) const {
  return 2.0 * k * std::sqrt(t + t0);
}

double SimilaritySolution::q(double t) const {
  return 4.0 * k * k * (t + t0);
}

double SimilaritySolution::u(double x, double t) const {
  return V * (1.0 - std::erf(x / (2.0 * std::sqrt(t + t0))) / std::erf(k));
}

double SimilaritySolution::p(double y) const {
  return V * (1.0 - std::erf(k * y) / std::erf(k));
}

double SimilaritySolution::p_y(double y) const {
  return -V * 2.0 * k * std::exp(-k * k * y * y) / (kSqrtPi * std::erf(k));
}

SimilaritySolution solve_similarity(double V, double beta, double t0) {
  if (V <= 0.0 || beta <= 0.0 || t0 <= 0.0)
    throw AdmissibilityError(
        "solve_similarity: V, beta, t0 must be positive, got V = " +
        std::to_string(V) + ", beta = " + std::to_string(beta) +
        ", t0 = " + std::to_string(t0));
  const double target = V / beta;
  auto f = [&](double k) {
    return kSqrtPi * k * std::exp(k * k) * std::erf(k) - target;
  };
  double lo = 0.0, hi = 1.0;
  while (f(hi) < 0.0) {
    hi *= 2.0;
    if (hi > 32.0)
      throw AdmissibilityError("solve_similarity: no root below k = 32");
  }
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (f(mid) < 0.0)
      lo = mid;
    else
      hi = mid;
    if (hi - lo <= 1e-16 * hi) break;
  }
  SimilaritySolution sim;
  sim.V = V;
  sim.beta = beta;
  sim.t0 = t0;
  sim.k = 0.5 * (lo + hi);
  return sim;
}

CylinderHistory solve_cylinder_stefan(std::span<const double> p0, double q0,
                                      const std::function<double(double)>& v,
                                      const SpaceGrid& grid,
                                      const TimeGrid& time, double beta,
                                      const CylinderOptions& opts) {
  const int n = grid.n;
  if (static_cast<int>(p0.size()) != n)
    throw DimensionError("solve_cylinder_stefan: p0 does not match the grid");
  if (n < 5) throw DimensionError("solve_cylinder_stefan: grid too coarse");
  if (beta <= 0.0)
    throw AdmissibilityError("solve_cylinder_stefan: beta must be positive");
  if (!(q0 > opts.q_star))
    throw AdmissibilityError("solve_cylinder_stefan: q0 = " +
                             std::to_string(q0) + " not above q* = " +
                             std::to_string(opts.q_star));

  const double dx = grid.dx();
  const double dt = time.dt();
  const int m = time.m;
  const bool euler = opts.q_rule == CylinderOptions::QRule::backward_euler;

  CylinderHistory hist;
  hist.grid = grid;
  hist.time = time;
  hist.p = Field2D(m + 1, n);
  hist.q.assign(static_cast<size_t>(m + 1), 0.0);
  hist.trace1.assign(static_cast<size_t>(m + 1), 0.0);

  for (int i = 0; i < n; ++i) hist.p.at(0, i) = p0[static_cast<size_t>(i)];
  hist.q[0] = q0;
  hist.trace1[0] = one_sided_trace_derivative(p0, dx, +1);

  auto sq = [&](double t) { return opts.source_q ? opts.source_q(t) : 0.0; };

  const int ni = n - 2;  // interior nodes
  std::vector<double> lower(static_cast<size_t>(ni)),
      diag(static_cast<size_t>(ni)), upper(static_cast<size_t>(ni)),
      rhs_base(static_cast<size_t>(ni)), sol(static_cast<size_t>(ni));
  std::vector<double> p_new(static_cast<size_t>(n));

  for (int k = 1; k <= m; ++k) {
    const double t = time.t(k);
    const double vt = v ? v(t) : 0.0;
    const double r = dt / (dx * dx);
    auto prev = hist.p.slice(k - 1);
    const double tau_prev = hist.trace1[static_cast<size_t>(k - 1)];

    auto q_next = [&](double tau) {
      if (euler) return hist.q[static_cast<size_t>(k - 1)] +
                        dt * (sq(t) - 2.0 * tau) / beta;
      return hist.q[static_cast<size_t>(k - 1)] +
             0.5 * dt *
                 ((sq(t) - 2.0 * tau) +
                  (sq(time.t(k - 1)) - 2.0 * tau_prev)) /
                 beta;
    };

    for (int i = 0; i < ni; ++i)
      rhs_base[static_cast<size_t>(i)] =
          dt * (opts.source_p ? opts.source_p(grid.x(i + 1), t) : 0.0);

    double tau = tau_prev;
    bool done = false;
    for (int it = 1; it <= opts.picard_max; ++it) {
      const double q_star_val = q_next(tau);
      if (!(q_star_val > opts.q_star) || !std::isfinite(q_star_val))
        throw AdmissibilityError(
            "solve_cylinder_stefan: front left the admissible range at step " +
            std::to_string(k) + " (q = " + std::to_string(q_star_val) + ")");

      for (int i = 0; i < ni; ++i) {
        const double x = grid.x(i + 1);
        const double c = dt * x * tau / (beta * 2.0 * dx);
        lower[static_cast<size_t>(i)] = -r - c;
        diag[static_cast<size_t>(i)] = q_star_val + 2.0 * r;
        upper[static_cast<size_t>(i)] = -r + c;
        sol[static_cast<size_t>(i)] =
            q_star_val * prev[static_cast<size_t>(i + 1)] +
            rhs_base[static_cast<size_t>(i)];
      }
      sol[0] -= lower[0] * vt;

      TridiagonalFactor F(lower, diag, upper);
      F.solve(sol);

      p_new[0] = vt;
      for (int i = 0; i < ni; ++i)
        p_new[static_cast<size_t>(i + 1)] = sol[static_cast<size_t>(i)];
      p_new[static_cast<size_t>(n - 1)] = 0.0;

      const double tau_new = one_sided_trace_derivative(p_new, dx, +1);
      const double dq = std::abs(q_next(tau_new) - q_star_val);
      const bool conv = std::abs(tau_new - tau) <=
                            opts.picard_tol * (1.0 + std::abs(tau_new)) &&
                        dq <= opts.picard_tol * (1.0 + std::abs(q_star_val));
      tau = tau_new;
      if (conv && it >= opts.picard_min) {
        done = true;
        break;
      }
    }
    if (!done)
      throw PicardError(
          "solve_cylinder_stefan: trace iteration did not converge at step " +
          std::to_string(k));

    for (int i = 0; i < n; ++i)
      hist.p.at(k, i) = p_new[static_cast<size_t>(i)];
    hist.trace1[static_cast<size_t>(k)] = tau;
    hist.q[static_cast<size_t>(k)] = q_next(tau);
  }
  return hist;
}

double cylinder_residual(const CylinderHistory& hist, double beta,
                         const CylinderOptions& opts) {
  const int n = hist.grid.n, m = hist.time.m;
  const double dx = hist.grid.dx(), dt = hist.time.dt();
  double worst = 0.0;
  for (int k = 1; k < m; ++k) {
    const double t = hist.time.t(k);
    const double tau = hist.trace1[static_cast<size_t>(k)];
    for (int i = 1; i < n - 1; ++i) {
      const double pt = (hist.p.at(k + 1, i) - hist.p.at(k - 1, i)) / (2 * dt);
      const double pxx =
          (hist.p.at(k, i + 1) - 2 * hist.p.at(k, i) + hist.p.at(k, i - 1)) /
          (dx * dx);
      const double px = (hist.p.at(k, i + 1) - hist.p.at(k, i - 1)) / (2 * dx);
      const double sp = opts.source_p ? opts.source_p(hist.grid.x(i), t) : 0.0;
      const double res = hist.q[static_cast<size_t>(k)] * pt - pxx +
                         (hist.grid.x(i) / beta) * tau * px - sp;
      worst = std::max(worst, std::abs(res));
    }
    const double qt =
        (hist.q[static_cast<size_t>(k + 1)] - hist.q[static_cast<size_t>(k - 1)]) /
        (2 * dt);
    const double sqv = opts.source_q ? opts.source_q(t) : 0.0;
    worst = std::max(worst, std::abs(beta * qt + 2.0 * tau - sqv));
  }
  return worst;
}

namespace {

void fill_derivative_fields(ReferenceTrajectory& ref) {
  const int m = ref.time.m, n = ref.ext.n;
  const double dt = ref.time.dt(), dx = ref.ext.dx();
  ref.p_x = Field2D(m + 1, n);
  ref.p_t = Field2D(m + 1, n);
  for (int k = 0; k <= m; ++k) {
    const auto d = central_derivative(ref.p.slice(k), dx);
    for (int i = 0; i < n; ++i) ref.p_x.at(k, i) = d[static_cast<size_t>(i)];
  }
  if (ref.centered_pt) {
    for (int i = 0; i < n; ++i) {
      ref.p_t.at(0, i) =
          (-3.0 * ref.p.at(0, i) + 4.0 * ref.p.at(1, i) - ref.p.at(2, i)) /
          (2 * dt);
      for (int k = 1; k < m; ++k)
        ref.p_t.at(k, i) = (ref.p.at(k + 1, i) - ref.p.at(k - 1, i)) / (2 * dt);
      ref.p_t.at(m, i) =
          (3.0 * ref.p.at(m, i) - 4.0 * ref.p.at(m - 1, i) + ref.p.at(m - 2, i)) /
          (2 * dt);
    }
  } else {
    for (int i = 0; i < n; ++i) {
      ref.p_t.at(0, i) = (ref.p.at(1, i) - ref.p.at(0, i)) / dt;
      for (int k = 1; k <= m; ++k)
        ref.p_t.at(k, i) = (ref.p.at(k, i) - ref.p.at(k - 1, i)) / dt;
    }
  }
}

}  // namespace

ReferenceTrajectory make_reference_trajectory(const ReferenceRequest& req,
                                              const SpaceGrid& ext,
                                              const TimeGrid& time) {
  if (ext.n % 2 == 0 || ext.a != -1.0 || ext.b != 1.0)
    throw DimensionError(
        "make_reference_trajectory: extended grid must span [-1,1] with an "
        "odd node count");
  ReferenceTrajectory ref;
  ref.kind = req.kind;
  ref.beta = req.beta;
  ref.ell_star = req.ell_star;
  ref.ext = ext;
  ref.unit = SpaceGrid::unit((ext.n + 1) / 2);
  ref.time = time;
  ref.centered_pt = req.centered_pt;

  const int m = time.m;
  const int nu = ref.unit.n;
  ref.p = Field2D(m + 1, ext.n);
  ref.q.assign(static_cast<size_t>(m + 1), 0.0);
  ref.trace1.assign(static_cast<size_t>(m + 1), 0.0);
  ref.v.assign(static_cast<size_t>(m + 1), 0.0);

  CylinderOptions opts = req.cylinder;
  opts.q_star = req.ell_star * req.ell_star;
  ref.cylinder = opts;
  ref.blend_width = req.blend_width;

  if (req.kind == ReferenceKind::neumann) {
    ref.similarity = solve_similarity(req.V, req.beta, req.t0);
    const double q0 = ref.similarity.q(0.0);
    if (!(std::sqrt(q0) > req.ell_star))
      throw AdmissibilityError(
          "make_reference_trajectory: initial front at or below ell*");
    std::vector<double> p0(static_cast<size_t>(nu));
    for (int i = 0; i < nu; ++i)
      p0[static_cast<size_t>(i)] = ref.similarity.p(ref.unit.x(i));
    auto hist = solve_cylinder_stefan(
        p0, q0, [&](double) { return req.V; }, ref.unit, time, req.beta, opts);
    for (int k = 0; k <= m; ++k) {
      const auto slice =
          extend_even_reflection(hist.p.slice(k), ref.unit, ext, req.blend_width);
      for (int i = 0; i < ext.n; ++i) ref.p.at(k, i) = slice[static_cast<size_t>(i)];
      ref.q[static_cast<size_t>(k)] = hist.q[static_cast<size_t>(k)];
      ref.trace1[static_cast<size_t>(k)] = hist.trace1[static_cast<size_t>(k)];
      ref.v[static_cast<size_t>(k)] = req.V;
    }
  } else {
    if (!req.numeric_p0)
      throw ConfigError(
          "make_reference_trajectory: numeric kind needs an initial profile");
    const SpaceGrid fine = SpaceGrid::extended(2 * ext.n - 1);
    const TimeGrid ftime{time.T, 2 * m};
    std::vector<double> p0(static_cast<size_t>(fine.n));
    for (int i = 0; i < fine.n; ++i)
      p0[static_cast<size_t>(i)] = req.numeric_p0(fine.x(i));
    auto hist = solve_cylinder_stefan(
        p0, req.numeric_q0, [](double) { return 0.0; }, fine, ftime, req.beta,
        opts);
    for (int k = 0; k <= m; ++k) {
      for (int i = 0; i < ext.n; ++i) ref.p.at(k, i) = hist.p.at(2 * k, 2 * i);
      ref.q[static_cast<size_t>(k)] = hist.q[static_cast<size_t>(2 * k)];
      ref.trace1[static_cast<size_t>(k)] =
          one_sided_trace_derivative(ref.p.slice(k), ext.dx(), +1);
      ref.v[static_cast<size_t>(k)] = ref.p.at(k, ref.mid());
    }
  }

  fill_derivative_fields(ref);
  return ref;
}

double reference_residual(const ReferenceTrajectory& ref) {
  const int m = ref.time.m;
  const int nu = ref.unit.n;
  const int mid = ref.mid();
  const double dx = ref.ext.dx(), dt = ref.time.dt();
  double worst = 0.0;
  for (int k = 1; k < m; ++k) {
    const double tau = ref.trace1[static_cast<size_t>(k)];
    for (int j = 1; j < nu - 1; ++j) {
      const int i = mid + j;
      const double pt = (ref.p.at(k + 1, i) - ref.p.at(k - 1, i)) / (2 * dt);
      const double pxx =
          (ref.p.at(k, i + 1) - 2 * ref.p.at(k, i) + ref.p.at(k, i - 1)) /
          (dx * dx);
      const double px = (ref.p.at(k, i + 1) - ref.p.at(k, i - 1)) / (2 * dx);
      const double res = ref.q[static_cast<size_t>(k)] * pt - pxx +
                         (ref.unit.x(j) / ref.beta) * tau * px;
      worst = std::max(worst, std::abs(res));
    }
    const double qt =
        (ref.q[static_cast<size_t>(k + 1)] - ref.q[static_cast<size_t>(k - 1)]) /
        (2 * dt);
    worst = std::max(worst, std::abs(ref.beta * qt + 2.0 * tau));
  }
  return worst;
}

}  // namespace stefan
