#include <doctest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "stefan/errors.hpp"
#include "stefan/extended.hpp"
#include "stefan/linear_system.hpp"
#include "stefan/numerics.hpp"
#include "support/coefficients.hpp"

using namespace stefan;
using testsupport::Synthetic;

namespace {

std::vector<double> bump_profile(const SpaceGrid& g, double amp) {
  std::vector<double> z0(static_cast<size_t>(g.n));
  for (int i = 0; i < g.n; ++i) {
    const double x = g.x(i);
    z0[static_cast<size_t>(i)] =
        amp * std::sin(std::numbers::pi * (x + 1.0)) * std::exp(0.3 * x);
  }
  return z0;
}

Field2D bump_control(const CoefficientSet& cs, double amp) {
  Field2D w(cs.time.m + 1, cs.grid.n);
  for (int k = 0; k <= cs.time.m; ++k) {
    const double t = cs.time.t(k);
    for (int i = 0; i < cs.grid.n; ++i) {
      const double x = cs.grid.x(i);
      if (x <= -0.7 || x >= -0.3) continue;
      const double s = (x + 0.7) / 0.4;
      w.at(k, i) = amp * std::sin(std::numbers::pi * s) * std::cos(2.0 * t);
    }
  }
  return w;
}

}  // namespace

TEST_CASE("zero data and zero control stay identically zero") {
  auto cs = Synthetic::build(41, 30, 0.5);
  std::vector<double> z0(41, 0.0);
  auto traj = solve_extended_nonlinear(cs, z0, 0.0, nullptr, ExtendedOptions{});
  for (double v : traj.z.v) CHECK(v == 0.0);
  for (double v : traj.h) CHECK(v == 0.0);
  for (double v : traj.f1_applied.v) CHECK(v == 0.0);
}

TEST_CASE("discrete front law holds exactly along the nonlinear march") {
  auto cs = Synthetic::build(61, 60, 0.6);
  auto z0 = bump_profile(cs.grid, 0.4);
  ExtendedOptions opts;
  opts.source_h = [](double t) { return 0.1 * std::sin(t); };
  auto traj = solve_extended_nonlinear(cs, z0, 0.2, nullptr, opts);
  const double dt = cs.time.dt();
  for (int k = 1; k <= 60; ++k) {
    const double lhs =
        traj.h[static_cast<size_t>(k)] - traj.h[static_cast<size_t>(k - 1)];
    const double rhs = dt * (0.1 * std::sin(cs.time.t(k)) -
                             traj.trace[static_cast<size_t>(k)]);
    CHECK(std::abs(lhs - rhs) <= 1e-14 * (1.0 + std::abs(lhs)));
  }
}

namespace {

struct ExtendedManufactured {
  double beta;
  double zs(double x, double t) const {
    return 0.4 * std::exp(-t) * std::sin(0.5 * std::numbers::pi * (1.0 - x));
  }
  double zs_t(double x, double t) const { return -zs(x, t); }
  double zs_x(double x, double t) const {
    return -0.2 * std::numbers::pi * std::exp(-t) *
           std::cos(0.5 * std::numbers::pi * (1.0 - x));
  }
  double zs_xx(double x, double t) const {
    return -0.25 * std::numbers::pi * std::numbers::pi * zs(x, t);
  }
  double tau(double t) const { return -0.2 * std::numbers::pi * std::exp(-t); }
  double hs(double t) const { return 0.3 * std::cos(t); }
  double hs_t(double t) const { return -0.3 * std::sin(t); }

  double F(double x, double t) const {
    return (Synthetic::q(t) + 2.0 * hs(t) / beta) * zs_t(x, t) - zs_xx(x, t) +
           (Synthetic::a(x, t) + x * tau(t) / beta) * zs_x(x, t) +
           Synthetic::coupling(x, t) * tau(t) + Synthetic::load(x, t) * hs(t);
  }
  double G(double t) const { return hs_t(t) + tau(t); }
};

double extended_mms_error(int n, int m, double T) {
  const double beta = 0.9;
  auto cs = Synthetic::build(n, m, T, beta);
  ExtendedManufactured mf{beta};
  ExtendedOptions opts;
  opts.source_z = [&](double x, double t) { return mf.F(x, t); };
  opts.source_h = [&](double t) { return mf.G(t); };
  std::vector<double> z0(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) z0[static_cast<size_t>(i)] = mf.zs(cs.grid.x(i), 0.0);
  auto traj = solve_extended_nonlinear(cs, z0, mf.hs(0.0), nullptr, opts);
  double e = std::abs(traj.h[static_cast<size_t>(m)] - mf.hs(T));
  for (int i = 0; i < n; ++i)
    e = std::max(e, std::abs(traj.z.at(m, i) - mf.zs(cs.grid.x(i), T)));
  return e;
}

}  // namespace

TEST_CASE("nonlinear march converges at combined second order") {
  const double e1 = extended_mms_error(81, 80, 0.5);
  const double e2 = extended_mms_error(161, 320, 0.5);
  CHECK(fit_order(e1, e2) >= 1.8);
  CHECK(e2 <= 2e-4);
}

TEST_CASE("recorded remainder closes the linear march exactly") {
  auto cs = Synthetic::build(81, 100, 0.7);
  auto z0 = bump_profile(cs.grid, 0.5);
  auto w = bump_control(cs, 0.8);
  auto nl = solve_extended_nonlinear(cs, z0, 0.25, &w, ExtendedOptions{});

  LinearSources src;
  src.f1_grid = &nl.f1_applied;
  src.control_grid = &w;
  auto lin = solve_linearized(cs, z0, 0.25, src);

  double gap = 0.0;
  for (int k = 0; k <= 100; ++k) {
    for (int i = 0; i < 81; ++i)
      gap = std::max(gap, std::abs(nl.z.at(k, i) - lin.z.at(k, i)));
    gap = std::max(gap, std::abs(nl.h[static_cast<size_t>(k)] -
                                 lin.h[static_cast<size_t>(k)]));
  }
  CHECK(gap <= 1e-10);
}

TEST_CASE("departure from the linear march scales quadratically") {
  auto cs = Synthetic::build(61, 80, 0.5);
  auto departure = [&](double eps) {
    auto z0 = bump_profile(cs.grid, eps);
    auto w = bump_control(cs, eps);
    auto nl = solve_extended_nonlinear(cs, z0, 0.2 * eps, &w,
                                       ExtendedOptions{});
    LinearSources src;
    src.control_grid = &w;
    auto lin = solve_linearized(cs, z0, 0.2 * eps, src);
    double gap = 0.0;
    for (int k = 0; k <= 80; ++k) {
      for (int i = 0; i < 61; ++i)
        gap = std::max(gap, std::abs(nl.z.at(k, i) - lin.z.at(k, i)));
      gap = std::max(gap, std::abs(nl.h[static_cast<size_t>(k)] -
                                   lin.h[static_cast<size_t>(k)]));
    }
    return gap;
  };
  const double d1 = departure(1e-2);
  const double d2 = departure(1e-3);
  const double slope = std::log10(d1 / d2);
  CHECK(slope >= 1.7);
  CHECK(slope <= 2.3);
}

TEST_CASE("leaving the admissible front range raises an error") {
  auto cs = Synthetic::build(41, 30, 0.5);
  std::vector<double> z0(41, 0.0);
  ExtendedOptions opts;
  opts.q_star = 0.999;
  CHECK_THROWS_AS((void)solve_extended_nonlinear(cs, z0, -0.01, nullptr, opts),
                  AdmissibilityError);
}
