#include <doctest.h>

#include <cmath>
#include <vector>

#include "stefan/errors.hpp"
#include "stefan/numerics.hpp"
#include "stefan/transform.hpp"

using namespace stefan;

namespace {

FrontState sample_front(double ell, int n, double (*fn)(double)) {
  FrontState f;
  f.ell = ell;
  f.u.resize(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i)
    f.u[static_cast<size_t>(i)] = fn(ell * i / (n - 1.0));
  return f;
}

double cubic_profile(double x) { return (1.7 - x) * (x * x + 1.0); }
double wavy_profile(double x) { return std::sin(5.0 * x) * (1.7 - x); }

}  // namespace

TEST_CASE("physical/cylinder round trip is exact for cubic profiles") {
  const double ell = 1.7;
  const int n = 33;
  auto front = sample_front(ell, n, cubic_profile);
  const SpaceGrid unit = SpaceGrid::unit(n);
  auto cyl = physical_to_cylinder(front, unit);
  CHECK(cyl.q == doctest::Approx(ell * ell).epsilon(1e-14));
  auto back = cylinder_to_physical(cyl, unit, n);
  CHECK(back.ell == doctest::Approx(ell).epsilon(1e-14));
  for (int i = 0; i < n; ++i)
    CHECK(back.u[static_cast<size_t>(i)] ==
          doctest::Approx(front.u[static_cast<size_t>(i)]).epsilon(1e-12));
}

TEST_CASE("round-trip error decays at better than 2.7 order") {
  // The cylinder grid is deliberately non-conforming (n + 1 nodes) so that
  // both resampling hops interpolate at off-node points.
  auto rt_err = [](int n) {
    const double ell = 1.7;
    auto front = sample_front(ell, n, wavy_profile);
    const SpaceGrid unit = SpaceGrid::unit(n + 1);
    auto cyl = physical_to_cylinder(front, unit);
    auto back = cylinder_to_physical(cyl, unit, n);
    double e = 0.0;
    for (int i = 0; i < n; ++i)
      e = std::max(e, std::abs(back.u[static_cast<size_t>(i)] -
                               front.u[static_cast<size_t>(i)]));
    return e;
  };
  const double e41 = rt_err(41), e81 = rt_err(81), e161 = rt_err(161);
  CHECK(fit_order(e41, e81) >= 2.7);
  CHECK(fit_order(e81, e161) >= 2.7);
}

TEST_CASE("extension reflects evenly and corrects the interface slope") {
  const int nu = 41;
  const SpaceGrid unit = SpaceGrid::unit(nu);
  const SpaceGrid ext = SpaceGrid::extended(2 * nu - 1);
  std::vector<double> f(static_cast<size_t>(nu));
  for (int i = 0; i < nu; ++i) {
    const double y = unit.x(i);
    f[static_cast<size_t>(i)] = (1.0 - y) * (1.0 + y * y);
  }
  auto fe = extend_even_reflection(f, unit, ext, 0.25);

  // right half is carried over bitwise
  for (int i = 0; i < nu; ++i)
    CHECK(fe[static_cast<size_t>(nu - 1 + i)] == f[static_cast<size_t>(i)]);
  // vanishes at the far end because f(1) = 0
  CHECK(std::abs(fe.front()) <= 1e-14);
  // far from the interface the extension is the plain reflection
  for (int i = 0; i < nu / 2; ++i)
    CHECK(fe[static_cast<size_t>(i)] ==
          doctest::Approx(f[static_cast<size_t>(nu - 1 - i)]).epsilon(1e-13));
}

TEST_CASE("extension is C1 at the interface under refinement") {
  auto slope_gap = [](int nu) {
    const SpaceGrid unit = SpaceGrid::unit(nu);
    const SpaceGrid ext = SpaceGrid::extended(2 * nu - 1);
    std::vector<double> f(static_cast<size_t>(nu));
    for (int i = 0; i < nu; ++i) {
      const double y = unit.x(i);
      f[static_cast<size_t>(i)] = (1.0 - y) * std::exp(y);
    }
    auto fe = extend_even_reflection(f, unit, ext, 0.25);
    // centered slope across the interface vs the analytic one-sided slope
    const int mid = nu - 1;
    const double centered = (fe[static_cast<size_t>(mid + 1)] -
                             fe[static_cast<size_t>(mid - 1)]) /
                            (2.0 * ext.dx());
    const double exact = 0.0 * 1.0 + (1.0 - 0.0) * 1.0 - 1.0;  // d/dy[(1-y)e^y] at 0
    return std::abs(centered - exact);
  };
  const double g41 = slope_gap(41), g81 = slope_gap(81);
  CHECK(fit_order(g41, g81) >= 1.8);
}

TEST_CASE("perturbation round trip and admissibility") {
  const int nu = 21;
  const SpaceGrid unit = SpaceGrid::unit(nu);
  const SpaceGrid ext = SpaceGrid::extended(2 * nu - 1);
  const double beta = 0.7, qbar = 1.44, q_star = 0.01;

  std::vector<double> pbar(static_cast<size_t>(nu));
  for (int i = 0; i < nu; ++i) {
    const double y = unit.x(i);
    pbar[static_cast<size_t>(i)] = 0.5 * (1.0 - y);
  }
  CylinderState cyl;
  cyl.q = qbar + 0.02;
  cyl.p.resize(static_cast<size_t>(nu));
  for (int i = 0; i < nu; ++i) {
    const double y = unit.x(i);
    cyl.p[static_cast<size_t>(i)] =
        pbar[static_cast<size_t>(i)] + 0.01 * (1.0 - y) * y;
  }

  auto pert = to_perturbation(cyl, pbar, qbar, beta, unit, ext, 0.25);
  CHECK(pert.h == doctest::Approx(0.5 * beta * 0.02).epsilon(1e-14));
  auto back = from_perturbation(pert, pbar, qbar, beta, unit, q_star);
  CHECK(back.q == doctest::Approx(cyl.q).epsilon(1e-14));
  for (int i = 0; i < nu; ++i)
    CHECK(back.p[static_cast<size_t>(i)] ==
          doctest::Approx(cyl.p[static_cast<size_t>(i)]).epsilon(1e-13));

  PerturbationState bad = pert;
  bad.h = -0.5 * beta * (qbar - q_star) - 1.0;  // drives q below q_star
  CHECK_THROWS_AS((void)from_perturbation(bad, pbar, qbar, beta, unit, q_star),
                  AdmissibilityError);
}

TEST_CASE("initial_distance vanishes only at the reference") {
  const int nu = 31;
  const SpaceGrid unit = SpaceGrid::unit(nu);
  std::vector<double> pbar(static_cast<size_t>(nu));
  for (int i = 0; i < nu; ++i)
    pbar[static_cast<size_t>(i)] = 1.0 - unit.x(i);
  CylinderState same{pbar, 2.25};
  CHECK(initial_distance(same, pbar, 2.25, unit) == doctest::Approx(0.0));

  CylinderState moved{pbar, 2.4};
  const double d1 = initial_distance(moved, pbar, 2.25, unit);
  CHECK(d1 == doctest::Approx(std::sqrt(2.4) - 1.5).epsilon(1e-12));

  CylinderState bent = same;
  for (int i = 0; i < nu; ++i) {
    const double y = unit.x(i);
    bent.p[static_cast<size_t>(i)] += 0.05 * y * (1.0 - y);
  }
  CHECK(initial_distance(bent, pbar, 2.25, unit) > 0.0);
}

TEST_CASE("transform input validation") {
  FrontState f;
  f.ell = -1.0;
  f.u.assign(8, 0.0);
  CHECK_THROWS_AS((void)physical_to_cylinder(f, SpaceGrid::unit(8)),
                  AdmissibilityError);
  CHECK_THROWS_AS((void)SpaceGrid::extended(10), DimensionError);
}
