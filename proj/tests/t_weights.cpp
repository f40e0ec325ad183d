#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "stefan/errors.hpp"
#include "stefan/numerics.hpp"
#include "stefan/weights.hpp"

using namespace stefan;

TEST_CASE("shape function frozen values and geometry") {
  auto eta = build_eta(-0.6, -0.4, 1.0, 1.0);
  CHECK(eta.value(-0.5) == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(eta.slope(-1.0) == doctest::Approx(7.5).epsilon(1e-14));
  CHECK(eta.value(-1.0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(eta.value(1.0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(eta.max() == doctest::Approx(2.0));

  // C2 glue at the plateau edges: slope and curvature vanish there
  CHECK(std::abs(eta.slope(-0.6)) <= 1e-14);
  CHECK(std::abs(eta.curvature(-0.6)) <= 1e-13);
  CHECK(std::abs(eta.slope(-0.4)) <= 1e-14);

  // positive, min at the endpoints, slope nonzero off the closed plateau
  for (int i = 0; i <= 400; ++i) {
    const double x = -1.0 + 2.0 * i / 400.0;
    CHECK(eta.value(x) >= 1.0 - 1e-14);
    CHECK(eta.value(x) <= 2.0 + 1e-14);
    if (x < -0.6 - 1e-9 || x > -0.4 + 1e-9) CHECK(std::abs(eta.slope(x)) > 0.0);
  }

  CHECK_THROWS_AS((void)build_eta(-0.4, -0.6, 1.0, 1.0), GeometryError);
  CHECK_THROWS_AS((void)build_eta(-0.6, 0.1, 1.0, 1.0), GeometryError);
  CHECK_THROWS_AS((void)build_eta(-0.6, -0.4, 0.0, 1.0), GeometryError);
}

TEST_CASE("parameter thresholds") {
  auto eta = build_eta(-0.6, -0.4, 0.05, 0.05);
  CHECK(lambda_floor(eta, 4.0) ==
        doctest::Approx(std::log(2.0) / (0.1 * 3.0)).epsilon(1e-13));

  auto big = build_eta(-0.6, -0.4, 1.0, 1.0);
  CHECK(lambda_floor(big, 2.0) == doctest::Approx(1.0));  // ln2/2 < 1 clamps

  CarlemanParams req;
  req.m = 4.0;
  auto p = resolve_params(req, eta, 1.0);
  CHECK(p.lambda == doctest::Approx(lambda_floor(eta, 4.0)));
  CHECK(p.s == doctest::Approx(2.0));

  CarlemanParams bad_m;
  bad_m.m = 1.0;
  CHECK_THROWS_AS((void)resolve_params(bad_m, eta, 1.0), ParameterError);
  CarlemanParams low_lam;
  low_lam.lambda = 0.5;
  CHECK_THROWS_AS((void)resolve_params(low_lam, eta, 1.0), ParameterError);
  CarlemanParams low_s;
  low_s.s = 0.1;
  CHECK_THROWS_AS((void)resolve_params(low_s, eta, 1.0), ParameterError);
}

TEST_CASE("positivity margin frozen value") {
  // exp(lam m sup) - 2 exp(lam sup) + exp(lam eta(1)) at m=2, lam=1, sup=2
  auto eta = build_eta(-0.6, -0.4, 1.0, 1.0);
  CarlemanParams cp;
  cp.m = 2.0;
  cp.lambda = 1.0;
  auto tb = tabulate_weights(SpaceGrid::extended(41), TimeGrid{1.0, 20}, cp, eta);
  auto rep = check_weight_bounds(tb);
  const double expected = std::exp(4.0) - 2.0 * std::exp(2.0) + std::exp(1.0);
  CHECK(rep.positivity_margin == doctest::Approx(expected).epsilon(1e-13));
  CHECK(std::abs(rep.positivity_margin - 42.5383) <= 1e-3);
  CHECK(rep.positivity_margin > 0.0);
}

namespace {
WeightTable default_table(int n = 81, int m = 40, double T = 1.0) {
  auto eta = build_eta(-0.6, -0.4, 0.05, 0.05);
  CarlemanParams cp;
  cp.m = 4.0;
  return tabulate_weights(SpaceGrid::extended(n), TimeGrid{T, m}, cp, eta);
}
}  // namespace

TEST_CASE("weight table structure") {
  auto tb = default_table();
  const int m = tb.time.m, n = tb.grid.n;

  // degenerate levels carry +inf
  CHECK(!std::isfinite(tb.alpha.at(0, 3)));
  CHECK(!std::isfinite(tb.alpha.at(m, 3)));
  CHECK(std::isfinite(tb.zeta.at(0, 3)));
  CHECK(!std::isfinite(tb.zeta.at(m, 3)));

  for (int k = 1; k < m; ++k) {
    double amax = -1e300, xmin = 1e300;
    for (int i = 0; i < n; ++i) {
      amax = std::max(amax, tb.alpha.at(k, i));
      xmin = std::min(xmin, tb.xi.at(k, i));
      CHECK(tb.alpha.at(k, i) > 0.0);
      CHECK(tb.xi.at(k, i) > 0.0);
    }
    // hat quantities are the boundary values and the per-level extrema
    CHECK(tb.alpha_hat[static_cast<size_t>(k)] == doctest::Approx(amax));
    CHECK(tb.xi_hat[static_cast<size_t>(k)] == doctest::Approx(xmin));
    CHECK(tb.alpha.at(k, 0) == doctest::Approx(tb.alpha_hat[static_cast<size_t>(k)]));
    CHECK(tb.alpha.at(k, n - 1) ==
          doctest::Approx(tb.alpha_hat[static_cast<size_t>(k)]));
  }

  // on [T/2, T) the modified weights coincide bitwise with the original ones
  for (int k = 0; k < m; ++k) {
    if (tb.time.t(k) < 0.5 * tb.time.T || k == 0) continue;
    for (int i = 0; i < n; ++i) {
      CHECK(tb.zeta.at(k, i) == tb.alpha.at(k, i));
      CHECK(tb.mu.at(k, i) == tb.xi.at(k, i));
    }
  }

  // before T/2 the modified weights sit on their plateau: constant in time
  int k_first = 1;
  for (int k = 1; k < m; ++k) {
    if (tb.time.t(k) >= 0.5 * tb.time.T) break;
    for (int i = 0; i < n; ++i)
      CHECK(tb.zeta.at(k, i) == doctest::Approx(tb.zeta.at(k_first, i)));
    CHECK(tb.rho4_t[static_cast<size_t>(k)] == 0.0);
  }

  // alpha_interior_min matches a direct scan
  double amin = std::numeric_limits<double>::infinity();
  for (int k = 1; k < m; ++k)
    for (int i = 0; i < n; ++i) amin = std::min(amin, tb.alpha.at(k, i));
  CHECK(tb.alpha_interior_min == doctest::Approx(amin).epsilon(1e-13));
  CHECK(tb.log_shift == doctest::Approx(2.0 * tb.params.s * amin).epsilon(1e-13));
}

TEST_CASE("closed-form alpha derivatives match finite differences") {
  // Maximum relative gaps between the tabulated closed forms and centered
  // differences of the alpha table. Restricted to the mid-time band (the
  // weights blow up like 1/(t(T-t)) at the ends, where centered differences
  // lose accuracy as (dt/theta)^2) and kept two cells away from the
  // piecewise-cubic joints of eta.
  struct Gaps {
    double x, xx, t;
  };
  auto gaps_for = [](int n, int m) {
    auto tb = default_table(n, m, 1.0);
    const double dx = tb.grid.dx(), dt = tb.time.dt();
    Gaps g{0.0, 0.0, 0.0};
    for (int k = m / 10; k <= (9 * m) / 10; ++k) {
      for (int i = 2; i < n - 2; ++i) {
        const double x = tb.grid.x(i);
        // fixed physical margin so both resolutions measure the same region
        const bool near_joint = std::abs(x - tb.eta.c1) < 0.06 ||
                                std::abs(x - tb.eta.c2) < 0.06;
        const double fd_t = (tb.alpha.at(k + 1, i) - tb.alpha.at(k - 1, i)) / (2 * dt);
        g.t = std::max(g.t, std::abs(tb.alpha_t.at(k, i) - fd_t) /
                                (std::abs(fd_t) + 1.0));
        if (near_joint) continue;
        const double fd_x = (tb.alpha.at(k, i + 1) - tb.alpha.at(k, i - 1)) / (2 * dx);
        g.x = std::max(g.x, std::abs(tb.alpha_x.at(k, i) - fd_x) /
                                (std::abs(fd_x) + 1.0));
        const double fd_xx = (tb.alpha.at(k, i + 1) - 2 * tb.alpha.at(k, i) +
                              tb.alpha.at(k, i - 1)) /
                             (dx * dx);
        g.xx = std::max(g.xx, std::abs(tb.alpha_xx.at(k, i) - fd_xx) /
                                  (std::abs(fd_xx) + 1.0));
      }
    }
    return g;
  };
  const Gaps coarse = gaps_for(101, 100);
  const Gaps fine = gaps_for(201, 200);
  CHECK(fine.x <= 2e-2);
  CHECK(fine.xx <= 2e-2);
  CHECK(fine.t <= 2e-2);
  CHECK(fit_order(coarse.x, fine.x) >= 1.5);
  CHECK(fit_order(coarse.xx, fine.xx) >= 1.5);
  CHECK(fit_order(coarse.t, fine.t) >= 1.5);
}

TEST_CASE("weight bounds are finite at the defaults") {
  auto tb = default_table();
  auto rep = check_weight_bounds(tb);
  CHECK(rep.all_finite);
  CHECK(rep.positivity_margin > 0.0);
  CHECK(rep.min_slope_outside > 0.0);
  CHECK(std::isfinite(rep.sup_rho4_over_rho3));
  CHECK(std::isfinite(rep.sup_rho4_over_rho2));
  CHECK(std::isfinite(rep.sup_rho4t_over_rho0));
  CHECK(rep.sup_rho4_over_rho3 > 0.0);

  // rho weights decay monotonically after T/2: log rho0 nondecreasing
  for (int k = 1; k < tb.time.m; ++k) {
    CHECK(tb.log_rho0[static_cast<size_t>(k)] >=
          tb.log_rho0[static_cast<size_t>(k - 1)] - 1e-12);
  }
}

TEST_CASE("stiff parameter corners stay analyzable through logs") {
  auto eta = build_eta(-0.6, -0.4, 0.05, 0.05);
  CarlemanParams cp;
  cp.m = 4.0;
  cp.lambda = 2.0 * lambda_floor(eta, 4.0);
  cp.s = 4.0 * 2.0;  // 4 s0 (T + T^2) at T = 1
  auto tb = tabulate_weights(SpaceGrid::extended(81), TimeGrid{1.0, 40}, cp, eta);
  auto rep = check_weight_bounds(tb);
  CHECK(rep.all_finite);
  CHECK(std::isfinite(tb.log_shift));
}
