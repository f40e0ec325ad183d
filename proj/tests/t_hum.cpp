#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "doctest.h"
#include "stefan/errors.hpp"
#include "stefan/hum.hpp"
#include "stefan/linear_system.hpp"
#include "stefan/numerics.hpp"
#include "stefan/reference.hpp"
#include "stefan/rng.hpp"
#include "stefan/weights.hpp"

using namespace stefan;

namespace {

struct Frame {
  CoefficientSet cs;
  WeightTable tb;
};

Frame make_frame(int n, int m) {
  ReferenceRequest req;
  req.kind = ReferenceKind::neumann;
  req.V = 0.5;
  req.t0 = 0.25;
  const auto ref =
      make_reference_trajectory(req, SpaceGrid::extended(n), TimeGrid{1.0, m});
  Frame f;
  f.cs = stefan_coefficients(ref);
  f.tb = tabulate_weights(f.cs.grid, f.cs.time, CarlemanParams{},
                          build_eta(-0.6, -0.4, 0.05, 0.05));
  return f;
}

struct Draw {
  std::vector<double> z0;
  double h0 = 0.0;
  Field2D f1;
  std::vector<double> f2;
};

/// Random data from a fixed number of normal draws, so one seed describes
/// the same continuum data on every grid. The sources are smooth profiles
/// under the admissible envelope exp(-log rho3).
Draw make_draw(const Frame& f, RandomStream& rng) {
  const int n = f.cs.grid.n;
  const int m = f.cs.time.m;
  double a[6], zc[4];
  for (double& c : a) c = rng.normal();
  for (double& c : zc) c = rng.normal();
  const double h0 = rng.normal();

  Draw d;
  d.z0.assign(static_cast<size_t>(n), 0.0);
  for (int i = 0; i < n; ++i) {
    const double x = f.cs.grid.x(i);
    double s = 0.0;
    for (int q = 0; q < 4; ++q)
      s += 0.3 * zc[q] *
           std::sin((q + 1) * std::numbers::pi * (x + 1.0) / 2.0);
    d.z0[static_cast<size_t>(i)] = s;
  }
  d.h0 = 0.4 * h0;
  d.f1 = Field2D(m + 1, n);
  d.f2.assign(static_cast<size_t>(m) + 1, 0.0);
  for (int k = 0; k <= m; ++k) {
    const double t = f.cs.time.t(k);
    const double env = std::exp(-f.tb.log_rho3[static_cast<size_t>(k)]);
    for (int i = 0; i < n; ++i) {
      const double x = f.cs.grid.x(i);
      const double smooth = a[0] * std::sin(std::numbers::pi * x) +
                            a[1] * std::cos(2.0 * x + a[2] * t) +
                            0.5 * a[3] * x * (1.0 - x * x);
      d.f1.at(k, i) = env * smooth;
    }
    d.f2[static_cast<size_t>(k)] =
        env * (a[4] * std::sin(1.3 * t + 0.4) + 0.3 * a[5]);
  }
  return d;
}

ControlData make_data(const Draw& d) {
  ControlData data;
  data.z0 = d.z0;
  data.h0 = d.h0;
  data.f1 = &d.f1;
  data.f2 = &d.f2;
  return data;
}

}  // namespace

TEST_CASE("trace reconstruction closes the nonlocal constraint") {
  const Frame f = make_frame(41, 80);
  const int n = f.cs.grid.n;
  RandomStream rng(11);
  for (int level : {1, 20, 79}) {
    std::vector<double> interior(static_cast<size_t>(n - 2));
    for (double& c : interior) c = rng.uniform(-1.0, 1.0);
    const double gamma = rng.uniform(-1.0, 1.0);
    const double trace = constrained_trace(f.cs, level, interior, gamma);
    std::vector<double> phi(static_cast<size_t>(n), 0.0);
    for (int i = 1; i <= n - 2; ++i)
      phi[static_cast<size_t>(i)] = interior[static_cast<size_t>(i - 1)];
    phi[static_cast<size_t>(n - 1)] = trace;
    CHECK(constraint_residual(f.cs, level, phi, gamma) <= 1e-14);
  }
}

TEST_CASE("discrete duality pairs the forward march with the chain") {
  const Frame f = make_frame(61, 120);
  RandomStream rng(20260819);
  const Draw d = make_draw(f, rng);
  GramOperator gram(f.cs, f.tb, HumOptions{});
  const int K = gram.kept_levels();
  const int S = gram.slice_size();
  const int I = S - 1;
  const double dt = f.cs.time.dt();
  const double dx = f.cs.grid.dx();
  CHECK(K == f.cs.time.m);

  std::vector<double> psi(static_cast<size_t>(K) * S);
  for (double& c : psi) c = rng.uniform(-1.0, 1.0);

  LinearSources src;
  src.f1_grid = &d.f1;
  src.f2_grid = &d.f2;
  const auto traj = solve_linearized(f.cs, d.z0, d.h0, src);

  long double lhs = 0.0L;
  std::vector<double> u(static_cast<size_t>(S));
  for (int k = 1; k <= K; ++k) {
    gram.dual_chain(psi, k, u);
    long double s = 0.0L;
    for (int j = 0; j < I; ++j)
      s += static_cast<long double>(dx) * traj.z.at(k, j + 1) *
           u[static_cast<size_t>(j)];
    s += static_cast<long double>(traj.h[static_cast<size_t>(k)]) *
         u[static_cast<size_t>(I)];
    lhs += dt * s;
  }

  long double rhs = 0.0L;
  const double q1 = f.cs.qbar[1];
  for (int j = 0; j < I; ++j)
    rhs += static_cast<long double>(q1) * dx * d.z0[static_cast<size_t>(j) + 1] *
           psi[static_cast<size_t>(j)];
  rhs += static_cast<long double>(d.h0) * psi[static_cast<size_t>(I)];
  for (int k = 1; k <= K; ++k) {
    const size_t base = static_cast<size_t>(k - 1) * S;
    long double s = 0.0L;
    for (int j = 0; j < I; ++j)
      s += static_cast<long double>(dx) * d.f1.at(k, j + 1) *
           psi[base + static_cast<size_t>(j)];
    s += static_cast<long double>(d.f2[static_cast<size_t>(k)]) *
         psi[base + static_cast<size_t>(I)];
    rhs += dt * s;
  }

  const double gap =
      std::abs(static_cast<double>(lhs - rhs)) /
      std::max(std::abs(static_cast<double>(lhs)),
               std::abs(static_cast<double>(rhs)));
  CHECK(gap <= 1e-12);
}

TEST_CASE("the synthesis operator is symmetric and consistent") {
  const Frame f = make_frame(61, 120);
  GramOperator gram(f.cs, f.tb, HumOptions{});
  const size_t size = static_cast<size_t>(gram.size());
  RandomStream rng(31);
  std::vector<double> x(size), y(size), gx(size), gy(size);
  for (double& c : x) c = rng.uniform(-1.0, 1.0);
  for (double& c : y) c = rng.uniform(-1.0, 1.0);
  gram.apply(x, gx);
  gram.apply(y, gy);

  long double xy = 0.0L, yx = 0.0L, qx = 0.0L;
  for (size_t i = 0; i < size; ++i) {
    xy += static_cast<long double>(gx[i]) * y[i];
    yx += static_cast<long double>(x[i]) * gy[i];
    qx += static_cast<long double>(gx[i]) * x[i];
  }
  const double sym = std::abs(static_cast<double>(xy - yx)) /
                     std::abs(static_cast<double>(xy));
  CHECK(sym <= 1e-12);

  const double qf = gram.quadratic_form(x);
  CHECK(std::abs(static_cast<double>(qx) - qf) / qf <= 1e-12);

  const auto comps = gram.components(x);
  CHECK(comps.window >= 0.0);
  CHECK(comps.state >= 0.0);
  CHECK(comps.front >= 0.0);
  CHECK(comps.total() == doctest::Approx(qf).epsilon(1e-12));

  const auto diag = gram.diagonal();
  for (double v : diag) CHECK(v > 0.0);
}

TEST_CASE("the equilibrated operator stays positive definite") {
  const Frame f = make_frame(61, 120);
  HumOptions opt;
  opt.log_weight_floor = -60.0;
  GramOperator gram(f.cs, f.tb, opt);
  RandomStream rng(777);
  const double lam = smallest_gram_eigenvalue(gram, rng);
  CHECK(lam > 1e-9);
}

TEST_CASE("synthesized controls reach the final rest state") {
  const Frame f = make_frame(61, 120);
  const int n = f.cs.grid.n;
  const int m = f.cs.time.m;
  RandomStream rng(20260819);
  HumOptions opt;
  opt.solver = GramSolver::direct;
  GramOperator gram(f.cs, f.tb, opt);

  for (int draw = 0; draw < 5; ++draw) {
    const Draw d = make_draw(f, rng);
    const auto sol = solve_null_control(f.cs, f.tb, make_data(d), opt);
    const double dref = std::sqrt(sol.weighted.data);
    REQUIRE(dref > 0.0);

    CHECK((sol.terminal_state + sol.terminal_front) / dref <= 1e-10);
    CHECK(sol.solver_residual <= 1e-11);
    CHECK(sol.cg_iterations <= 10);
    CHECK(sol.resimulation_gap <= 1e-9);

    CHECK(std::isfinite(sol.weighted.ratio()));
    CHECK(sol.weighted.ratio() > 0.0);

    // The reconstructed adjoint trace closes its constraint at every level.
    double worst = 0.0;
    for (int k = 1; k <= m; ++k) {
      const double r =
          constraint_residual(f.cs, k, sol.phi.slice(k),
                              sol.gamma[static_cast<size_t>(k)]);
      double scale = std::abs(sol.gamma[static_cast<size_t>(k)]);
      for (int i = 0; i < n; ++i)
        scale = std::max(scale, std::abs(sol.phi.at(k, i)));
      worst = std::max(worst, r / (1.0 + scale));
    }
    CHECK(worst <= 1e-12);

    // The control lives on the window nodes only.
    for (int k = 0; k <= m; ++k)
      for (int j = 0; j < n; ++j)
        if (j == 0 || j == n - 1 || !gram.in_window(j - 1))
          CHECK(sol.w.at(k, j) == 0.0);
  }
}

TEST_CASE("weighted masses persist under refinement") {
  HumOptions opt;
  opt.solver = GramSolver::direct;

  const Frame coarse = make_frame(61, 120);
  RandomStream rng_c(20260819);
  const Draw dc = make_draw(coarse, rng_c);
  const auto sc = solve_null_control(coarse.cs, coarse.tb, make_data(dc), opt);

  const Frame fine = make_frame(121, 240);
  RandomStream rng_f(20260819);
  const Draw df = make_draw(fine, rng_f);
  const auto sf = solve_null_control(fine.cs, fine.tb, make_data(df), opt);

  const double quotient = sf.weighted.ratio() / sc.weighted.ratio();
  CHECK(quotient >= 0.5);
  CHECK(quotient <= 2.0);

  CHECK((sf.terminal_state + sf.terminal_front) /
            std::sqrt(sf.weighted.data) <=
        1e-10);
}

TEST_CASE("the scaled solution stays regular in the clipped weight") {
  const Frame f = make_frame(61, 120);
  RandomStream rng(20260819);
  const Draw d = make_draw(f, rng);
  HumOptions opt;
  opt.solver = GramSolver::direct;
  const ControlData data = make_data(d);
  const auto sol = solve_null_control(f.cs, f.tb, data, opt);

  const auto rep = verify_weighted_regularity(f.cs, f.tb, sol, data, opt);
  CHECK(rep.all_finite);
  CHECK(rep.state_l2 > 0.0);
  CHECK(rep.state_x > 0.0);
  CHECK(rep.state_xx > 0.0);
  CHECK(rep.state_t > 0.0);
  CHECK(rep.front_l2 > 0.0);
  CHECK(rep.front_t > 0.0);
  CHECK(rep.substitution_residual <= 1e-6);
  CHECK(rep.terminal_weighted < 1e9);
}

TEST_CASE("zero data produce the zero control") {
  const Frame f = make_frame(61, 120);
  ControlData zero;
  zero.z0.assign(static_cast<size_t>(f.cs.grid.n), 0.0);
  const auto sol = solve_null_control(f.cs, f.tb, zero, HumOptions{});
  CHECK(sol.terminal_state == 0.0);
  CHECK(sol.terminal_front == 0.0);
  CHECK(sol.weighted.ratio() == 0.0);
  CHECK(sol.cg_iterations == 0);
  for (double v : sol.w.v) CHECK(v == 0.0);
}

TEST_CASE("invalid requests are rejected") {
  const Frame f = make_frame(41, 80);

  HumOptions narrow;
  narrow.omega = ObservationWindow{-0.7, -0.5};
  CHECK_THROWS_AS(GramOperator(f.cs, f.tb, narrow), GeometryError);

  HumOptions bad_floor;
  bad_floor.log_weight_floor = 10.0;
  CHECK_THROWS_AS(GramOperator(f.cs, f.tb, bad_floor), ParameterError);

  ControlData short_profile;
  short_profile.z0.assign(static_cast<size_t>(f.cs.grid.n - 1), 0.0);
  CHECK_THROWS_AS(solve_null_control(f.cs, f.tb, short_profile, HumOptions{}),
                  DimensionError);

  ControlData poisoned;
  poisoned.z0.assign(static_cast<size_t>(f.cs.grid.n), 0.0);
  Field2D spike(f.cs.time.m + 1, f.cs.grid.n);
  spike.at(f.cs.time.m / 2, f.cs.grid.n / 2) =
      std::numeric_limits<double>::infinity();
  poisoned.f1 = &spike;
  CHECK_THROWS_AS(solve_null_control(f.cs, f.tb, poisoned, HumOptions{}),
                  SupportError);
}
