#include "stefan/nonlinear_control.hpp"

#include <cmath>
#include <string>
#include <utility>

#include "stefan/errors.hpp"
#include "stefan/linear_system.hpp"
#include "stefan/numerics.hpp"

namespace stefan {

namespace {

/// Weighted mass of a distributed source with the growing weight capped at
/// the inverse of the floored level-weight family, formed in log space so
/// zero entries contribute zero under an unbounded exponent.
double capped_source_mass(const WeightTable& table, const SpaceGrid& grid,
                          const TimeGrid& time, const Field2D& f1,
                          double cap) {
  const int n = grid.n, m = time.m;
  const double dt = time.dt(), dx = grid.dx();
  double mass = 0.0;
  for (int k = 1; k <= m; ++k) {
    const double lr = std::min(table.log_rho3[static_cast<size_t>(k)], cap);
    for (int j = 1; j <= n - 2; ++j) {
      const double v = f1.at(k, j);
      if (v == 0.0) continue;
      mass += dt * dx * std::exp(2.0 * (lr + std::log(std::abs(v))));
    }
  }
  return mass;
}

struct TrajectoryGap {
  double state = 0.0;
  double front = 0.0;
};

TrajectoryGap trajectory_gap(const ExtendedTrajectory& a,
                             const ExtendedTrajectory& b, double dx) {
  TrajectoryGap gap;
  const int m = a.time.m, n = a.grid.n;
  for (int k = 0; k <= m; ++k) {
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
      const double d = a.z.at(k, i) - b.z.at(k, i);
      acc += d * d;
    }
    gap.state = std::max(gap.state, std::sqrt(dx * acc));
    gap.front = std::max(gap.front, std::abs(a.h[static_cast<size_t>(k)] -
                                             b.h[static_cast<size_t>(k)]));
  }
  return gap;
}

double profile_l2(const Field2D& z, int level, double dx) {
  double acc = 0.0;
  for (int i = 0; i < z.n; ++i) {
    const double v = z.at(level, i);
    acc += v * v;
  }
  return std::sqrt(dx * acc);
}

double field_peak(const Field2D& f) {
  double peak = 0.0;
  for (double v : f.v) peak = std::max(peak, std::abs(v));
  return peak;
}

}  // namespace

ControlResult control_to_trajectory(const ReferenceTrajectory& ref,
                                    const WeightTable& table,
                                    std::span<const double> z0, double h0,
                                    const ControlLoopOptions& options) {
  const CoefficientSet coeffs = stefan_coefficients(ref);
  const int n = coeffs.grid.n;
  const int m = coeffs.time.m;
  const double dx = coeffs.grid.dx();
  if (static_cast<int>(z0.size()) != n)
    throw DimensionError(
        "control_to_trajectory: initial profile does not match the grid");
  if (options.max_iterations < 1)
    throw ParameterError(
        "control_to_trajectory: at least one outer iteration is required");

  ExtendedOptions march;
  march.picard_tol = options.picard_tol;
  march.picard_max = options.picard_max;
  march.q_star = ref.ell_star * ref.ell_star;

  const double cap = -0.5 * options.hum.log_weight_floor;

  ControlResult result;
  result.grid = coeffs.grid;
  result.time = coeffs.time;
  result.z0.assign(z0.begin(), z0.end());
  result.h0 = h0;

  auto previous = solve_extended_nonlinear(coeffs, z0, h0, nullptr, march);
  HumSolution synthesis;
  double first_update = 0.0;
  for (int it = 1; it <= options.max_iterations; ++it) {
    OuterIterate record;
    record.remainder_mass = capped_source_mass(table, coeffs.grid,
                                               coeffs.time,
                                               previous.f1_applied, cap);
    if (!std::isfinite(record.remainder_mass))
      throw SupportError(
          "control_to_trajectory: the quadratic remainder carries non-finite "
          "weighted mass; the initial data are outside the local regime");

    ControlData data;
    data.z0 = result.z0;
    data.h0 = h0;
    data.f1 = &previous.f1_applied;
    synthesis = solve_null_control(coeffs, table, data, options.hum);

    auto advanced =
        solve_extended_nonlinear(coeffs, z0, h0, &synthesis.w, march);
    const TrajectoryGap gap = trajectory_gap(advanced, previous, dx);
    const double update = std::max(gap.state, gap.front);

    record.state_update = gap.state;
    record.front_update = gap.front;
    record.control_peak = field_peak(synthesis.w);
    record.terminal_state = profile_l2(advanced.z, m, dx);
    record.terminal_front = std::abs(advanced.h[static_cast<size_t>(m)]);
    record.hum_iterations = synthesis.cg_iterations;
    result.history.push_back(record);
    result.iterations = it;

    previous = std::move(advanced);
    if (update <= options.tol) {
      result.converged = true;
      break;
    }
    if (it == 1) {
      first_update = update;
    } else if (!std::isfinite(update) || update > 10.0 * first_update) {
      throw PicardError(
          "control_to_trajectory: the outer iteration diverged; the update "
          "grew to " +
          std::to_string(update) + " from a first update of " +
          std::to_string(first_update));
    }
  }

  result.w = std::move(synthesis.w);
  result.z = std::move(previous.z);
  result.h = std::move(previous.h);
  result.terminal_state = profile_l2(result.z, m, dx);
  result.terminal_front = std::abs(result.h[static_cast<size_t>(m)]);

  const int mid = ref.mid();
  result.v.resize(static_cast<size_t>(m) + 1);
  for (int k = 0; k <= m; ++k)
    result.v[static_cast<size_t>(k)] =
        ref.v[static_cast<size_t>(k)] + result.z.at(k, mid);

  result.targets = verify_targets(result, ref);
  return result;
}

ControlResult control_to_trajectory(const FrontState& initial,
                                    const ReferenceTrajectory& ref,
                                    const WeightTable& table,
                                    const ControlLoopOptions& options) {
  const auto cyl = physical_to_cylinder(initial, ref.unit);
  const int nu = ref.unit.n;
  std::vector<double> pbar0(static_cast<size_t>(nu));
  for (int i = 0; i < nu; ++i)
    pbar0[static_cast<size_t>(i)] = ref.p.at(0, ref.mid() + i);
  const auto pert = to_perturbation(cyl, pbar0, ref.q[0], ref.beta, ref.unit,
                                    ref.ext, ref.blend_width);
  return control_to_trajectory(ref, table, pert.z, pert.h, options);
}

PositivityReport check_positivity(const ControlResult& result,
                                  const ReferenceTrajectory& ref) {
  const int m = result.time.m;
  if (static_cast<int>(ref.v.size()) != m + 1 ||
      static_cast<int>(result.v.size()) != m + 1)
    throw DimensionError(
        "check_positivity: result and reference disagree on the time grid");
  PositivityReport report;
  report.min_control = result.v[0];
  report.reference_floor = ref.v[0];
  for (int k = 0; k <= m; ++k) {
    const double vbar = ref.v[static_cast<size_t>(k)];
    const double v = result.v[static_cast<size_t>(k)];
    report.min_control = std::min(report.min_control, v);
    report.reference_floor = std::min(report.reference_floor, vbar);
    report.trace_peak = std::max(report.trace_peak, std::abs(v - vbar));
  }
  report.nonnegative = report.min_control >= -1e-12;
  return report;
}

TargetReport verify_targets(const ControlResult& result,
                            const ReferenceTrajectory& ref) {
  const int m = ref.time.m;
  const int mid = ref.mid();
  const int nu = ref.unit.n;
  if (result.z.levels != m + 1 || result.z.n != ref.ext.n ||
      static_cast<int>(result.z0.size()) != ref.ext.n)
    throw DimensionError(
        "verify_targets: result does not match the reference frame");

  std::vector<double> p0(static_cast<size_t>(nu));
  for (int i = 0; i < nu; ++i)
    p0[static_cast<size_t>(i)] =
        ref.p.at(0, mid + i) + result.z0[static_cast<size_t>(mid + i)];
  const double q0 = ref.q[0] + 2.0 * result.h0 / ref.beta;

  const double dt = ref.time.dt();
  auto boundary = [&](double t) {
    const int k = static_cast<int>(std::lround(t / dt));
    return result.v[static_cast<size_t>(k)];
  };
  const auto resim = solve_cylinder_stefan(p0, q0, boundary, ref.unit,
                                           ref.time, ref.beta, ref.cylinder);

  TargetReport report;
  for (int k = 0; k <= m; ++k) {
    for (int i = 0; i < nu; ++i) {
      const double controlled =
          ref.p.at(k, mid + i) + result.z.at(k, mid + i);
      report.closure_gap = std::max(
          report.closure_gap, std::abs(resim.p.at(k, i) - controlled));
    }
    const double q_controlled = ref.q[static_cast<size_t>(k)] +
                                2.0 * result.h[static_cast<size_t>(k)] /
                                    ref.beta;
    report.closure_gap =
        std::max(report.closure_gap,
                 std::abs(resim.q[static_cast<size_t>(k)] - q_controlled));
  }

  report.front_terminal = std::sqrt(resim.q[static_cast<size_t>(m)]);
  report.reference_front = std::sqrt(ref.q[static_cast<size_t>(m)]);
  report.front_gap = std::abs(report.front_terminal - report.reference_front);

  // Terminal temperature gap sampled on the reference physical grid; the
  // re-simulated profile is pulled back through its own front position.
  const double dy = ref.unit.dx();
  double acc = 0.0;
  for (int i = 0; i < nu; ++i) {
    const double x = ref.unit.x(i) * report.reference_front;
    const double y = std::min(1.0, x / report.front_terminal);
    const double u = interp_cubic(0.0, dy, resim.p.slice(m), y);
    const double d = u - ref.p.at(m, mid + i);
    const double wq = (i == 0 || i == nu - 1) ? 0.5 : 1.0;
    acc += wq * d * d;
  }
  report.temperature_gap = std::sqrt(report.reference_front * dy * acc);
  return report;
}

}  // namespace stefan
