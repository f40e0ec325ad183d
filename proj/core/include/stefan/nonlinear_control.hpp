#pragma once

#include <span>
#include <vector>

#include "stefan/extended.hpp"
#include "stefan/hum.hpp"
#include "stefan/reference.hpp"
#include "stefan/transform.hpp"

namespace stefan {

/// Options for the outer controllability iteration.
struct ControlLoopOptions {
  /// Synthesis options passed through to every linear control solve.
  HumOptions hum;

  /// Outer fixed-point tolerance on max(state update, front update).
  double tol = 1e-10;
  int max_iterations = 30;

  /// Inner slice iteration of the nonlinear marches.
  double picard_tol = 1e-12;
  int picard_max = 30;
};

/// Record of one outer iteration: how far the trajectory moved, how heavy
/// the injected remainder was, and where the advanced state ended up.
struct OuterIterate {
  double state_update = 0.0;    // max over levels of the L2 profile change
  double front_update = 0.0;    // max over levels of the front change
  double remainder_mass = 0.0;  // capped weighted mass of the injected source
  double control_peak = 0.0;    // max |w| of the synthesized control
  double terminal_state = 0.0;  // ||z(., T)||_2 after the advance
  double terminal_front = 0.0;  // |h(T)| after the advance
  int hum_iterations = 0;       // Krylov iterations behind the synthesis
};

/// Terminal match against the reference in the physical frame, measured on
/// an independent unit-domain re-simulation driven by the recovered
/// boundary control.
struct TargetReport {
  double front_terminal = 0.0;   // re-simulated ell(T)
  double reference_front = 0.0;  // ellbar(T)
  double front_gap = 0.0;        // |ell(T) - ellbar(T)|
  double temperature_gap = 0.0;  // L2 gap of the physical profiles at T
  double closure_gap = 0.0;      // max gap, re-simulation vs controlled sum
};

/// Converged control bundle: the distributed control on the extension, the
/// controlled nonlinear trajectory, and the boundary control read off as
/// the lateral trace at x = 0 on top of the reference boundary values.
struct ControlResult {
  SpaceGrid grid;  // extended
  TimeGrid time;

  /// Perturbation data the loop ran from.
  std::vector<double> z0;
  double h0 = 0.0;

  Field2D w;              // distributed control, window-supported
  Field2D z;              // controlled nonlinear trajectory
  std::vector<double> h;
  std::vector<double> v;  // boundary control per level, z(0, .) + vbar

  double terminal_state = 0.0;  // ||z(., T)||_2
  double terminal_front = 0.0;  // |h(T)|
  int iterations = 0;
  bool converged = false;
  std::vector<OuterIterate> history;

  /// Physical-frame match of the final iterate.
  TargetReport targets;
};

/// Drive the nonlinear extended system to the reference at the final time:
/// alternate synthesizing a linear null control against the recorded
/// quadratic remainder of the previous nonlinear trajectory with advancing
/// the nonlinear system under the new control, until successive
/// trajectories agree to the outer tolerance. At the fixed point the
/// nonlinear trajectory coincides with the controlled linear march, so the
/// floored-weight synthesis pins its final state.
///
/// Throws SupportError when the remainder leaves the capped weighted class
/// (data outside the local regime), PicardError when the updates blow up,
/// and passes through admissibility errors from the forward marches.
ControlResult control_to_trajectory(const ReferenceTrajectory& ref,
                                    const WeightTable& table,
                                    std::span<const double> z0, double h0,
                                    const ControlLoopOptions& options = {});

/// Physical-frame entry: pull (u0, ell0) to the cylinder frame, form the
/// perturbation against the reference initial slice, and run the loop.
ControlResult control_to_trajectory(const FrontState& initial,
                                    const ReferenceTrajectory& ref,
                                    const WeightTable& table,
                                    const ControlLoopOptions& options = {});

/// Sign diagnostic of the recovered boundary control v = vbar + vhat.
struct PositivityReport {
  double min_control = 0.0;     // min over levels of v
  double reference_floor = 0.0; // min over levels of vbar
  double trace_peak = 0.0;      // max over levels of |vhat|
  bool nonnegative = false;     // min_control >= -1e-12
};

PositivityReport check_positivity(const ControlResult& result,
                                  const ReferenceTrajectory& ref);

/// Re-simulate the unit-domain moving-boundary problem from the transformed
/// initial data, driven by the recovered boundary control, with the same
/// march options the reference was generated with, and compare the terminal
/// front and temperature against the reference.
TargetReport verify_targets(const ControlResult& result,
                            const ReferenceTrajectory& ref);

}  // namespace stefan
