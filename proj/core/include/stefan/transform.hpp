#pragma once

#include <span>
#include <vector>

#include "stefan/grid.hpp"

namespace stefan {

/// Snapshot of the physical melting problem: temperature profile u sampled
/// on a uniform grid over [0, ell] and the front position ell.
struct FrontState {
  std::vector<double> u;
  double ell = 0.0;
};

/// Snapshot in the fixed cylinder frame: profile p on the unit grid [0, 1]
/// and the squared front q = ell^2.
struct CylinderState {
  std::vector<double> p;
  double q = 0.0;
};

/// Snapshot of the perturbation variables: z = p - pbar on the extended
/// grid [-1, 1] and the scaled front offset h = beta (q - qbar) / 2.
struct PerturbationState {
  std::vector<double> z;
  double h = 0.0;
};

/// Pull a physical snapshot to the cylinder frame: p(y) = u(y ell), q = ell^2.
/// The profile is resampled with cubic interpolation onto `unit`.
CylinderState physical_to_cylinder(const FrontState& front,
                                   const SpaceGrid& unit);

/// Push a cylinder snapshot back to the physical frame on n_out nodes over
/// [0, sqrt(q)].
FrontState cylinder_to_physical(const CylinderState& cyl,
                                const SpaceGrid& unit, int n_out);

/// Extend a unit-grid profile onto the extended grid by even reflection with
/// a C^1 slope correction near the interface. The correction adds
/// 2 g x psi(x) on [-blend_width, 0], where g is the right-sided slope at
/// x = 0 and psi a quadratic bump, so the extension has a continuous first
/// derivative at 0 and vanishes at x = -1 whenever f(1) = 0.
std::vector<double> extend_even_reflection(std::span<const double> f_unit,
                                           const SpaceGrid& unit,
                                           const SpaceGrid& ext,
                                           double blend_width);

/// Perturbation of a cylinder snapshot around a reference slice (pbar on the
/// unit grid, qbar). The difference is extended onto `ext`.
PerturbationState to_perturbation(const CylinderState& cyl,
                                  std::span<const double> pbar_unit,
                                  double qbar, double beta,
                                  const SpaceGrid& unit, const SpaceGrid& ext,
                                  double blend_width);

/// Reassemble a cylinder snapshot from perturbation variables. Throws
/// AdmissibilityError when the implied squared front q = qbar + 2h/beta
/// falls outside (q_star, +inf).
CylinderState from_perturbation(const PerturbationState& pert,
                                std::span<const double> pbar_unit, double qbar,
                                double beta, const SpaceGrid& unit,
                                double q_star);

/// Scalar smallness diagnostic for initial data: discrete H^1 distance of
/// the cylinder profiles plus the front gap |ell - ellbar|.
double initial_distance(const CylinderState& cyl,
                        std::span<const double> pbar_unit, double qbar,
                        const SpaceGrid& unit);

}  // namespace stefan
