#include "stefan/transform.hpp"

#include <cmath>
#include <string>

#include "stefan/errors.hpp"
#include "stefan/numerics.hpp"

namespace stefan {

CylinderState physical_to_cylinder(const FrontState& front,
                                   const SpaceGrid& unit) {
  if (front.ell <= 0.0)
    throw AdmissibilityError("physical_to_cylinder: nonpositive front " +
                             std::to_string(front.ell));
  if (front.u.size() < 4)
    throw DimensionError("physical_to_cylinder: profile too short");
  const SpaceGrid phys{0.0, front.ell, static_cast<int>(front.u.size())};
  CylinderState cyl;
  cyl.q = front.ell * front.ell;
  cyl.p.resize(static_cast<size_t>(unit.n));
  for (int i = 0; i < unit.n; ++i)
    cyl.p[static_cast<size_t>(i)] =
        interp_cubic(phys.a, phys.dx(), front.u, unit.x(i) * front.ell);
  return cyl;
}

FrontState cylinder_to_physical(const CylinderState& cyl,
                                const SpaceGrid& unit, int n_out) {
  if (cyl.q <= 0.0)
    throw AdmissibilityError("cylinder_to_physical: nonpositive q " +
                             std::to_string(cyl.q));
  if (static_cast<int>(cyl.p.size()) != unit.n)
    throw DimensionError("cylinder_to_physical: profile does not match grid");
  FrontState front;
  front.ell = std::sqrt(cyl.q);
  front.u.resize(static_cast<size_t>(n_out));
  const SpaceGrid phys{0.0, front.ell, n_out};
  for (int j = 0; j < n_out; ++j)
    front.u[static_cast<size_t>(j)] =
        interp_cubic(unit.a, unit.dx(), cyl.p, phys.x(j) / front.ell);
  return front;
}

std::vector<double> extend_even_reflection(std::span<const double> f_unit,
                                           const SpaceGrid& unit,
                                           const SpaceGrid& ext,
                                           double blend_width) {
  if (static_cast<int>(f_unit.size()) != unit.n)
    throw DimensionError("extend_even_reflection: profile size mismatch");
  if (ext.n != 2 * unit.n - 1)
    throw DimensionError("extend_even_reflection: grids are not conforming");
  if (blend_width <= 0.0 || blend_width >= 1.0)
    throw GeometryError("extend_even_reflection: blend width must lie in (0,1)");

  const int mid = unit.n - 1;  // index of x = 0 on the extended grid
  const double g = one_sided_trace_derivative(f_unit, unit.dx(), -1);

  std::vector<double> out(static_cast<size_t>(ext.n));
  for (int i = 0; i <= mid; ++i) {
    const int mirror = mid - i;
    const double x = ext.x(i);
    double val = f_unit[static_cast<size_t>(mirror)];
    if (x > -blend_width) {
      const double b = 1.0 + x / blend_width;
      val += 2.0 * g * x * b * b;
    }
    out[static_cast<size_t>(i)] = val;
  }
  for (int i = mid; i < ext.n; ++i)
    out[static_cast<size_t>(i)] = f_unit[static_cast<size_t>(i - mid)];
  return out;
}

PerturbationState to_perturbation(const CylinderState& cyl,
                                  std::span<const double> pbar_unit,
                                  double qbar, double beta,
                                  const SpaceGrid& unit, const SpaceGrid& ext,
                                  double blend_width) {
  if (static_cast<int>(cyl.p.size()) != unit.n ||
      static_cast<int>(pbar_unit.size()) != unit.n)
    throw DimensionError("to_perturbation: profile size mismatch");
  std::vector<double> diff(static_cast<size_t>(unit.n));
  for (int i = 0; i < unit.n; ++i)
    diff[static_cast<size_t>(i)] =
        cyl.p[static_cast<size_t>(i)] - pbar_unit[static_cast<size_t>(i)];
  PerturbationState pert;
  pert.z = extend_even_reflection(diff, unit, ext, blend_width);
  pert.h = 0.5 * beta * (cyl.q - qbar);
  return pert;
}

CylinderState from_perturbation(const PerturbationState& pert,
                                std::span<const double> pbar_unit, double qbar,
                                double beta, const SpaceGrid& unit,
                                double q_star) {
  if (static_cast<int>(pert.z.size()) != 2 * unit.n - 1)
    throw DimensionError("from_perturbation: extended profile size mismatch");
  CylinderState cyl;
  cyl.q = qbar + 2.0 * pert.h / beta;
  if (!(cyl.q > q_star) || !std::isfinite(cyl.q))
    throw AdmissibilityError("from_perturbation: q = " + std::to_string(cyl.q) +
                             " leaves the admissible range (q* = " +
                             std::to_string(q_star) + ")");
  const int mid = unit.n - 1;
  cyl.p.resize(static_cast<size_t>(unit.n));
  for (int i = 0; i < unit.n; ++i)
    cyl.p[static_cast<size_t>(i)] = pbar_unit[static_cast<size_t>(i)] +
                                    pert.z[static_cast<size_t>(mid + i)];
  return cyl;
}

double initial_distance(const CylinderState& cyl,
                        std::span<const double> pbar_unit, double qbar,
                        const SpaceGrid& unit) {
  if (static_cast<int>(cyl.p.size()) != unit.n ||
      static_cast<int>(pbar_unit.size()) != unit.n)
    throw DimensionError("initial_distance: profile size mismatch");
  std::vector<double> diff(static_cast<size_t>(unit.n));
  for (int i = 0; i < unit.n; ++i)
    diff[static_cast<size_t>(i)] =
        cyl.p[static_cast<size_t>(i)] - pbar_unit[static_cast<size_t>(i)];
  const std::vector<double> ddiff = central_derivative(diff, unit.dx());
  const double a = l2_norm(diff, unit.dx());
  const double b = l2_norm(ddiff, unit.dx());
  const double front_gap = std::abs(std::sqrt(cyl.q) - std::sqrt(qbar));
  return std::sqrt(a * a + b * b) + front_gap;
}

}  // namespace stefan
