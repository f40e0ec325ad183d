#pragma once

#include <span>
#include <vector>

#include "stefan/grid.hpp"

namespace stefan {

/// Composite trapezoid rule on a uniform grid with spacing dx.
double trapezoid(std::span<const double> f, double dx);

/// Trapezoid inner product (f, g) on a uniform grid with spacing dx.
double inner_trapezoid(std::span<const double> f, std::span<const double> g,
                       double dx);

/// Second-order one-sided derivative at a boundary node.
/// side = +1 evaluates at the last node from the last three values,
/// side = -1 at the first node from the first three values.
double one_sided_trace_derivative(std::span<const double> f, double dx,
                                  int side);

/// Centered first derivative on a uniform grid, second-order one-sided
/// stencils at both ends.
std::vector<double> central_derivative(std::span<const double> f, double dx);

/// LU factorization of a tridiagonal matrix without pivoting.
/// lower[0] and upper[k-1] are ignored. Throws SingularSolveError when a
/// pivot falls below a relative floor.
class TridiagonalFactor {
 public:
  TridiagonalFactor(std::span<const double> lower, std::span<const double> diag,
                    std::span<const double> upper);

  void solve(std::span<double> rhs) const;
  int size() const { return static_cast<int>(d_.size()); }

 private:
  std::vector<double> l_, d_, u_;
};

/// Tridiagonal core bordered by one extra row and column:
///
///   [ T      c ] [ z   ]   [ b ]
///   [ r^T    d ] [ tau ] = [ e ]
///
/// T is k-by-k tridiagonal, c and r are dense k-vectors, d a scalar.
struct BorderedTridiagonal {
  std::vector<double> lower, diag, upper;
  std::vector<double> border_col;   // c
  std::vector<double> border_row;   // r
  double corner = 1.0;              // d

  int core_size() const { return static_cast<int>(diag.size()); }
};

/// Solve the bordered system for (z, tau); rhs holds (b, e) with e last.
/// Uses the tridiagonal factorization plus a rank-one border update.
std::vector<double> solve_bordered(const BorderedTridiagonal& A,
                                   std::span<const double> rhs);

/// Four-point Lagrange (cubic) interpolation of samples f on the uniform
/// grid starting at x0 with spacing dx, evaluated at xq. Clamps the stencil
/// at the ends of the grid.
double interp_cubic(double x0, double dx, std::span<const double> f,
                    double xq);

/// Resample a nodal profile from one uniform grid to another with cubic
/// interpolation.
std::vector<double> resample_cubic(const SpaceGrid& src,
                                   std::span<const double> f,
                                   const SpaceGrid& dst);

/// Observed convergence order when the discretization parameter is halved.
double fit_order(double err_coarse, double err_fine);

/// Max norm of a vector.
double max_abs(std::span<const double> f);

/// Discrete L2 norm on a uniform grid (trapezoid weights).
double l2_norm(std::span<const double> f, double dx);

}  // namespace stefan
