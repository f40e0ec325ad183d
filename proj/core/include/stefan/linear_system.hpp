#pragma once

#include <functional>
#include <span>
#include <vector>

#include "stefan/grid.hpp"
#include "stefan/numerics.hpp"
#include "stefan/reference.hpp"

namespace stefan {

/// Time-dependent coefficients of the linearized moving-boundary system on
/// the extended domain (-1, 1):
///
///   qbar z_t - z_xx + a z_x + coupling(x,t) z_x(1,t) + load(x,t) h = f1 + w
///   h_t + z_x(1,t) = f2
///
/// with homogeneous Dirichlet conditions at both ends. All fields are nodal
/// over (level, node).
struct CoefficientSet {
  SpaceGrid grid;
  TimeGrid time;
  double beta = 1.0;
  std::vector<double> qbar;
  Field2D a;
  Field2D coupling;
  Field2D load;
};

/// Build the linearization coefficients around a reference trajectory:
/// a = (x / beta) pbar_x(1, t), coupling = (x / beta) pbar_x(x, t),
/// load = (2 / beta) pbar_t(x, t), and qbar copied from the reference.
CoefficientSet stefan_coefficients(const ReferenceTrajectory& ref);

/// One implicit Euler slice of the coupled system, acting on the state
/// vector (z at interior nodes 1..n-2, h). The step from level k-1 to k is
///
///   M(k) X^k = E(k) X^{k-1} + dt F^k
///
/// where M couples the parabolic core, the one-sided trace at x = 1 and the
/// front variable, and E = diag(qbar(k), ..., qbar(k), 1). All solves reduce
/// to tridiagonal factorizations with a single border row and column.
class StepOperator {
 public:
  explicit StepOperator(const CoefficientSet& coeffs);

  int interior_size() const { return interior_; }
  int state_size() const { return interior_ + 1; }
  const CoefficientSet& coefficients() const { return *coeffs_; }

  /// Quadrature weight of state component j in the duality pairing
  /// (dx for the z nodes, 1 for the h slot).
  double weight(int j) const;

  /// One-sided derivative at x = 1 evaluated on the interior part of a
  /// state vector, using the homogeneous value at the boundary node.
  double trace_of(std::span<const double> state) const;

  void apply_m(int level, std::span<const double> state,
               std::span<double> out) const;
  void apply_m_transpose(int level, std::span<const double> state,
                         std::span<double> out) const;
  void apply_e(int level, std::span<const double> state,
               std::span<double> out) const;

  std::vector<double> solve_m(int level, std::span<const double> rhs) const;
  std::vector<double> solve_m_transpose(int level,
                                        std::span<const double> rhs) const;

 private:
  struct CoreBands {
    std::vector<double> lower, diag, upper;
  };
  CoreBands build_core(int level) const;

  const CoefficientSet* coeffs_;
  int interior_;
  double dx_, dt_;
  int tr_j1_, tr_j2_;
  double tr_c1_, tr_c2_;
};

/// Right-hand sides of the linearized system. Functional entries are
/// evaluated at the nodes; grid entries are read directly per (level, node)
/// and added on top. Any field may be left empty.
struct LinearSources {
  std::function<double(double, double)> f1;
  std::function<double(double)> f2;
  std::function<double(double, double)> control;
  const Field2D* f1_grid = nullptr;
  const std::vector<double>* f2_grid = nullptr;
  const Field2D* control_grid = nullptr;
};

struct LinearTrajectory {
  SpaceGrid grid;
  TimeGrid time;
  Field2D z;                  // all nodes, boundary columns zero
  std::vector<double> h;      // size m + 1
  std::vector<double> trace;  // z_x(1, t_k), one-sided
};

/// March the linearized system from (z0, h0). z0 is a full nodal profile;
/// its boundary entries are replaced by the homogeneous values.
LinearTrajectory solve_linearized(const CoefficientSet& coeffs,
                                  std::span<const double> z0, double h0,
                                  const LinearSources& src);

}  // namespace stefan
