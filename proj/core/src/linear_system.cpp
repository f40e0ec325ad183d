#include "stefan/linear_system.hpp"

#include <cmath>

#include "stefan/errors.hpp"

namespace stefan {

CoefficientSet stefan_coefficients(const ReferenceTrajectory& ref) {
  const int n = ref.ext.n;
  const int m = ref.time.m;
  CoefficientSet cs;
  cs.grid = ref.ext;
  cs.time = ref.time;
  cs.beta = ref.beta;
  cs.qbar = ref.q;
  cs.a = Field2D(m + 1, n);
  cs.coupling = Field2D(m + 1, n);
  cs.load = Field2D(m + 1, n);
  for (int k = 0; k <= m; ++k) {
    const double tr = ref.trace1[static_cast<size_t>(k)];
    for (int i = 0; i < n; ++i) {
      const double x = ref.ext.x(i);
      cs.a.at(k, i) = x * tr / ref.beta;
      cs.coupling.at(k, i) = x * ref.p_x.at(k, i) / ref.beta;
      cs.load.at(k, i) = 2.0 * ref.p_t.at(k, i) / ref.beta;
    }
  }
  return cs;
}

StepOperator::StepOperator(const CoefficientSet& coeffs) : coeffs_(&coeffs) {
  const int n = coeffs.grid.n;
  if (n < 5) throw DimensionError("step operator needs at least five nodes");
  if (static_cast<int>(coeffs.qbar.size()) != coeffs.time.m + 1)
    throw DimensionError("coefficient table does not match the time grid");
  interior_ = n - 2;
  dx_ = coeffs.grid.dx();
  dt_ = coeffs.time.dt();
  // one-sided derivative at x = 1 over interior unknowns; the boundary node
  // itself carries the homogeneous value and drops out
  tr_j1_ = interior_ - 2;
  tr_j2_ = interior_ - 1;
  tr_c1_ = 1.0 / (2.0 * dx_);
  tr_c2_ = -2.0 / dx_;
}

double StepOperator::weight(int j) const { return j < interior_ ? dx_ : 1.0; }

double StepOperator::trace_of(std::span<const double> state) const {
  return tr_c1_ * state[static_cast<size_t>(tr_j1_)] +
         tr_c2_ * state[static_cast<size_t>(tr_j2_)];
}

StepOperator::CoreBands StepOperator::build_core(int level) const {
  CoreBands b;
  b.lower.resize(static_cast<size_t>(interior_));
  b.diag.resize(static_cast<size_t>(interior_));
  b.upper.resize(static_cast<size_t>(interior_));
  const double q = coeffs_->qbar[static_cast<size_t>(level)];
  const double rxx = dt_ / (dx_ * dx_);
  for (int j = 0; j < interior_; ++j) {
    const double adv = coeffs_->a.at(level, j + 1) * dt_ / (2.0 * dx_);
    b.lower[static_cast<size_t>(j)] = -rxx - adv;
    b.diag[static_cast<size_t>(j)] = q + 2.0 * rxx;
    b.upper[static_cast<size_t>(j)] = -rxx + adv;
  }
  return b;
}

void StepOperator::apply_m(int level, std::span<const double> state,
                           std::span<double> out) const {
  const int I = interior_;
  const auto b = build_core(level);
  const double tau = trace_of(state);
  const double h = state[static_cast<size_t>(I)];
  for (int j = 0; j < I; ++j) {
    double acc = b.diag[static_cast<size_t>(j)] * state[static_cast<size_t>(j)];
    if (j > 0)
      acc += b.lower[static_cast<size_t>(j)] * state[static_cast<size_t>(j - 1)];
    if (j + 1 < I)
      acc += b.upper[static_cast<size_t>(j)] * state[static_cast<size_t>(j + 1)];
    acc += dt_ * coeffs_->coupling.at(level, j + 1) * tau;
    acc += dt_ * coeffs_->load.at(level, j + 1) * h;
    out[static_cast<size_t>(j)] = acc;
  }
  out[static_cast<size_t>(I)] = dt_ * tau + h;
}

void StepOperator::apply_m_transpose(int level, std::span<const double> state,
                                     std::span<double> out) const {
  const int I = interior_;
  const auto b = build_core(level);
  double ndot = 0.0, rdot = 0.0;
  for (int j = 0; j < I; ++j) {
    ndot += coeffs_->coupling.at(level, j + 1) * state[static_cast<size_t>(j)];
    rdot += coeffs_->load.at(level, j + 1) * state[static_cast<size_t>(j)];
  }
  const double sh = state[static_cast<size_t>(I)];
  for (int j = 0; j < I; ++j) {
    double acc = b.diag[static_cast<size_t>(j)] * state[static_cast<size_t>(j)];
    if (j > 0)
      acc += b.upper[static_cast<size_t>(j - 1)] * state[static_cast<size_t>(j - 1)];
    if (j + 1 < I)
      acc += b.lower[static_cast<size_t>(j + 1)] * state[static_cast<size_t>(j + 1)];
    out[static_cast<size_t>(j)] = acc;
  }
  out[static_cast<size_t>(tr_j1_)] += dt_ * tr_c1_ * (ndot + sh);
  out[static_cast<size_t>(tr_j2_)] += dt_ * tr_c2_ * (ndot + sh);
  out[static_cast<size_t>(I)] = dt_ * rdot + sh;
}

void StepOperator::apply_e(int level, std::span<const double> state,
                           std::span<double> out) const {
  const int I = interior_;
  const double q = coeffs_->qbar[static_cast<size_t>(level)];
  for (int j = 0; j < I; ++j)
    out[static_cast<size_t>(j)] = q * state[static_cast<size_t>(j)];
  out[static_cast<size_t>(I)] = state[static_cast<size_t>(I)];
}

std::vector<double> StepOperator::solve_m(int level,
                                          std::span<const double> rhs) const {
  const int I = interior_;
  BorderedTridiagonal bt;
  auto b = build_core(level);
  bt.lower = std::move(b.lower);
  bt.diag = std::move(b.diag);
  bt.upper = std::move(b.upper);
  bt.border_col.assign(static_cast<size_t>(I), 0.0);
  bt.border_row.assign(static_cast<size_t>(I), 0.0);
  for (int j = 0; j < I; ++j)
    bt.border_col[static_cast<size_t>(j)] =
        dt_ * coeffs_->coupling.at(level, j + 1) -
        dt_ * dt_ * coeffs_->load.at(level, j + 1);
  bt.border_row[static_cast<size_t>(tr_j1_)] = -tr_c1_;
  bt.border_row[static_cast<size_t>(tr_j2_)] = -tr_c2_;
  bt.corner = 1.0;

  const double rh = rhs[static_cast<size_t>(I)];
  std::vector<double> packed(static_cast<size_t>(I) + 1, 0.0);
  for (int j = 0; j < I; ++j)
    packed[static_cast<size_t>(j)] =
        rhs[static_cast<size_t>(j)] - dt_ * coeffs_->load.at(level, j + 1) * rh;
  auto sol = solve_bordered(bt, packed);
  const double tau = sol.back();
  sol.back() = rh - dt_ * tau;
  return sol;
}

std::vector<double> StepOperator::solve_m_transpose(
    int level, std::span<const double> rhs) const {
  const int I = interior_;
  BorderedTridiagonal bt;
  const auto b = build_core(level);
  bt.lower.assign(static_cast<size_t>(I), 0.0);
  bt.diag = b.diag;
  bt.upper.assign(static_cast<size_t>(I), 0.0);
  for (int j = 1; j < I; ++j)
    bt.lower[static_cast<size_t>(j)] = b.upper[static_cast<size_t>(j - 1)];
  for (int j = 0; j + 1 < I; ++j)
    bt.upper[static_cast<size_t>(j)] = b.lower[static_cast<size_t>(j + 1)];
  bt.border_col.assign(static_cast<size_t>(I), 0.0);
  bt.border_col[static_cast<size_t>(tr_j1_)] = dt_ * tr_c1_;
  bt.border_col[static_cast<size_t>(tr_j2_)] = dt_ * tr_c2_;
  bt.border_row.assign(static_cast<size_t>(I), 0.0);
  for (int j = 0; j < I; ++j)
    bt.border_row[static_cast<size_t>(j)] =
        -(coeffs_->coupling.at(level, j + 1) -
          dt_ * coeffs_->load.at(level, j + 1));
  bt.corner = 1.0;

  const double rh = rhs[static_cast<size_t>(I)];
  std::vector<double> packed(static_cast<size_t>(I) + 1, 0.0);
  for (int j = 0; j < I; ++j) packed[static_cast<size_t>(j)] = rhs[static_cast<size_t>(j)];
  packed[static_cast<size_t>(tr_j1_)] -= dt_ * tr_c1_ * rh;
  packed[static_cast<size_t>(tr_j2_)] -= dt_ * tr_c2_ * rh;
  auto sol = solve_bordered(bt, packed);
  double rdot = 0.0;
  for (int j = 0; j < I; ++j)
    rdot += coeffs_->load.at(level, j + 1) * sol[static_cast<size_t>(j)];
  sol.back() = rh - dt_ * rdot;
  return sol;
}

LinearTrajectory solve_linearized(const CoefficientSet& coeffs,
                                  std::span<const double> z0, double h0,
                                  const LinearSources& src) {
  const int n = coeffs.grid.n;
  const int m = coeffs.time.m;
  if (static_cast<int>(z0.size()) != n)
    throw DimensionError("initial profile does not match the grid");
  StepOperator op(coeffs);
  const int I = op.interior_size();
  const int S = op.state_size();
  const double dt = coeffs.time.dt();

  LinearTrajectory out;
  out.grid = coeffs.grid;
  out.time = coeffs.time;
  out.z = Field2D(m + 1, n);
  out.h.assign(static_cast<size_t>(m) + 1, 0.0);
  out.trace.assign(static_cast<size_t>(m) + 1, 0.0);

  std::vector<double> state(static_cast<size_t>(S), 0.0);
  for (int j = 0; j < I; ++j) state[static_cast<size_t>(j)] = z0[static_cast<size_t>(j + 1)];
  state[static_cast<size_t>(I)] = h0;

  auto record = [&](int k, std::span<const double> s) {
    out.z.at(k, 0) = 0.0;
    out.z.at(k, n - 1) = 0.0;
    for (int j = 0; j < I; ++j) out.z.at(k, j + 1) = s[static_cast<size_t>(j)];
    out.h[static_cast<size_t>(k)] = s[static_cast<size_t>(I)];
    out.trace[static_cast<size_t>(k)] = op.trace_of(s);
  };
  record(0, state);

  std::vector<double> rhs(static_cast<size_t>(S), 0.0);
  for (int k = 1; k <= m; ++k) {
    const double t = coeffs.time.t(k);
    op.apply_e(k, state, rhs);
    for (int j = 0; j < I; ++j) {
      const double x = coeffs.grid.x(j + 1);
      double f = 0.0;
      if (src.f1) f += src.f1(x, t);
      if (src.control) f += src.control(x, t);
      if (src.f1_grid) f += src.f1_grid->at(k, j + 1);
      if (src.control_grid) f += src.control_grid->at(k, j + 1);
      rhs[static_cast<size_t>(j)] += dt * f;
    }
    double f2 = 0.0;
    if (src.f2) f2 += src.f2(t);
    if (src.f2_grid) f2 += (*src.f2_grid)[static_cast<size_t>(k)];
    rhs[static_cast<size_t>(I)] += dt * f2;

    state = op.solve_m(k, rhs);
    record(k, state);
  }
  return out;
}

}  // namespace stefan
