#include "stefan/hum.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <utility>

#include "stefan/errors.hpp"
#include "stefan/numerics.hpp"

namespace stefan {

namespace {

/// exp(log_scale) * v formed in log space, so an infinite log_scale paired
/// with a vanished value contributes zero instead of NaN.
double scaled_value(double log_scale, double v) {
  if (v == 0.0) return 0.0;
  const double mag = std::exp(log_scale + std::log(std::abs(v)));
  return std::signbit(v) ? -mag : mag;
}

/// (exp(log_scale) * v)^2 under the same convention.
double scaled_square(double log_scale, double v) {
  if (v == 0.0) return 0.0;
  return std::exp(2.0 * (log_scale + std::log(std::abs(v))));
}

std::span<const double> block(std::span<const double> x, int k, int size) {
  return x.subspan(static_cast<size_t>(k - 1) * size, static_cast<size_t>(size));
}

std::span<double> block(std::span<double> x, int k, int size) {
  return x.subspan(static_cast<size_t>(k - 1) * size, static_cast<size_t>(size));
}

long double dot(std::span<const double> a, std::span<const double> b) {
  long double s = 0.0L;
  for (size_t i = 0; i < a.size(); ++i)
    s += static_cast<long double>(a[i]) * b[i];
  return s;
}

double norm2(std::span<const double> a) {
  return std::sqrt(static_cast<double>(dot(a, a)));
}

}  // namespace

double constrained_trace(const CoefficientSet& coeffs, int level,
                         std::span<const double> interior, double gamma) {
  const int n = coeffs.grid.n;
  if (static_cast<int>(interior.size()) != n - 2)
    throw DimensionError("constrained_trace: interior profile has wrong size");
  const double dx = coeffs.grid.dx();
  double sum = 0.0;
  for (int i = 0; i < n - 2; ++i)
    sum += coeffs.coupling.at(level, i + 1) * interior[i];
  const double denom = 1.0 - 0.5 * dx * coeffs.coupling.at(level, n - 1);
  if (denom == 0.0)
    throw SingularSolveError(
        "constrained_trace: the nonlocal constraint is singular at this level");
  return (gamma + dx * sum) / denom;
}

double constraint_residual(const CoefficientSet& coeffs, int level,
                           std::span<const double> phi, double gamma) {
  const int n = coeffs.grid.n;
  if (static_cast<int>(phi.size()) != n)
    throw DimensionError("constraint_residual: profile has wrong size");
  const double paired =
      inner_trapezoid(coeffs.coupling.slice(level), phi, coeffs.grid.dx());
  return std::abs(phi[static_cast<size_t>(n - 1)] - gamma - paired);
}

GramOperator::GramOperator(const CoefficientSet& coeffs,
                           const WeightTable& table, const HumOptions& options)
    : coeffs_(&coeffs), op_(coeffs) {
  const SpaceGrid& grid = coeffs.grid;
  const TimeGrid& time = coeffs.time;
  if (table.grid.n != grid.n || table.time.m != time.m)
    throw DimensionError("GramOperator: weight table grids do not match");
  if (time.m < 2)
    throw DimensionError("GramOperator: need at least two time levels");

  interior_ = op_.interior_size();
  slice_ = op_.state_size();
  dt_ = time.dt();
  dx_ = grid.dx();

  if (!(options.omega.left < table.eta.c1 && table.eta.c2 < options.omega.right))
    throw GeometryError(
        "GramOperator: observation window must strictly contain the weight "
        "plateau");
  window_mask_.assign(static_cast<size_t>(interior_), 0);
  int inside = 0;
  for (int j = 0; j < interior_; ++j) {
    if (options.omega.contains(grid.x(j + 1))) {
      window_mask_[static_cast<size_t>(j)] = 1;
      ++inside;
    }
  }
  if (inside == 0)
    throw GeometryError(
        "GramOperator: observation window contains no interior grid node");

  const double floor_log = options.log_weight_floor;
  if (!std::isfinite(floor_log) || floor_log >= 0.0)
    throw ParameterError(
        "GramOperator: the weight floor must be a finite negative log value");

  kept_ = time.m;
  w_state_.assign(static_cast<size_t>(kept_) + 1, 0.0);
  w_front_.assign(static_cast<size_t>(kept_) + 1, 0.0);
  w_window_.assign(static_cast<size_t>(kept_) + 1, 0.0);
  for (int k = 1; k <= kept_; ++k) {
    const size_t ks = static_cast<size_t>(k);
    w_state_[ks] = std::exp(std::max(-2.0 * table.log_rho0[ks], floor_log));
    w_front_[ks] = std::exp(std::max(-2.0 * table.log_rho1[ks], floor_log));
    w_window_[ks] = std::exp(std::max(-2.0 * table.log_rho2[ks], floor_log));
    if (!std::isfinite(w_state_[ks]) || !std::isfinite(w_front_[ks]) ||
        !std::isfinite(w_window_[ks]))
      throw ParameterError(
          "GramOperator: weight table produces non-finite level weights");
  }
}

int GramOperator::window_nodes() const {
  int count = 0;
  for (char msk : window_mask_) count += msk != 0;
  return count;
}

double GramOperator::state_weight(int level) const {
  return w_state_[static_cast<size_t>(level)];
}

double GramOperator::front_weight(int level) const {
  return w_front_[static_cast<size_t>(level)];
}

double GramOperator::window_weight(int level) const {
  return w_window_[static_cast<size_t>(level)];
}

bool GramOperator::in_window(int interior_index) const {
  return window_mask_[static_cast<size_t>(interior_index)] != 0;
}

void GramOperator::apply_c(int level, std::span<const double> x,
                           std::span<double> scratch,
                           std::span<double> out) const {
  for (int j = 0; j < slice_; ++j)
    scratch[static_cast<size_t>(j)] = x[static_cast<size_t>(j)] * op_.weight(j);
  op_.apply_m_transpose(level, scratch, out);
  for (int j = 0; j < slice_; ++j)
    out[static_cast<size_t>(j)] /= dt_ * op_.weight(j);
}

void GramOperator::apply_c_transpose(int level, std::span<const double> x,
                                     std::span<double> scratch,
                                     std::span<double> out) const {
  for (int j = 0; j < slice_; ++j)
    scratch[static_cast<size_t>(j)] = x[static_cast<size_t>(j)] / op_.weight(j);
  op_.apply_m(level, scratch, out);
  for (int j = 0; j < slice_; ++j)
    out[static_cast<size_t>(j)] *= op_.weight(j) / dt_;
}

void GramOperator::dual_chain(std::span<const double> x, int level,
                              std::span<double> out) const {
  if (static_cast<int>(x.size()) != size() ||
      static_cast<int>(out.size()) != slice_)
    throw DimensionError("dual_chain: vector sizes do not match the operator");
  std::vector<double> scratch(static_cast<size_t>(slice_));
  apply_c(level, block(x, level, slice_), scratch, out);
  if (level < kept_) {
    auto next = block(x, level + 1, slice_);
    const double qn = coeffs_->qbar[static_cast<size_t>(level) + 1];
    for (int j = 0; j < interior_; ++j)
      out[static_cast<size_t>(j)] -= qn * next[static_cast<size_t>(j)] / dt_;
    out[static_cast<size_t>(interior_)] -=
        next[static_cast<size_t>(interior_)] / dt_;
  }
}

void GramOperator::apply(std::span<const double> x, std::span<double> y) const {
  if (static_cast<int>(x.size()) != size() ||
      static_cast<int>(y.size()) != size())
    throw DimensionError("GramOperator::apply: vector sizes do not match");
  std::fill(y.begin(), y.end(), 0.0);
  std::vector<double> u(static_cast<size_t>(slice_));
  std::vector<double> t(static_cast<size_t>(slice_));
  std::vector<double> back(static_cast<size_t>(slice_));
  std::vector<double> scratch(static_cast<size_t>(slice_));
  const size_t I = static_cast<size_t>(interior_);

  for (int k = 1; k <= kept_; ++k) {
    auto xk = block(x, k, slice_);
    apply_c(k, xk, scratch, u);
    const double qn = (k < kept_) ? coeffs_->qbar[static_cast<size_t>(k) + 1]
                                  : 0.0;
    if (k < kept_) {
      auto xn = block(x, k + 1, slice_);
      for (size_t j = 0; j < I; ++j) u[j] -= qn * xn[j] / dt_;
      u[I] -= xn[I] / dt_;
    }

    const double rz = dt_ * dx_ * state_weight(k);
    const double rh = dt_ * front_weight(k);
    for (size_t j = 0; j < I; ++j) t[j] = rz * u[j];
    t[I] = rh * u[I];

    apply_c_transpose(k, t, scratch, back);
    auto yk = block(y, k, slice_);
    for (int j = 0; j < slice_; ++j)
      yk[static_cast<size_t>(j)] += back[static_cast<size_t>(j)];
    const double wz = dt_ * dx_ * window_weight(k);
    for (size_t j = 0; j < I; ++j)
      if (window_mask_[j]) yk[j] += wz * xk[j];

    if (k < kept_) {
      auto yn = block(y, k + 1, slice_);
      for (size_t j = 0; j < I; ++j) yn[j] -= qn * t[j] / dt_;
      yn[I] -= t[I] / dt_;
    }
  }
}

GramOperator::Components GramOperator::components(
    std::span<const double> x) const {
  if (static_cast<int>(x.size()) != size())
    throw DimensionError("components: vector size does not match the operator");
  Components c;
  std::vector<double> u(static_cast<size_t>(slice_));
  const size_t I = static_cast<size_t>(interior_);
  for (int k = 1; k <= kept_; ++k) {
    dual_chain(x, k, u);
    double su = 0.0;
    for (size_t j = 0; j < I; ++j) su += u[j] * u[j];
    c.state += dt_ * dx_ * state_weight(k) * su;
    c.front += dt_ * front_weight(k) * u[I] * u[I];
    auto xk = block(x, k, slice_);
    double sw = 0.0;
    for (size_t j = 0; j < I; ++j)
      if (window_mask_[j]) sw += xk[j] * xk[j];
    c.window += dt_ * dx_ * window_weight(k) * sw;
  }
  return c;
}

double GramOperator::quadratic_form(std::span<const double> x) const {
  return components(x).total();
}

std::vector<double> GramOperator::diagonal() const {
  std::vector<double> d(static_cast<size_t>(size()), 0.0);
  std::vector<double> e(static_cast<size_t>(slice_), 0.0);
  std::vector<double> col(static_cast<size_t>(slice_));
  const size_t I = static_cast<size_t>(interior_);

  for (int k = 1; k <= kept_; ++k) {
    auto dk = block(std::span<double>(d), k, slice_);
    std::vector<double> acc(static_cast<size_t>(slice_), 0.0);
    for (int j = 0; j < slice_; ++j) {
      e[static_cast<size_t>(j)] = 1.0;
      op_.apply_m(k, e, col);
      e[static_cast<size_t>(j)] = 0.0;
      const double uj = (j < interior_) ? dt_ * state_weight(k) / dx_
                                        : dt_ * front_weight(k);
      for (int i = 0; i < slice_; ++i) {
        const double ci = col[static_cast<size_t>(i)];
        if (ci != 0.0) acc[static_cast<size_t>(i)] += uj * ci * ci;
      }
    }
    for (int i = 0; i < slice_; ++i) {
      const double wi = op_.weight(i);
      dk[static_cast<size_t>(i)] +=
          wi * wi * acc[static_cast<size_t>(i)] / (dt_ * dt_);
    }
    const double wz = dt_ * dx_ * window_weight(k);
    for (size_t j = 0; j < I; ++j)
      if (window_mask_[j]) dk[j] += wz;
    if (k >= 2) {
      const double qk = coeffs_->qbar[static_cast<size_t>(k)];
      const double dz = qk * qk * dx_ * state_weight(k - 1) / dt_;
      for (size_t j = 0; j < I; ++j) dk[j] += dz;
      dk[I] += front_weight(k - 1) / dt_;
    }
  }
  return d;
}

namespace {

/// Dense block-tridiagonal Cholesky factorization of the Gram operator in
/// extended precision, with Jacobi equilibration to absorb the exponential
/// spread of the weighted scales. Memory is two S x S blocks per kept time
/// level, so callers gate the admitted problem size.
///
/// The equilibrated operator still carries the dynamic range of the weight
/// family along the Schur chain, so pivots can sink below what any float
/// format resolves. A sunk pivot is floored and its column dropped from the
/// factor; the result is then a positive definite approximation of the
/// operator, and the solver uses it as a preconditioner rather than as an
/// exact inverse.
class BlockCholesky {
 public:
  explicit BlockCholesky(const GramOperator& gram)
      : kept_(gram.kept_levels()), slice_(gram.slice_size()) {
    assemble_and_factor(gram);
  }

  /// Apply the inverse of the factored equilibrated operator.
  void solve_equilibrated(std::span<const double> b, std::span<double> x) const {
    std::vector<long double> v(b.begin(), b.end());
    solve_scaled(v);
    for (size_t i = 0; i < v.size(); ++i) x[i] = static_cast<double>(v[i]);
  }

  const std::vector<long double>& scale() const { return scale_; }
  int floored_pivots() const { return floored_; }

 private:
  using Block = std::vector<long double>;

  long double& entry(Block& blk, int i, int j) const {
    return blk[static_cast<size_t>(i) * slice_ + j];
  }
  long double entry(const Block& blk, int i, int j) const {
    return blk[static_cast<size_t>(i) * slice_ + j];
  }

  void assemble_and_factor(const GramOperator& gram) {
    const int S = slice_;
    const int I = S - 1;
    const StepOperator& op = gram.step();
    const CoefficientSet& coeffs = op.coefficients();
    const double dt = coeffs.time.dt();
    const double dx = coeffs.grid.dx();

    scale_.assign(static_cast<size_t>(kept_) * S, 0.0L);
    lower_.assign(static_cast<size_t>(kept_),
                  Block(static_cast<size_t>(S) * S, 0.0L));
    link_.assign(static_cast<size_t>(kept_ > 0 ? kept_ - 1 : 0),
                 Block(static_cast<size_t>(S) * S, 0.0L));

    std::vector<std::vector<double>> cols(
        static_cast<size_t>(S), std::vector<double>(static_cast<size_t>(S)));
    std::vector<std::vector<int>> support(static_cast<size_t>(S));
    std::vector<double> unit(static_cast<size_t>(S), 0.0);

    Block a(static_cast<size_t>(S) * S);
    Block b(static_cast<size_t>(S) * S);
    Block pending;

    for (int k = 1; k <= kept_; ++k) {
      // Materialize the columns of the step matrix at this level; all but
      // the trace and front columns carry at most three entries.
      for (int j = 0; j < S; ++j) {
        unit[static_cast<size_t>(j)] = 1.0;
        op.apply_m(k, unit, cols[static_cast<size_t>(j)]);
        unit[static_cast<size_t>(j)] = 0.0;
        auto& sup = support[static_cast<size_t>(j)];
        sup.clear();
        for (int i = 0; i < S; ++i)
          if (cols[static_cast<size_t>(j)][static_cast<size_t>(i)] != 0.0)
            sup.push_back(i);
      }

      std::fill(a.begin(), a.end(), 0.0L);
      for (int j = 0; j < S; ++j) {
        const long double uj = (j < I) ? dt * gram.state_weight(k) / dx
                                       : dt * gram.front_weight(k);
        const auto& sup = support[static_cast<size_t>(j)];
        const auto& cj = cols[static_cast<size_t>(j)];
        for (int r : sup) {
          const long double cr = uj * cj[static_cast<size_t>(r)];
          for (int c : sup) {
            if (c > r) break;
            entry(a, r, c) += cr * cj[static_cast<size_t>(c)];
          }
        }
      }
      for (int r = 0; r < S; ++r) {
        const long double wr = op.weight(r);
        for (int c = 0; c <= r; ++c) {
          const long double wc = op.weight(c);
          entry(a, r, c) *= wr * wc / (static_cast<long double>(dt) * dt);
        }
      }
      const long double wz = dt * dx * gram.window_weight(k);
      for (int j = 0; j < I; ++j)
        if (gram.in_window(j)) entry(a, j, j) += wz;
      if (k >= 2) {
        const long double qk = coeffs.qbar[static_cast<size_t>(k)];
        const long double dz = qk * qk * dx * gram.state_weight(k - 1) / dt;
        for (int j = 0; j < I; ++j) entry(a, j, j) += dz;
        entry(a, I, I) += gram.front_weight(k - 1) / dt;
      }

      // Equilibration scale from the untouched diagonal of this block.
      auto dsc = std::span<long double>(scale_).subspan(
          static_cast<size_t>(k - 1) * S, static_cast<size_t>(S));
      for (int i = 0; i < S; ++i) {
        const long double dii = entry(a, i, i);
        if (!(dii > 0.0L))
          throw ConditioningError(
              "gram factorization: nonpositive diagonal entry");
        dsc[static_cast<size_t>(i)] = sqrtl(dii);
      }
      for (int r = 0; r < S; ++r)
        for (int c = 0; c <= r; ++c)
          entry(a, r, c) /= dsc[static_cast<size_t>(r)] * dsc[static_cast<size_t>(c)];

      // Finish the coupling block from the previous level now that both
      // scales exist, then fold its Schur complement into this block.
      if (k >= 2) {
        auto psc = std::span<const long double>(scale_).subspan(
            static_cast<size_t>(k - 2) * S, static_cast<size_t>(S));
        for (int r = 0; r < S; ++r)
          for (int c = 0; c < S; ++c)
            entry(pending, r, c) /=
                psc[static_cast<size_t>(r)] * dsc[static_cast<size_t>(c)];

        Block& lp = lower_[static_cast<size_t>(k - 2)];
        Block& gt = link_[static_cast<size_t>(k - 2)];
        // gt = L_{k-1}^{-1} * pending, columnwise forward substitution.
        for (int c = 0; c < S; ++c) {
          for (int i = 0; i < S; ++i) {
            long double t = entry(pending, i, c);
            for (int r = 0; r < i; ++r)
              t -= entry(lp, i, r) * entry(gt, r, c);
            entry(gt, i, c) = t / entry(lp, i, i);
          }
        }
        for (int r = 0; r < S; ++r)
          for (int c = 0; c <= r; ++c) {
            long double t = entry(a, r, c);
            for (int j = 0; j < S; ++j)
              t -= entry(gt, j, r) * entry(gt, j, c);
            entry(a, r, c) = t;
          }
      }

      // Lower Cholesky factor of the (Schur-reduced) diagonal block. A
      // pivot sunk below the resolvable range is floored and its column is
      // dropped, which keeps the factor positive definite and bounded.
      Block& lk = lower_[static_cast<size_t>(k - 1)];
      for (int c = 0; c < S; ++c) {
        long double s = entry(a, c, c);
        for (int r = 0; r < c; ++r) s -= entry(lk, c, r) * entry(lk, c, r);
        if (s < kPivotFloor) {
          ++floored_;
          entry(lk, c, c) = sqrtl(kPivotFloor);
          for (int i = c + 1; i < S; ++i) entry(lk, i, c) = 0.0L;
          continue;
        }
        const long double piv = sqrtl(s);
        entry(lk, c, c) = piv;
        for (int i = c + 1; i < S; ++i) {
          long double t = entry(a, i, c);
          for (int r = 0; r < c; ++r) t -= entry(lk, i, r) * entry(lk, c, r);
          entry(lk, i, c) = t / piv;
        }
      }

      // Raw coupling block to the next level, scaled at the next pass.
      if (k < kept_) {
        std::fill(b.begin(), b.end(), 0.0L);
        const double qn = coeffs.qbar[static_cast<size_t>(k) + 1];
        for (int c = 0; c < S; ++c) {
          const long double cc = (c < I) ? dt * gram.state_weight(k) * qn
                                         : dt * gram.front_weight(k);
          const auto& sup = support[static_cast<size_t>(c)];
          const auto& cj = cols[static_cast<size_t>(c)];
          for (int i : sup)
            entry(b, i, c) = -op.weight(i) * cj[static_cast<size_t>(i)] * cc /
                             (static_cast<long double>(dt) * dt);
        }
        pending = b;
      }
    }
  }

  /// In-place solve of the equilibrated system for a scaled right side.
  void solve_scaled(std::vector<long double>& v) const {
    const int S = slice_;
    // Forward pass through the block rows.
    for (int k = 0; k < kept_; ++k) {
      long double* vk = v.data() + static_cast<size_t>(k) * S;
      if (k > 0) {
        const Block& gt = link_[static_cast<size_t>(k - 1)];
        const long double* vp = v.data() + static_cast<size_t>(k - 1) * S;
        // vk -= gt^T vp.
        for (int i = 0; i < S; ++i) {
          long double t = 0.0L;
          for (int r = 0; r < S; ++r) t += entry(gt, r, i) * vp[r];
          vk[i] -= t;
        }
      }
      const Block& lk = lower_[static_cast<size_t>(k)];
      for (int i = 0; i < S; ++i) {
        long double t = vk[i];
        for (int r = 0; r < i; ++r) t -= entry(lk, i, r) * vk[r];
        vk[i] = t / entry(lk, i, i);
      }
    }
    // Backward pass.
    for (int k = kept_ - 1; k >= 0; --k) {
      long double* vk = v.data() + static_cast<size_t>(k) * S;
      if (k + 1 < kept_) {
        const Block& gt = link_[static_cast<size_t>(k)];
        const long double* vn = v.data() + static_cast<size_t>(k + 1) * S;
        for (int i = 0; i < S; ++i) {
          long double t = 0.0L;
          for (int c = 0; c < S; ++c) t += entry(gt, i, c) * vn[c];
          vk[i] -= t;
        }
      }
      const Block& lk = lower_[static_cast<size_t>(k)];
      for (int i = S - 1; i >= 0; --i) {
        long double t = vk[i];
        for (int r = i + 1; r < S; ++r) t -= entry(lk, r, i) * vk[r];
        vk[i] = t / entry(lk, i, i);
      }
    }
  }

  static constexpr long double kPivotFloor = 1e-20L;

  int kept_ = 0;
  int slice_ = 0;
  int floored_ = 0;
  std::vector<long double> scale_;
  std::vector<Block> lower_;
  std::vector<Block> link_;
};

struct IterativeResult {
  bool converged = false;
  int iterations = 0;
  double rel_residual = 0.0;
};

/// Conjugate gradients on a caller-supplied operator and preconditioner.
/// Keeps the iterate with the best recurrence residual seen, since near
/// stagnation the recurrence can wander.
template <class Apply, class Precond>
IterativeResult run_cg(Apply&& apply, Precond&& precond,
                       std::span<const double> b, std::span<double> x,
                       double tol, int max_iter) {
  const size_t size = b.size();
  std::fill(x.begin(), x.end(), 0.0);
  IterativeResult res;
  const double bnorm = norm2(b);
  if (bnorm == 0.0) {
    res.converged = true;
    return res;
  }

  std::vector<double> r(b.begin(), b.end());
  std::vector<double> z(size), p(size), q(size);
  std::vector<double> best_x(x.begin(), x.end());
  double best_res = 1.0;
  precond(std::span<const double>(r), std::span<double>(z));
  p = z;
  long double rz = dot(r, z);

  for (int it = 1; it <= max_iter; ++it) {
    apply(std::span<const double>(p), std::span<double>(q));
    const long double pq = dot(p, q);
    if (!(pq > 0.0L) || !std::isfinite(static_cast<double>(pq))) break;
    const double alpha = static_cast<double>(rz / pq);
    for (size_t i = 0; i < size; ++i) x[i] += alpha * p[i];
    for (size_t i = 0; i < size; ++i) r[i] -= alpha * q[i];
    res.iterations = it;
    res.rel_residual = norm2(r) / bnorm;
    if (res.rel_residual < best_res) {
      best_res = res.rel_residual;
      std::copy(x.begin(), x.end(), best_x.begin());
    }
    if (res.rel_residual <= tol) {
      res.converged = true;
      return res;
    }
    precond(std::span<const double>(r), std::span<double>(z));
    const long double rz_next = dot(r, z);
    if (!(rz_next > 0.0L)) break;
    const double beta = static_cast<double>(rz_next / rz);
    for (size_t i = 0; i < size; ++i) p[i] = z[i] + beta * p[i];
    rz = rz_next;
  }
  std::copy(best_x.begin(), best_x.end(), x.begin());
  res.rel_residual = best_res;
  return res;
}

/// Both solver paths iterate in the Jacobi-equilibrated frame, where every
/// vector stays within floating-point range; the raw frame mixes magnitudes
/// across the full weight span and overflows intermediate products.
struct EquilibratedProblem {
  const GramOperator* gram;
  std::vector<double> scale;  // sqrt of the operator diagonal
  std::vector<double> rhs;    // equilibrated right side
  std::vector<double> tmp_in, tmp_out;

  EquilibratedProblem(const GramOperator& g, std::span<const double> b,
                      std::vector<double> diag_scale)
      : gram(&g), scale(std::move(diag_scale)) {
    rhs.resize(b.size());
    tmp_in.resize(b.size());
    tmp_out.resize(b.size());
    for (size_t i = 0; i < b.size(); ++i) rhs[i] = b[i] / scale[i];
  }

  void apply(std::span<const double> v, std::span<double> out) {
    for (size_t i = 0; i < v.size(); ++i) tmp_in[i] = v[i] / scale[i];
    gram->apply(tmp_in, tmp_out);
    for (size_t i = 0; i < v.size(); ++i) out[i] = tmp_out[i] / scale[i];
  }

  void recover(std::span<const double> xhat, std::span<double> x) const {
    for (size_t i = 0; i < xhat.size(); ++i) x[i] = xhat[i] / scale[i];
  }
};

IterativeResult jacobi_cg(const GramOperator& gram, std::span<const double> b,
                          std::span<double> x, double tol, int max_iter) {
  std::vector<double> d = gram.diagonal();
  for (double& v : d) v = std::sqrt(v);
  EquilibratedProblem prob(gram, b, std::move(d));
  std::vector<double> xhat(b.size(), 0.0);
  auto apply = [&prob](std::span<const double> v, std::span<double> out) {
    prob.apply(v, out);
  };
  auto precond = [](std::span<const double> r, std::span<double> z) {
    std::copy(r.begin(), r.end(), z.begin());
  };
  auto res = run_cg(apply, precond, prob.rhs, std::span<double>(xhat), tol,
                    max_iter);
  prob.recover(xhat, x);
  return res;
}

IterativeResult factored_cg(const GramOperator& gram,
                            std::span<const double> b, std::span<double> x,
                            double tol, int max_iter) {
  BlockCholesky factor(gram);
  std::vector<double> d(factor.scale().begin(), factor.scale().end());
  EquilibratedProblem prob(gram, b, std::move(d));
  std::vector<double> xhat(b.size(), 0.0);
  auto apply = [&prob](std::span<const double> v, std::span<double> out) {
    prob.apply(v, out);
  };
  auto precond = [&factor](std::span<const double> r, std::span<double> z) {
    factor.solve_equilibrated(r, z);
  };
  auto res = run_cg(apply, precond, prob.rhs, std::span<double>(xhat), tol,
                    max_iter);
  prob.recover(xhat, x);
  return res;
}

}  // namespace

double smallest_gram_eigenvalue(const GramOperator& gram, RandomStream& rng,
                                int iterations) {
  BlockCholesky factor(gram);
  std::vector<double> d(factor.scale().begin(), factor.scale().end());
  const size_t size = static_cast<size_t>(gram.size());

  std::vector<double> v(size), w(size), tin(size), tout(size);
  for (double& c : v) c = rng.normal();
  double nv = norm2(v);
  for (double& c : v) c /= nv;

  // Inverse iteration on the equilibrated operator D^-1 G D^-1.
  for (int it = 0; it < iterations; ++it) {
    factor.solve_equilibrated(v, w);
    nv = norm2(w);
    if (!(nv > 0.0) || !std::isfinite(nv))
      throw ConditioningError(
          "smallest_gram_eigenvalue: inverse iteration broke down");
    for (size_t i = 0; i < size; ++i) v[i] = w[i] / nv;
  }

  // Rayleigh quotient of the equilibrated operator at the converged vector.
  for (size_t i = 0; i < size; ++i) tin[i] = v[i] / d[i];
  gram.apply(tin, tout);
  long double num = 0.0L;
  for (size_t i = 0; i < size; ++i)
    num += static_cast<long double>(tout[i]) / d[i] * v[i];
  return static_cast<double>(num / dot(v, v));
}

double WeightedEstimate::ratio() const {
  const double t = total();
  if (t == 0.0 && data == 0.0) return 0.0;
  return t / data;
}

HumSolution solve_null_control(const CoefficientSet& coeffs,
                               const WeightTable& table,
                               const ControlData& data,
                               const HumOptions& options) {
  GramOperator gram(coeffs, table, options);
  const int n = coeffs.grid.n;
  const int m = coeffs.time.m;
  const int S = gram.slice_size();
  const int I = gram.slice_size() - 1;
  const int K = gram.kept_levels();
  const double dt = coeffs.time.dt();
  const double dx = coeffs.grid.dx();
  const size_t total = static_cast<size_t>(gram.size());

  if (static_cast<int>(data.z0.size()) != n)
    throw DimensionError("solve_null_control: initial profile size mismatch");
  if (data.f1 && (data.f1->levels != m + 1 || data.f1->n != n))
    throw DimensionError("solve_null_control: distributed source shape mismatch");
  if (data.f2 && static_cast<int>(data.f2->size()) !=
                     static_cast<int>(m) + 1)
    throw DimensionError("solve_null_control: front source size mismatch");

  // Weighted mass of the admissible data. The growing source weight is
  // capped at the inverse of the floored level-weight family, so the mass
  // measures decay only as far as the synthesis itself resolves it; sources
  // that stop decaying before the cap still dominate the mass, and a
  // non-finite value signals data outside the weighted class altogether.
  const double cap = -0.5 * options.log_weight_floor;
  double data_mass = inner_trapezoid(data.z0, data.z0, dx) + data.h0 * data.h0;
  if (data.f1) {
    for (int k = 1; k <= m; ++k) {
      const double lr =
          std::min(table.log_rho3[static_cast<size_t>(k)], cap);
      for (int j = 1; j <= n - 2; ++j)
        data_mass += dt * dx * scaled_square(lr, data.f1->at(k, j));
    }
  }
  if (data.f2) {
    for (int k = 1; k <= m; ++k)
      data_mass +=
          dt * scaled_square(std::min(table.log_rho3[static_cast<size_t>(k)], cap),
                             (*data.f2)[static_cast<size_t>(k)]);
  }
  if (!std::isfinite(data_mass))
    throw SupportError(
        "solve_null_control: data carry non-finite weighted mass even under "
        "the capped admissibility weight");

  // Right side: duality pairing of the data against the test levels.
  std::vector<double> b(total, 0.0);
  for (int k = 1; k <= K; ++k) {
    auto bk = block(std::span<double>(b), k, S);
    if (data.f1)
      for (int j = 0; j < I; ++j)
        bk[static_cast<size_t>(j)] = dt * dx * data.f1->at(k, j + 1);
    if (data.f2) bk[static_cast<size_t>(I)] = dt * (*data.f2)[static_cast<size_t>(k)];
  }
  {
    auto b1 = block(std::span<double>(b), 1, S);
    const double q1 = coeffs.qbar[1];
    for (int j = 0; j < I; ++j)
      b1[static_cast<size_t>(j)] += q1 * dx * data.z0[static_cast<size_t>(j) + 1];
    b1[static_cast<size_t>(I)] += data.h0;
  }

  // Minimize through the selected solver. The factored path converges in a
  // handful of iterations when it applies; plain Jacobi iteration is kept
  // for systems beyond the factorization memory gate.
  std::vector<double> psi(total, 0.0);
  int cg_iterations = 0;
  double solver_residual = 0.0;
  const bool fits_direct = gram.size() <= options.direct_limit;
  IterativeResult res;
  switch (options.solver) {
    case GramSolver::direct:
      res = factored_cg(gram, b, psi, options.cg_tol, 100);
      break;
    case GramSolver::conjugate_gradient:
      res = jacobi_cg(gram, b, psi, options.cg_tol, options.cg_max_iter);
      break;
    case GramSolver::automatic:
      if (fits_direct)
        res = factored_cg(gram, b, psi, options.cg_tol, 100);
      else
        res = jacobi_cg(gram, b, psi, options.cg_tol, options.cg_max_iter);
      break;
  }
  cg_iterations = res.iterations;
  solver_residual = res.rel_residual;
  if (!res.converged)
    throw ConditioningError(
        "solve_null_control: the linear solver stagnated at relative "
        "residual " +
        std::to_string(res.rel_residual) + " after " +
        std::to_string(res.iterations) +
        " iterations; use the factored solver or raise the weight floor");
  for (double c : psi)
    if (!std::isfinite(c))
      throw ConditioningError(
          "solve_null_control: minimizer has non-finite components");

  // Recover the weighted state, front, and window control.
  HumSolution sol;
  sol.grid = coeffs.grid;
  sol.time = coeffs.time;
  sol.phi = Field2D(m + 1, n);
  sol.gamma.assign(static_cast<size_t>(m) + 1, 0.0);
  sol.z = Field2D(m + 1, n);
  sol.h.assign(static_cast<size_t>(m) + 1, 0.0);
  sol.w = Field2D(m + 1, n);
  sol.cg_iterations = cg_iterations;
  sol.solver_residual = solver_residual;

  for (int i = 0; i < n; ++i) sol.z.at(0, i) = data.z0[static_cast<size_t>(i)];
  sol.h[0] = data.h0;

  std::vector<double> u(static_cast<size_t>(S));
  for (int k = 1; k <= K; ++k) {
    auto pk = block(std::span<const double>(psi), k, S);
    gram.dual_chain(psi, k, u);
    for (int j = 0; j < I; ++j)
      sol.z.at(k, j + 1) = gram.state_weight(k) * u[static_cast<size_t>(j)];
    sol.h[static_cast<size_t>(k)] = gram.front_weight(k) * u[static_cast<size_t>(I)];
    for (int j = 0; j < I; ++j)
      if (gram.in_window(j))
        sol.w.at(k, j + 1) = -gram.window_weight(k) * pk[static_cast<size_t>(j)];
    for (int j = 0; j < I; ++j)
      sol.phi.at(k, j + 1) = pk[static_cast<size_t>(j)];
    sol.gamma[static_cast<size_t>(k)] = pk[static_cast<size_t>(I)];
    sol.phi.at(k, n - 1) = constrained_trace(
        coeffs, k, pk.subspan(0, static_cast<size_t>(I)),
        sol.gamma[static_cast<size_t>(k)]);
  }

  auto comps = gram.components(psi);
  sol.weighted.state = comps.state;
  sol.weighted.front = comps.front;
  sol.weighted.control = comps.window;
  sol.weighted.data = data_mass;

  // Verify by marching the forward system with the recovered control.
  LinearSources src;
  src.f1_grid = data.f1;
  src.f2_grid = data.f2;
  src.control_grid = &sol.w;
  LinearTrajectory traj = solve_linearized(coeffs, data.z0, data.h0, src);

  sol.terminal_state = l2_norm(traj.z.slice(m), dx);
  sol.terminal_front = std::abs(traj.h[static_cast<size_t>(m)]);
  double gap = 0.0;
  std::vector<double> diff(static_cast<size_t>(n));
  for (int k = 1; k <= K; ++k) {
    for (int i = 0; i < n; ++i)
      diff[static_cast<size_t>(i)] = sol.z.at(k, i) - traj.z.at(k, i);
    gap = std::max(gap, l2_norm(diff, dx));
    gap = std::max(gap, std::abs(sol.h[static_cast<size_t>(k)] -
                                 traj.h[static_cast<size_t>(k)]));
  }
  sol.resimulation_gap = gap;
  return sol;
}

WeightedRegularityReport verify_weighted_regularity(
    const CoefficientSet& coeffs, const WeightTable& table,
    const HumSolution& sol, const ControlData& data,
    const HumOptions& options) {
  const int n = coeffs.grid.n;
  const int m = coeffs.time.m;
  const int K = m;
  if (table.grid.n != n || table.time.m != m)
    throw DimensionError("verify_weighted_regularity: weight table mismatch");
  if (sol.z.levels != m + 1 || sol.z.n != n)
    throw DimensionError("verify_weighted_regularity: solution shape mismatch");
  const double dt = coeffs.time.dt();
  const double dx = coeffs.grid.dx();

  // Regularity weight clipped at the solver's flooring threshold. The
  // recovered state decays with the floored weight family, so the membership
  // statement that remains checkable pairs it with the matching clipped
  // weight; past the clip the scaled system coincides with the raw one.
  const double clip = -0.5 * options.log_weight_floor;
  std::vector<double> lr4(static_cast<size_t>(m) + 1, 0.0);
  for (int k = 0; k <= m; ++k)
    lr4[static_cast<size_t>(k)] =
        std::min(table.log_rho4[static_cast<size_t>(k)], clip);

  // Scaled pair over all levels, formed in log space.
  Field2D zs(K + 1, n);
  std::vector<double> hs(static_cast<size_t>(K) + 1, 0.0);
  for (int i = 0; i < n; ++i)
    zs.at(0, i) = scaled_value(lr4[0], data.z0[static_cast<size_t>(i)]);
  hs[0] = scaled_value(lr4[0], data.h0);
  for (int k = 1; k <= K; ++k) {
    const double lr = lr4[static_cast<size_t>(k)];
    for (int i = 0; i < n; ++i) zs.at(k, i) = scaled_value(lr, sol.z.at(k, i));
    hs[static_cast<size_t>(k)] =
        scaled_value(lr, sol.h[static_cast<size_t>(k)]);
  }

  WeightedRegularityReport rep;
  double sl2 = 0.0, sx = 0.0, sxx = 0.0, st = 0.0, fl2 = 0.0, ft = 0.0;
  for (int k = 1; k <= K; ++k) {
    for (int i = 1; i <= n - 2; ++i) {
      const double c = zs.at(k, i);
      const double l = zs.at(k, i - 1);
      const double r = zs.at(k, i + 1);
      sl2 += dt * dx * c * c;
      const double gx = (r - l) / (2.0 * dx);
      sx += dt * dx * gx * gx;
      const double gxx = (l - 2.0 * c + r) / (dx * dx);
      sxx += dt * dx * gxx * gxx;
      const double gt = (c - zs.at(k - 1, i)) / dt;
      st += dt * dx * gt * gt;
    }
    const double hk = hs[static_cast<size_t>(k)];
    fl2 += dt * hk * hk;
    const double ght = (hk - hs[static_cast<size_t>(k) - 1]) / dt;
    ft += dt * ght * ght;
  }
  rep.state_l2 = std::sqrt(sl2);
  rep.state_x = std::sqrt(sx);
  rep.state_xx = std::sqrt(sxx);
  rep.state_t = std::sqrt(st);
  rep.front_l2 = std::sqrt(fl2);
  rep.front_t = std::sqrt(ft);
  rep.terminal_weighted =
      l2_norm(zs.slice(K), dx) + std::abs(hs[static_cast<size_t>(K)]);

  // Defect of the scaled pair in its own marching system: the sources gain
  // the scale and a commutator from its change between adjacent levels.
  StepOperator op(coeffs);
  const int S = op.state_size();
  const int I = op.interior_size();
  std::vector<double> cur(static_cast<size_t>(S));
  std::vector<double> prev(static_cast<size_t>(S));
  std::vector<double> raw_prev(static_cast<size_t>(S));
  std::vector<double> lhs(static_cast<size_t>(S));
  std::vector<double> epart(static_cast<size_t>(S));
  std::vector<double> eraw(static_cast<size_t>(S));
  double worst = 0.0;
  for (int k = 1; k <= K; ++k) {
    const double lr = lr4[static_cast<size_t>(k)];
    for (int j = 0; j < I; ++j) {
      cur[static_cast<size_t>(j)] = zs.at(k, j + 1);
      prev[static_cast<size_t>(j)] = zs.at(k - 1, j + 1);
      raw_prev[static_cast<size_t>(j)] = sol.z.at(k - 1, j + 1);
    }
    cur[static_cast<size_t>(I)] = hs[static_cast<size_t>(k)];
    prev[static_cast<size_t>(I)] = hs[static_cast<size_t>(k) - 1];
    raw_prev[static_cast<size_t>(I)] = sol.h[static_cast<size_t>(k) - 1];

    op.apply_m(k, cur, lhs);
    op.apply_e(k, prev, epart);
    op.apply_e(k, raw_prev, eraw);
    const double drift = 1.0 - std::exp(lr4[static_cast<size_t>(k) - 1] - lr);

    double defect = 0.0;
    double level_scale = 0.0;
    for (int j = 0; j < S; ++j) {
      double source = 0.0;
      if (j < I) {
        double f = sol.w.at(k, j + 1);
        if (data.f1) f += data.f1->at(k, j + 1);
        source = dt * scaled_value(lr, f);
      } else if (data.f2) {
        source = dt * scaled_value(lr, (*data.f2)[static_cast<size_t>(k)]);
      }
      const double comm =
          drift * scaled_value(lr, eraw[static_cast<size_t>(j)]);
      const double r = lhs[static_cast<size_t>(j)] -
                       epart[static_cast<size_t>(j)] - source - comm;
      defect = std::max(defect, std::abs(r));
      level_scale = std::max({level_scale,
                              std::abs(lhs[static_cast<size_t>(j)]),
                              std::abs(epart[static_cast<size_t>(j)]),
                              std::abs(source), std::abs(comm)});
    }
    if (level_scale > 0.0) worst = std::max(worst, defect / level_scale);
  }
  rep.substitution_residual = worst;

  bool finite = std::isfinite(rep.state_l2) && std::isfinite(rep.state_x) &&
                std::isfinite(rep.state_xx) && std::isfinite(rep.state_t) &&
                std::isfinite(rep.front_l2) && std::isfinite(rep.front_t) &&
                std::isfinite(rep.terminal_weighted) &&
                std::isfinite(rep.substitution_residual);
  rep.all_finite = finite;
  return rep;
}

}  // namespace stefan
