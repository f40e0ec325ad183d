#include "stefan/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "stefan/errors.hpp"

namespace stefan {

double trapezoid(std::span<const double> f, double dx) {
  if (f.size() < 2) throw DimensionError("trapezoid needs at least 2 samples");
  double s = 0.5 * (f.front() + f.back());
  for (size_t i = 1; i + 1 < f.size(); ++i) s += f[i];
  return s * dx;
}

double inner_trapezoid(std::span<const double> f, std::span<const double> g,
                       double dx) {
  if (f.size() != g.size())
    throw DimensionError("inner_trapezoid: size mismatch " +
                         std::to_string(f.size()) + " vs " +
                         std::to_string(g.size()));
  if (f.size() < 2)
    throw DimensionError("inner_trapezoid needs at least 2 samples");
  double s = 0.5 * (f.front() * g.front() + f.back() * g.back());
  for (size_t i = 1; i + 1 < f.size(); ++i) s += f[i] * g[i];
  return s * dx;
}

double one_sided_trace_derivative(std::span<const double> f, double dx,
                                  int side) {
  if (f.size() < 3)
    throw DimensionError("one_sided_trace_derivative needs >= 3 samples");
  const size_t n = f.size();
  if (side > 0) return (f[n - 3] - 4.0 * f[n - 2] + 3.0 * f[n - 1]) / (2.0 * dx);
  return (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * dx);
}

std::vector<double> central_derivative(std::span<const double> f, double dx) {
  const size_t n = f.size();
  if (n < 3) throw DimensionError("central_derivative needs >= 3 samples");
  std::vector<double> g(n);
  g[0] = one_sided_trace_derivative(f, dx, -1);
  for (size_t i = 1; i + 1 < n; ++i) g[i] = (f[i + 1] - f[i - 1]) / (2.0 * dx);
  g[n - 1] = one_sided_trace_derivative(f, dx, +1);
  return g;
}

TridiagonalFactor::TridiagonalFactor(std::span<const double> lower,
                                     std::span<const double> diag,
                                     std::span<const double> upper) {
  const size_t k = diag.size();
  if (lower.size() != k || upper.size() != k)
    throw DimensionError("TridiagonalFactor: band size mismatch");
  if (k == 0) throw DimensionError("TridiagonalFactor: empty matrix");
  l_.assign(lower.begin(), lower.end());
  d_.assign(diag.begin(), diag.end());
  u_.assign(upper.begin(), upper.end());

  double scale = 0.0;
  for (size_t i = 0; i < k; ++i)
    scale = std::max({scale, std::abs(l_[i]), std::abs(d_[i]), std::abs(u_[i])});
  const double floor = 1e-14 * std::max(scale, 1e-300);

  if (std::abs(d_[0]) < floor)
    throw SingularSolveError("tridiagonal pivot underflow at row 0");
  for (size_t i = 1; i < k; ++i) {
    const double m = l_[i] / d_[i - 1];
    l_[i] = m;
    d_[i] -= m * u_[i - 1];
    if (std::abs(d_[i]) < floor)
      throw SingularSolveError("tridiagonal pivot underflow at row " +
                               std::to_string(i));
  }
}

void TridiagonalFactor::solve(std::span<double> rhs) const {
  const size_t k = d_.size();
  if (rhs.size() != k) throw DimensionError("TridiagonalFactor::solve size");
  for (size_t i = 1; i < k; ++i) rhs[i] -= l_[i] * rhs[i - 1];
  rhs[k - 1] /= d_[k - 1];
  for (size_t i = k - 1; i-- > 0;) rhs[i] = (rhs[i] - u_[i] * rhs[i + 1]) / d_[i];
}

std::vector<double> solve_bordered(const BorderedTridiagonal& A,
                                   std::span<const double> rhs) {
  const size_t k = A.diag.size();
  if (A.lower.size() != k || A.upper.size() != k || A.border_col.size() != k ||
      A.border_row.size() != k)
    throw DimensionError("solve_bordered: inconsistent block sizes");
  if (rhs.size() != k + 1)
    throw DimensionError("solve_bordered: rhs must have core_size + 1 entries");

  TridiagonalFactor T(A.lower, A.diag, A.upper);

  std::vector<double> y(rhs.begin(), rhs.begin() + static_cast<long>(k));
  T.solve(y);
  std::vector<double> w(A.border_col.begin(), A.border_col.end());
  T.solve(w);

  double ry = 0.0, rw = 0.0;
  for (size_t i = 0; i < k; ++i) {
    ry += A.border_row[i] * y[i];
    rw += A.border_row[i] * w[i];
  }
  const double denom = A.corner - rw;
  double scale = std::abs(A.corner);
  for (size_t i = 0; i < k; ++i) scale = std::max(scale, std::abs(A.border_row[i]));
  if (std::abs(denom) < 1e-14 * std::max(scale, 1.0))
    throw SingularSolveError("bordered solve: Schur complement vanished");
  const double tau = (rhs[k] - ry) / denom;

  std::vector<double> out(k + 1);
  for (size_t i = 0; i < k; ++i) out[i] = y[i] - tau * w[i];
  out[k] = tau;
  return out;
}

double interp_cubic(double x0, double dx, std::span<const double> f,
                    double xq) {
  const int n = static_cast<int>(f.size());
  if (n < 4) throw DimensionError("interp_cubic needs >= 4 samples");
  double s = (xq - x0) / dx;
  int j = static_cast<int>(std::floor(s)) - 1;
  j = std::clamp(j, 0, n - 4);
  const double u = s - j;
  // Lagrange basis on stencil offsets {0, 1, 2, 3}.
  const double c0 = -(u - 1.0) * (u - 2.0) * (u - 3.0) / 6.0;
  const double c1 = u * (u - 2.0) * (u - 3.0) / 2.0;
  const double c2 = -u * (u - 1.0) * (u - 3.0) / 2.0;
  const double c3 = u * (u - 1.0) * (u - 2.0) / 6.0;
  return c0 * f[j] + c1 * f[j + 1] + c2 * f[j + 2] + c3 * f[j + 3];
}

std::vector<double> resample_cubic(const SpaceGrid& src,
                                   std::span<const double> f,
                                   const SpaceGrid& dst) {
  if (static_cast<int>(f.size()) != src.n)
    throw DimensionError("resample_cubic: profile does not match source grid");
  std::vector<double> out(static_cast<size_t>(dst.n));
  for (int i = 0; i < dst.n; ++i)
    out[static_cast<size_t>(i)] = interp_cubic(src.a, src.dx(), f, dst.x(i));
  return out;
}

double fit_order(double err_coarse, double err_fine) {
  if (err_fine <= 0.0 || err_coarse <= 0.0) return 0.0;
  return std::log2(err_coarse / err_fine);
}

double max_abs(std::span<const double> f) {
  double m = 0.0;
  for (double v : f) m = std::max(m, std::abs(v));
  return m;
}

double l2_norm(std::span<const double> f, double dx) {
  double s = 0.5 * (f.front() * f.front() + f.back() * f.back());
  for (size_t i = 1; i + 1 < f.size(); ++i) s += f[i] * f[i];
  return std::sqrt(s * dx);
}

}  // namespace stefan
