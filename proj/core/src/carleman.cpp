#include "stefan/carleman.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "stefan/errors.hpp"
#include "stefan/numerics.hpp"

namespace stefan {

namespace {

/// One weight family seen through the lens of the shared functional kernel:
/// pot feeds the exponentials, mag the polynomial factors. The star vectors
/// are used for the right-hand side when star_rhs is set (plateau family);
/// otherwise the right side is weighted pointwise like the left.
struct FamilyView {
  const Field2D* pot = nullptr;
  const Field2D* mag = nullptr;
  const std::vector<double>* pot_hat = nullptr;
  const std::vector<double>* mag_hat = nullptr;
  const std::vector<double>* pot_star = nullptr;
  const std::vector<double>* mag_star = nullptr;
  double log_scale = 0.0;
  bool star_rhs = false;
};

CarlemanReport evaluate_sides(const WeightTable& tb, const FamilyView& fam,
                              const Field2D& psi,
                              const std::vector<double>& gamma,
                              const Field2D& src, const std::vector<double>& g,
                              const ObservationWindow& omega) {
  const int n = tb.grid.n;
  const int m = tb.time.m;
  const double dx = tb.grid.dx();
  const double dt = tb.time.dt();
  const double s = tb.params.s;
  const double lam = tb.params.lambda;

  if (psi.levels != m + 1 || psi.n != n)
    throw DimensionError("evaluate_sides: field shape does not match table");
  if (static_cast<int>(gamma.size()) != m + 1 ||
      static_cast<int>(g.size()) != m + 1)
    throw DimensionError("evaluate_sides: front data size does not match");

  CarlemanReport rep;
  rep.log_scale = fam.log_scale;
  rep.s = s;
  rep.lambda = lam;

  const double lam2 = lam * lam;
  const double lam3 = lam2 * lam;
  const double lam4 = lam2 * lam2;
  const double s3lam4 = s * s * s * lam4;

  std::vector<double> slice(static_cast<size_t>(n));
  for (int k = 1; k < m; ++k) {
    const size_t ks = static_cast<size_t>(k);
    for (int i = 0; i < n; ++i) slice[static_cast<size_t>(i)] = psi.at(k, i);

    const double star_weight =
        fam.star_rhs ? std::exp(fam.log_scale - 2.0 * s * (*fam.pot_star)[ks])
                     : 0.0;
    const double star_mag3 =
        fam.star_rhs ? std::pow((*fam.mag_star)[ks], 3) : 0.0;

    double interior = 0.0, local = 0.0, fterm = 0.0;
    for (int i = 1; i < n - 1; ++i) {
      const double weight =
          std::exp(fam.log_scale - 2.0 * s * fam.pot->at(k, i));
      const double sx = s * fam.mag->at(k, i);
      const double pt = (psi.at(k + 1, i) - psi.at(k - 1, i)) / (2.0 * dt);
      const double pxx =
          (psi.at(k, i + 1) - 2.0 * psi.at(k, i) + psi.at(k, i - 1)) /
          (dx * dx);
      const double px = (psi.at(k, i + 1) - psi.at(k, i - 1)) / (2.0 * dx);
      const double v = psi.at(k, i);
      interior += ((pxx * pxx + pt * pt) / sx + lam2 * sx * px * px +
                   lam4 * sx * sx * sx * v * v) *
                  weight;

      const double rw = fam.star_rhs ? star_weight : weight;
      fterm += src.at(k, i) * src.at(k, i) * rw;
      if (omega.contains(tb.grid.x(i))) {
        const double mag3 = fam.star_rhs
                                ? star_mag3
                                : std::pow(fam.mag->at(k, i), 3);
        local += s3lam4 * mag3 * v * v * rw;
      }
    }
    rep.lhs_interior += interior * dx * dt;
    rep.rhs_f += fterm * dx * dt;
    rep.rhs_local += local * dx * dt;

    const double hat_weight =
        std::exp(fam.log_scale - 2.0 * s * (*fam.pot_hat)[ks]);
    const double sxh = s * (*fam.mag_hat)[ks];
    const double gt = (gamma[ks + 1] - gamma[ks - 1]) / (2.0 * dt);
    const double px_l = one_sided_trace_derivative(slice, dx, -1);
    const double px_r = one_sided_trace_derivative(slice, dx, +1);
    const double tr = psi.at(k, n - 1);
    rep.lhs_boundary += (gt * gt + lam * sxh * (px_l * px_l + px_r * px_r) +
                         lam3 * sxh * sxh * sxh *
                             (tr * tr + gamma[ks] * gamma[ks])) *
                        hat_weight * dt;
    rep.rhs_g += g[ks] * g[ks] * hat_weight * dt;
  }
  return rep;
}

}  // namespace

double CarlemanReport::ratio() const {
  const double l = lhs();
  const double r = rhs();
  if (r == 0.0)
    return l == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return l / r;
}

CarlemanReport carleman_sides_basic(const WeightTable& table,
                                    const AdjointTrajectory& psi,
                                    const Field2D& f,
                                    const std::vector<double>& g,
                                    const ObservationWindow& omega) {
  FamilyView fam;
  fam.pot = &table.alpha;
  fam.mag = &table.xi;
  fam.pot_hat = &table.alpha_hat;
  fam.mag_hat = &table.xi_hat;
  fam.log_scale = table.log_shift;
  return evaluate_sides(table, fam, psi.phi, psi.gamma, f, g, omega);
}

CarlemanReport carleman_sides_trajectory(const WeightTable& table,
                                         const AdjointTrajectory& phi,
                                         const Field2D& g1,
                                         const std::vector<double>& g2,
                                         const ObservationWindow& omega) {
  FamilyView fam;
  fam.pot = &table.alpha;
  fam.mag = &table.xi;
  fam.pot_hat = &table.alpha_hat;
  fam.mag_hat = &table.xi_hat;
  fam.log_scale = table.log_shift;
  return evaluate_sides(table, fam, phi.phi, phi.gamma, g1, g2, omega);
}

CarlemanReport carleman_sides_modified(const WeightTable& table,
                                       const AdjointTrajectory& phi,
                                       const Field2D& g1,
                                       const std::vector<double>& g2,
                                       const ObservationWindow& omega) {
  FamilyView fam;
  fam.pot = &table.zeta;
  fam.mag = &table.mu;
  fam.pot_hat = &table.zeta_hat;
  fam.mag_hat = &table.mu_hat;
  fam.pot_star = &table.zeta_star;
  fam.mag_star = &table.mu_star;
  fam.star_rhs = true;
  CarlemanReport rep =
      evaluate_sides(table, fam, phi.phi, phi.gamma, g1, g2, omega);

  const int n = table.grid.n;
  const double dx = table.grid.dx();
  std::vector<double> first(static_cast<size_t>(n)),
      sq(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i)
    first[static_cast<size_t>(i)] = phi.phi.at(0, i);
  const std::vector<double> dfirst = central_derivative(first, dx);
  for (int i = 0; i < n; ++i) {
    const size_t is = static_cast<size_t>(i);
    sq[is] = first[is] * first[is] + dfirst[is] * dfirst[is];
  }
  rep.lhs_initial = trapezoid(sq, dx) + phi.gamma[0] * phi.gamma[0];
  return rep;
}

double IdentityReport::identity_gap() const {
  const double sum = self_part + skew_part + cross;
  const double scale = std::max({total, self_part + skew_part, 1e-30});
  return std::abs(total - sum) / scale;
}

double IdentityReport::cross_direct_gap() const {
  const double scale = std::max({std::abs(cross), std::abs(cross_direct),
                                 self_part + skew_part, 1e-30});
  return std::abs(cross - cross_direct) / scale;
}

double IdentityReport::cross_ibp_gap() const {
  const double scale = std::max({std::abs(cross), std::abs(cross_ibp),
                                 self_part + skew_part, 1e-30});
  return std::abs(cross - cross_ibp) / scale;
}

IdentityReport decomposition_identity(const WeightTable& table,
                                      const Field2D& psi, const Field2D& f,
                                      const std::vector<double>& d) {
  const int n = table.grid.n;
  const int m = table.time.m;
  const double dx = table.grid.dx();
  const double dt = table.time.dt();
  const double s = table.params.s;
  const double cell = dx * dt;

  if (psi.levels != m + 1 || psi.n != n || f.levels != m + 1 || f.n != n)
    throw DimensionError("decomposition_identity: field shape mismatch");
  if (static_cast<int>(d.size()) != m + 1)
    throw DimensionError("decomposition_identity: diffusion size mismatch");

  // Shifted conjugated variable; the half shift makes exp representable and
  // multiplies every quadratic form by the same constant.
  const double half_shift = 0.5 * table.log_shift;
  Field2D w(m + 1, n);
  for (int k = 1; k < m; ++k)
    for (int i = 0; i < n; ++i)
      w.at(k, i) = std::exp(half_shift - s * table.alpha.at(k, i)) * psi.at(k, i);

  IdentityReport rep;
  double i1 = 0.0, i2 = 0.0, i3 = 0.0, i4 = 0.0;
  double ibp_area = 0.0, ibp_edge = 0.0;
  double res2 = 0.0, target2 = 0.0;

  std::vector<double> slice(static_cast<size_t>(n));
  for (int k = 1; k < m; ++k) {
    const size_t ks = static_cast<size_t>(k);
    const double dk = d[ks];
    const double dk_t = (d[ks + 1] - d[ks - 1]) / (2.0 * dt);
    for (int i = 0; i < n; ++i) slice[static_cast<size_t>(i)] = w.at(k, i);

    for (int i = 1; i < n - 1; ++i) {
      const double wv = w.at(k, i);
      const double wt = (w.at(k + 1, i) - w.at(k - 1, i)) / (2.0 * dt);
      const double wx = (w.at(k, i + 1) - w.at(k, i - 1)) / (2.0 * dx);
      const double wxx =
          (w.at(k, i + 1) - 2.0 * wv + w.at(k, i - 1)) / (dx * dx);

      const double ax = table.alpha_x.at(k, i);
      const double axx = table.alpha_xx.at(k, i);
      const double at = table.alpha_t.at(k, i);
      const double axt = table.alpha_xt.at(k, i);
      const double att = table.alpha_tt.at(k, i);

      const double zero_order = s * at + s * s * dk * ax * ax;
      const double a_part = dk * wxx + zero_order * wv;
      const double b_part = wt + 2.0 * s * dk * ax * wx;

      rep.self_part += a_part * a_part * cell;
      rep.skew_part += b_part * b_part * cell;
      rep.cross += 2.0 * a_part * b_part * cell;
      const double sum = a_part + b_part;
      rep.total += sum * sum * cell;

      i1 += 2.0 * dk * wxx * wt * cell;
      i2 += 4.0 * s * dk * dk * wxx * ax * wx * cell;
      i3 += 2.0 * zero_order * wv * wt * cell;
      i4 += 4.0 * s * dk * zero_order * wv * ax * wx * cell;

      // Area parts of the integrated-by-parts expansion; the t = 0 and
      // t = T contributions vanish because w does.
      const double d_ax2_t = dk_t * ax * ax + 2.0 * dk * ax * axt;
      ibp_area += (dk_t - 2.0 * s * dk * dk * axx) * wx * wx * cell;
      ibp_area -= (s * att + s * s * d_ax2_t +
                   2.0 * s * s * dk * (axt * ax + at * axx) +
                   6.0 * s * s * s * dk * dk * ax * ax * axx) *
                  wv * wv * cell;

      const double target =
          std::exp(half_shift - s * table.alpha.at(k, i)) * f.at(k, i) -
          s * dk * axx * wv;
      res2 += (sum - target) * (sum - target) * cell;
      target2 += target * target * cell;
    }

    // Trace parts: w vanishes on the x = -1 column, so only its one-sided
    // slope contributes there.
    const double wx_l = one_sided_trace_derivative(slice, dx, -1);
    const double wx_r = one_sided_trace_derivative(slice, dx, +1);
    const double wt_r =
        (w.at(k + 1, n - 1) - w.at(k - 1, n - 1)) / (2.0 * dt);
    const double wv_r = w.at(k, n - 1);
    const double ax_l = table.alpha_x.at(k, 0);
    const double ax_r = table.alpha_x.at(k, n - 1);
    const double at_r = table.alpha_t.at(k, n - 1);

    ibp_edge += 2.0 * dk * wt_r * wx_r * dt;
    ibp_edge += 2.0 * s * dk * dk * (ax_r * wx_r * wx_r - ax_l * wx_l * wx_l) * dt;
    ibp_edge += 2.0 * dk * (s * s * at_r * ax_r + s * s * s * dk * ax_r * ax_r * ax_r) *
                wv_r * wv_r * dt;
  }

  rep.cross_direct = i1 + i2 + i3 + i4;
  rep.cross_ibp = ibp_area + ibp_edge;
  rep.source_residual = std::sqrt(res2) / std::max(std::sqrt(target2), 1e-30);
  return rep;
}

CoefficientSet reduced_frame(const SpaceGrid& grid, const TimeGrid& time,
                             const std::vector<double>& d) {
  if (static_cast<int>(d.size()) != time.m + 1)
    throw DimensionError("reduced_frame: diffusion size mismatch");
  CoefficientSet cs;
  cs.grid = grid;
  cs.time = time;
  cs.beta = 1.0;
  cs.qbar.resize(d.size());
  for (size_t k = 0; k < d.size(); ++k) {
    if (!(d[k] > 0.0))
      throw ParameterError("reduced_frame: diffusion must be positive, got " +
                           std::to_string(d[k]) + " at level " +
                           std::to_string(k));
    cs.qbar[k] = 1.0 / d[k];
  }
  cs.a = Field2D(time.m + 1, grid.n);
  cs.coupling = Field2D(time.m + 1, grid.n);
  cs.load = Field2D(time.m + 1, grid.n);
  return cs;
}

ReducedDataset random_reduced_dataset(const SpaceGrid& grid,
                                      const TimeGrid& time,
                                      RandomStream& rng) {
  constexpr int kModes = 4;
  double c[kModes];
  for (double& v : c) v = rng.uniform(-1.0, 1.0);
  const double fa1 = rng.uniform(-1.0, 1.0);
  const double fa2 = rng.uniform(-1.0, 1.0);
  const double fw1 = rng.uniform(0.5, 3.0);
  const double fw2 = rng.uniform(0.5, 3.0);
  const double fp = rng.uniform(0.0, 3.0);
  const double gb1 = rng.uniform(-1.0, 1.0);
  const double gb2 = rng.uniform(-1.0, 1.0);
  const double gw1 = rng.uniform(0.5, 3.0);
  const double gw2 = rng.uniform(0.5, 3.0);

  const int n = grid.n;
  const int m = time.m;
  ReducedDataset ds;
  ds.psi_T.resize(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double x = grid.x(i);
    double v = 0.0;
    for (int j = 0; j < kModes; ++j)
      v += c[j] * std::sin((j + 1) * std::numbers::pi * (x + 1.0) / 4.0);
    ds.psi_T[static_cast<size_t>(i)] = v;
  }
  ds.gamma_T = ds.psi_T[static_cast<size_t>(n - 1)];

  ds.f = Field2D(m + 1, n);
  ds.g.resize(static_cast<size_t>(m + 1));
  for (int k = 0; k <= m; ++k) {
    const double t = time.t(k);
    for (int i = 0; i < n; ++i) {
      const double x = grid.x(i);
      ds.f.at(k, i) =
          fa1 * std::sin(std::numbers::pi * (x + 1.0) / 2.0) * std::cos(fw1 * t) +
          fa2 * std::cos(x + fp) * std::sin(fw2 * t + 0.3);
    }
    ds.g[static_cast<size_t>(k)] =
        gb1 * std::cos(gw1 * t) + gb2 * std::sin(gw2 * t);
  }
  return ds;
}

std::vector<CarlemanSweepRow> carleman_basic_sweep(
    const SpaceGrid& grid, const TimeGrid& time, const std::vector<double>& d,
    const EtaFunction& eta, const CarlemanParams& base,
    const std::vector<double>& s_multipliers,
    const std::vector<double>& lambda_multipliers, int datasets,
    RandomStream& rng, const ObservationWindow& omega) {
  const CoefficientSet frame = reduced_frame(grid, time, d);
  const double lam0 = lambda_floor(eta, base.m);
  const double s_floor = base.s0 * (time.T + time.T * time.T);

  std::vector<ReducedDataset> data;
  std::vector<AdjointTrajectory> solved;
  data.reserve(static_cast<size_t>(datasets));
  solved.reserve(static_cast<size_t>(datasets));
  for (int j = 0; j < datasets; ++j) {
    ReducedDataset ds = random_reduced_dataset(grid, time, rng);
    Field2D g1(time.m + 1, grid.n);
    for (int k = 0; k <= time.m; ++k)
      for (int i = 0; i < grid.n; ++i)
        g1.at(k, i) = -frame.qbar[static_cast<size_t>(k)] * ds.f.at(k, i);
    AdjointOptions opts;
    opts.g1_grid = &g1;
    opts.g2_grid = &ds.g;
    solved.push_back(solve_adjoint(frame, ds.psi_T, ds.gamma_T, opts));
    data.push_back(std::move(ds));
  }

  std::vector<CarlemanSweepRow> rows;
  rows.reserve(s_multipliers.size() * lambda_multipliers.size() *
               static_cast<size_t>(datasets));
  for (double sm : s_multipliers) {
    for (double lm : lambda_multipliers) {
      CarlemanParams p = base;
      p.lambda = lm * lam0;
      p.s = sm * s_floor;
      const WeightTable table = tabulate_weights(grid, time, p, eta);
      for (int j = 0; j < datasets; ++j) {
        const CarlemanReport rep = carleman_sides_basic(
            table, solved[static_cast<size_t>(j)],
            data[static_cast<size_t>(j)].f, data[static_cast<size_t>(j)].g,
            omega);
        CarlemanSweepRow row;
        row.s = p.s;
        row.lambda = p.lambda;
        row.dataset = j;
        row.lhs = rep.lhs();
        row.rhs = rep.rhs();
        row.ratio = rep.ratio();
        rows.push_back(row);
      }
    }
  }
  return rows;
}

}  // namespace stefan
