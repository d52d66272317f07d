#include "csdro/worstcase.hpp"

#include <cmath>

namespace csdro {

std::string to_string(WcModel m) {
  switch (m) {
    case WcModel::causal_sdro: return "causal-sdro";
    case WcModel::sdro: return "sdro";
    case WcModel::kl_dro: return "kl-dro";
  }
  return "?";
}

Vec trapezoid_weights(const Vec& grid) {
  const auto n = grid.size();
  Vec w = Vec::Zero(n);
  for (Eigen::Index i = 0; i + 1 < n; ++i) {
    const double h = grid(i + 1) - grid(i);
    w(i) += 0.5 * h;
    w(i + 1) += 0.5 * h;
  }
  return w;
}

Vec uniform_grid(double lo, double hi, int n) {
  if (n < 2 || !(hi > lo)) throw ValidationError("uniform_grid: need n >= 2 and hi > lo");
  return Vec::LinSpaced(n, lo, hi);
}

double WorstCaseGrid::integral() const {
  return trapezoid_weights(x_grid).dot(density * trapezoid_weights(y_grid));
}

namespace {

void check_grid(const Vec& grid, const char* name) {
  if (grid.size() < 2) throw ValidationError(std::string("worst-case grid ") + name + " needs >= 2 points");
  for (Eigen::Index i = 0; i + 1 < grid.size(); ++i)
    if (!(grid(i + 1) > grid(i))) throw ValidationError(std::string("worst-case grid ") + name + " must be strictly increasing");
}

// log sum_k w_k exp(v_k).
double log_trapezoid(const double* v, const Vec& w, Eigen::Index stride = 1) {
  double m = -std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < w.size(); ++k) m = std::max(m, v[k * stride]);
  double s = 0.0;
  for (Eigen::Index k = 0; k < w.size(); ++k) s += w(k) * std::exp(v[k * stride] - m);
  return m + std::log(s);
}

double power_cost(double d, int p) { return p == 1 ? std::abs(d) : d * d; }

// Kernel mass captured by the grid around `center`, relative to the analytic normalizer.
void check_normalizer(const Vec& grid, const Vec& w, double center, const SinkhornConfig& cfg,
                      std::vector<std::string>& warnings) {
  double s = 0.0;
  for (Eigen::Index k = 0; k < grid.size(); ++k) s += w(k) * std::exp(-power_cost(grid(k) - center, cfg.p) / cfg.eps);
  const double drift = std::abs(s / std::exp(log_kernel_normalizer(1, cfg.p, cfg.eps)) - 1.0);
  if (drift > 1e-2)
    throw RuntimeFailure("worst-case grid too coarse or too narrow: kernel normalizer drift " + format_double(drift) +
                         " at atom " + format_double(center));
  const double sd = kernel_std(cfg.p, cfg.eps);
  if (center - 6.0 * sd < grid(0) || center + 6.0 * sd > grid(grid.size() - 1))
    warnings.push_back("grid does not cover +-6 kernel standard deviations around " + format_double(center));
}

// Clipped loss at every grid node.
Mat loss_grid(const DecisionRule& policy, const Loss& loss, const Vec& xg, const Vec& yg, double B) {
  Mat psi(xg.size(), yg.size());
  Vec x(1), raw(policy.output_dim()), y(1);
  for (Eigen::Index i = 0; i < xg.size(); ++i) {
    x(0) = xg(i);
    policy.forward(policy.params().data(), x.data(), raw.data());
    for (Eigen::Index j = 0; j < yg.size(); ++j) {
      y(0) = yg(j);
      psi(i, j) = clipped_loss(loss, raw.data(), y.data(), B);
    }
  }
  return psi;
}

void check_1d(const DecisionRule& policy, const Loss& loss, int d_x, int d_y) {
  if (d_x != 1 || d_y != 1 || policy.input_dim() != 1 || loss.outcome_dim() != 1)
    throw ValidationError("worst-case grids require d_x = d_y = 1");
}

}  // namespace

WorstCaseGrid causal_wc_density(double lambda, const DecisionRule& policy, const Loss& loss,
                                const GroupedDataset& g, const Vec& x_grid, const Vec& y_grid,
                                const SinkhornConfig& cfg) {
  cfg.validate();
  if (!(lambda > 0.0)) throw ValidationError("causal_wc_density: lambda must be > 0");
  check_1d(policy, loss, g.d_x, g.d_y);
  check_grid(x_grid, "x");
  check_grid(y_grid, "y");
  const double le = lambda * cfg.eps;
  const auto gx = x_grid.size(), gy = y_grid.size();
  const Vec wx = trapezoid_weights(x_grid), wy = trapezoid_weights(y_grid);
  const Mat psi = loss_grid(policy, loss, x_grid, y_grid, cfg.B);

  WorstCaseGrid out;
  out.x_grid = x_grid;
  out.y_grid = y_grid;
  out.model = WcModel::causal_sdro;
  out.density = Mat::Zero(gx, gy);

  RowMat s(gx, gy);
  for (const Group& grp : g.groups) {
    const double xh = grp.x(0);
    check_normalizer(x_grid, wx, xh, cfg, out.warnings);
    const double w_group = static_cast<double>(grp.count) / static_cast<double>(g.rows());
    const auto n = grp.outcomes.rows();
    // ls(m, i) = log int exp(s'_m(x_i, y)) dy; r(i) = sum_m p_m ls(m, i).
    Mat ls(n, gx);
    std::vector<RowMat> s_all(static_cast<std::size_t>(n));
    Vec r = Vec::Zero(gx);
    for (Eigen::Index m = 0; m < n; ++m) {
      const double yh = grp.outcomes(m, 0);
      check_normalizer(y_grid, wy, yh, cfg, out.warnings);
      RowMat& sm = s_all[static_cast<std::size_t>(m)];
      sm.resize(gx, gy);
      for (Eigen::Index i = 0; i < gx; ++i) {
        const double cx = power_cost(x_grid(i) - xh, cfg.p);
        for (Eigen::Index j = 0; j < gy; ++j)
          sm(i, j) = (psi(i, j) - lambda * (cx + power_cost(y_grid(j) - yh, cfg.p))) / le;
        ls(m, i) = log_trapezoid(sm.row(i).data(), wy);
      }
      r += grp.probs(m) * ls.row(m).transpose();
    }
    const double lr = log_trapezoid(r.data(), wx);
    for (Eigen::Index m = 0; m < n; ++m) {
      const RowMat& sm = s_all[static_cast<std::size_t>(m)];
      const double c = w_group * grp.probs(m);
      for (Eigen::Index i = 0; i < gx; ++i) {
        const double base = r(i) - lr - ls(m, i);
        for (Eigen::Index j = 0; j < gy; ++j) out.density(i, j) += c * std::exp(base + sm(i, j));
      }
    }
  }
  return out;
}

WorstCaseGrid sdro_wc_density(double lambda, const DecisionRule& policy, const Loss& loss, const Dataset& ds,
                              const Vec& x_grid, const Vec& y_grid, const SinkhornConfig& cfg) {
  cfg.validate();
  if (!(lambda > 0.0)) throw ValidationError("sdro_wc_density: lambda must be > 0");
  if (ds.size() == 0) throw ValidationError("sdro_wc_density: empty dataset");
  check_1d(policy, loss, ds.d_x(), ds.d_y());
  check_grid(x_grid, "x");
  check_grid(y_grid, "y");
  const double le = lambda * cfg.eps;
  const auto gx = x_grid.size(), gy = y_grid.size();
  const Vec wx = trapezoid_weights(x_grid), wy = trapezoid_weights(y_grid);
  const Mat psi = loss_grid(policy, loss, x_grid, y_grid, cfg.B);

  WorstCaseGrid out;
  out.x_grid = x_grid;
  out.y_grid = y_grid;
  out.model = WcModel::sdro;
  out.density = Mat::Zero(gx, gy);

  RowMat s(gx, gy);
  Vec row_lse(gx);
  for (std::size_t a = 0; a < ds.size(); ++a) {
    const double xh = ds.X(static_cast<Eigen::Index>(a), 0), yh = ds.Y(static_cast<Eigen::Index>(a), 0);
    check_normalizer(x_grid, wx, xh, cfg, out.warnings);
    check_normalizer(y_grid, wy, yh, cfg, out.warnings);
    for (Eigen::Index i = 0; i < gx; ++i) {
      const double cx = power_cost(x_grid(i) - xh, cfg.p);
      for (Eigen::Index j = 0; j < gy; ++j) s(i, j) = (psi(i, j) - lambda * (cx + power_cost(y_grid(j) - yh, cfg.p))) / le;
      row_lse(i) = log_trapezoid(s.row(i).data(), wy);
    }
    const double lz = log_trapezoid(row_lse.data(), wx);
    const double c = 1.0 / static_cast<double>(ds.size());
    for (Eigen::Index i = 0; i < gx; ++i)
      for (Eigen::Index j = 0; j < gy; ++j) out.density(i, j) += c * std::exp(s(i, j) - lz);
  }
  return out;
}

Vec kl_wc_weights(double lambda, const DecisionRule& policy, const Loss& loss, const Dataset& ds) {
  if (!(lambda > 0.0)) throw ValidationError("kl_wc_weights: lambda must be > 0");
  if (ds.size() == 0) throw ValidationError("kl_wc_weights: empty dataset");
  Vec a(static_cast<Eigen::Index>(ds.size()));
  Vec raw(policy.output_dim());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const Vec x = ds.X.row(static_cast<Eigen::Index>(i)).transpose();
    const Vec y = ds.Y.row(static_cast<Eigen::Index>(i)).transpose();
    policy.forward(policy.params().data(), x.data(), raw.data());
    a(static_cast<Eigen::Index>(i)) = loss.value(raw.data(), y.data()) / lambda;
  }
  Vec w(a.size());
  softmax(as_span(a), as_span(w));
  return w;
}

double hard_dual_value(double lambda, double rb, const DecisionRule& policy, const Loss& loss,
                       const GroupedDataset& g, const SaaBatch& batch, const SinkhornConfig& cfg) {
  SinkhornConfig c = cfg;
  c.lambda = lambda;
  return lambda * rb + saa_objective(policy, policy.params(), loss, g, batch, c);
}

HardDualResult hard_dual_solve(const DecisionRule& policy, const Loss& loss, const GroupedDataset& g, double rho,
                               const SinkhornConfig& cfg, double lam_lo, double lam_hi, std::uint64_t seed,
                               int curve_points) {
  cfg.validate();
  if (!(lam_lo > 0.0) || !(lam_hi > lam_lo)) throw ValidationError("hard_dual_solve: need 0 < lambda_lo < lambda_hi");
  if (curve_points < 3) throw ValidationError("hard_dual_solve: curve needs >= 3 points");
  HardDualResult res;
  res.rho_bar = rho_bar(rho, cfg, g.d_x, g.d_y);
  if (res.rho_bar < 0.0) throw ValidationError("hard_dual_solve: primal infeasible (rho_bar < 0)");

  SinkhornConfig c = cfg;
  for (int attempt = 0; attempt < 2; ++attempt) {
    Rng rng = make_rng(seed, 11 + static_cast<std::uint64_t>(attempt));
    const SaaBatch batch = draw_saa_batch(g, c, rng);
    auto f = [&](double lam) { return hard_dual_value(lam, res.rho_bar, policy, loss, g, batch, c); };

    res.curve.lambdas = Vec::LinSpaced(curve_points, lam_lo, lam_hi);
    res.curve.values.resize(curve_points);
    for (int i = 0; i < curve_points; ++i) res.curve.values(i) = f(res.curve.lambdas(i));
    bool convex = true;
    for (int i = 1; i + 1 < curve_points; ++i)
      if (res.curve.values(i - 1) - 2.0 * res.curve.values(i) + res.curve.values(i + 1) < -1e-2) convex = false;

    const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = lam_lo, b = lam_hi;
    double x1 = b - invphi * (b - a), x2 = a + invphi * (b - a);
    double f1 = f(x1), f2 = f(x2);
    while (b - a > 1e-3) {
      if (f1 <= f2) {
        b = x2;
        x2 = x1;
        f2 = f1;
        x1 = b - invphi * (b - a);
        f1 = f(x1);
      } else {
        a = x1;
        x1 = x2;
        f1 = f2;
        x2 = a + invphi * (b - a);
        f2 = f(x2);
      }
    }
    res.lambda_star = 0.5 * (a + b);
    res.value = f(res.lambda_star);
    res.hit_lower = a == lam_lo;
    res.hit_upper = b == lam_hi;
    res.retries = attempt;
    res.nonconvex = !convex;
    if (convex) break;
    c.n2 *= 2;
    c.n3 *= 2;
  }
  return res;
}

}  // namespace csdro
