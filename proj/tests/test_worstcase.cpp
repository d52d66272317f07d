#include "csdro/worstcase.hpp"

#include <gtest/gtest.h>

#include <chrono>
#include <cmath>

using namespace csdro;

namespace {

// Psi = z + y^2, separable between the x and y perturbations.
class SeparableLoss : public Loss {
 public:
  int decision_dim() const override { return 1; }
  int outcome_dim() const override { return 1; }
  double value(const double* raw, const double* y) const override { return raw[0] + y[0] * y[0]; }
  double value_grad(const double* raw, const double* y, double* g) const override {
    g[0] = 1.0;
    return value(raw, y);
  }
  using Loss::value;
};

Dataset atoms(std::initializer_list<std::pair<double, double>> pts) {
  Dataset ds;
  ds.X.resize(static_cast<Eigen::Index>(pts.size()), 1);
  ds.Y.resize(static_cast<Eigen::Index>(pts.size()), 1);
  Eigen::Index i = 0;
  for (auto [x, y] : pts) {
    ds.X(i, 0) = x;
    ds.Y(i, 0) = y;
    ++i;
  }
  return ds;
}

SoftRegressionForest random_forest(std::uint64_t seed) {
  Rng rng = make_rng(seed, 0);
  std::normal_distribution<double> nd;
  SoftRegressionForest f(1, 1, {2, 2});
  f.set_params(Vec::NullaryExpr(static_cast<Eigen::Index>(f.param_count()), [&]() { return nd(rng); }));
  return f;
}

SinkhornConfig cfg_eps(double eps, int p = 2) {
  SinkhornConfig c;
  c.eps = eps;
  c.p = p;
  return c;
}

double mass_near(const WorstCaseGrid& w, const Dataset& ds, double r) {
  const Vec wx = trapezoid_weights(w.x_grid), wy = trapezoid_weights(w.y_grid);
  double s = 0.0;
  for (Eigen::Index i = 0; i < w.x_grid.size(); ++i)
    for (Eigen::Index j = 0; j < w.y_grid.size(); ++j) {
      bool near = false;
      for (Eigen::Index a = 0; a < ds.X.rows(); ++a)
        near = near || (std::abs(w.x_grid(i) - ds.X(a, 0)) <= r && std::abs(w.y_grid(j) - ds.Y(a, 0)) <= r);
      if (near) s += wx(i) * wy(j) * w.density(i, j);
    }
  return s;
}

}  // namespace

TEST(Trapezoid, WeightsAndGrid) {
  const Vec g = uniform_grid(0.0, 1.0, 5);
  const Vec w = trapezoid_weights(g);
  EXPECT_DOUBLE_EQ(w.sum(), 1.0);
  EXPECT_DOUBLE_EQ(w(0), 0.125);
  EXPECT_DOUBLE_EQ(w(2), 0.25);
  EXPECT_THROW(uniform_grid(1.0, 0.0, 5), ValidationError);
}

TEST(CausalDensity, ConstantLossSingleAtomIsProductKernel) {
  for (int p : {1, 2}) {
    const auto cfg = cfg_eps(0.2, p);
    const Dataset ds = atoms({{0.3, -0.4}});
    const auto g = group_conditionals(ds);
    const auto f = random_forest(1);
    const Vec xg = uniform_grid(-4.0, 4.0, 200), yg = uniform_grid(-5.0, 4.0, 200);
    const ConstantLoss loss(2.5, 1, 1);
    const auto wc = causal_wc_density(0.7, f, loss, g, xg, yg, cfg);
    const auto ws = sdro_wc_density(0.7, f, loss, ds, xg, yg, cfg);
    const auto k = [&](double d) { return std::exp(-(p == 1 ? std::abs(d) : d * d) / cfg.eps); };
    Vec kx(200), ky(200);
    for (int i = 0; i < 200; ++i) {
      kx(i) = k(xg(i) - 0.3);
      ky(i) = k(yg(i) + 0.4);
    }
    kx /= trapezoid_weights(xg).dot(kx);
    ky /= trapezoid_weights(yg).dot(ky);
    const Mat prod = kx * ky.transpose();
    EXPECT_LT((wc.density - prod).cwiseAbs().maxCoeff(), 1e-6) << "p=" << p;
    EXPECT_LT((ws.density - prod).cwiseAbs().maxCoeff(), 1e-6) << "p=" << p;
  }
}

TEST(CausalDensity, IntegratesToOneAndPositive) {
  const auto cfg = cfg_eps(0.3);
  const Dataset ds = atoms({{0.0, 1.0}, {0.0, 2.0}, {1.0, 0.5}, {-0.5, 1.5}});
  const auto g = group_conditionals(ds);
  const Vec xg = uniform_grid(-4.0, 4.5, 200), yg = uniform_grid(-3.5, 6.0, 200);
  const NewsvendorLoss loss({Vec::Constant(1, 0.6), Vec::Constant(1, 1.0)});
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto f = random_forest(seed);
    for (double lam : {0.5, 2.0, 50.0}) {
      const auto t0 = std::chrono::steady_clock::now();
      const auto wc = causal_wc_density(lam, f, loss, g, xg, yg, cfg);
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      EXPECT_LT(secs, 30.0);
      EXPECT_NEAR(wc.integral(), 1.0, 1e-3);
      EXPECT_GT(wc.density.block(1, 1, 198, 198).minCoeff(), 0.0);
      EXPECT_TRUE(wc.warnings.empty());
      const auto ws = sdro_wc_density(lam, f, loss, ds, xg, yg, cfg);
      EXPECT_NEAR(ws.integral(), 1.0, 1e-3);
      EXPECT_GE(ws.density.minCoeff(), 0.0);
    }
  }
}

TEST(CausalDensity, LargeLambdaConcentrates) {
  const auto cfg = cfg_eps(0.2);
  const Dataset ds = atoms({{0.0, 1.0}, {1.0, -0.5}});
  const auto g = group_conditionals(ds);
  const auto f = random_forest(3);
  const Vec xg = uniform_grid(-4.0, 5.0, 200), yg = uniform_grid(-4.5, 5.0, 200);
  const QuadraticLoss loss(1);
  const double r = 3.0 * std::sqrt(cfg.eps / 2.0);
  const double tight = mass_near(causal_wc_density(1e3, f, loss, g, xg, yg, cfg), ds, r);
  const double loose = mass_near(causal_wc_density(0.5, f, loss, g, xg, yg, cfg), ds, r);
  EXPECT_GT(tight, loose);
}

TEST(CausalDensity, DiffersFromSdroWhenLossCouplesXAndY) {
  const auto cfg = cfg_eps(0.3);
  // Two outcomes at one covariate; singleton groups would make both densities agree.
  const Dataset ds = atoms({{0.0, -0.5}, {0.0, 1.5}});
  const auto g = group_conditionals(ds);
  // Decision moves with x through a single steep split.
  SoftRegressionForest f(1, 1, {1});
  Vec th = Vec::Zero(static_cast<Eigen::Index>(f.param_count()));
  th(static_cast<Eigen::Index>(f.node_offset(0, 0))) = 2.0;
  th(static_cast<Eigen::Index>(f.leaf_offset(0, 0))) = 2.0;
  th(static_cast<Eigen::Index>(f.leaf_offset(0, 1))) = -2.0;
  f.set_params(th);
  const Vec xg = uniform_grid(-4.0, 4.0, 200), yg = uniform_grid(-4.0, 5.0, 200);
  const QuadraticLoss loss(1);
  const auto wc = causal_wc_density(1.0, f, loss, g, xg, yg, cfg);
  const auto ws = sdro_wc_density(1.0, f, loss, ds, xg, yg, cfg);
  EXPECT_GT((wc.density - ws.density).cwiseAbs().maxCoeff(), 1e-3);
}

TEST(CausalDensity, SeparableLossSingleAtomMatchesSdro) {
  const auto cfg = cfg_eps(0.25);
  const Dataset ds = atoms({{0.2, 0.4}});
  const auto g = group_conditionals(ds);
  const auto f = random_forest(4);
  const Vec xg = uniform_grid(-3.5, 4.0, 200), yg = uniform_grid(-3.5, 4.0, 200);
  const SeparableLoss loss;
  for (double lam : {0.8, 3.0}) {
    const auto wc = causal_wc_density(lam, f, loss, g, xg, yg, cfg);
    const auto ws = sdro_wc_density(lam, f, loss, ds, xg, yg, cfg);
    EXPECT_LT((wc.density - ws.density).cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(CausalDensity, RejectsBadInput) {
  const auto cfg = cfg_eps(0.2);
  const Dataset ds = atoms({{0.0, 0.0}});
  const auto g = group_conditionals(ds);
  const auto f = random_forest(1);
  const QuadraticLoss loss(1);
  const Vec good = uniform_grid(-3.0, 3.0, 50);
  Vec bad = good;
  bad(10) = bad(9);
  EXPECT_THROW(causal_wc_density(1.0, f, loss, g, bad, good, cfg), ValidationError);
  EXPECT_THROW(causal_wc_density(0.0, f, loss, g, good, good, cfg), ValidationError);
  // Grid far from the atom cannot normalize the kernel.
  EXPECT_THROW(causal_wc_density(1.0, f, loss, g, uniform_grid(5.0, 9.0, 50), good, cfg), RuntimeFailure);
  // Narrow grid that still normalizes within tolerance only warns.
  const auto w = causal_wc_density(1.0, f, loss, g, uniform_grid(-1.5, 1.5, 200), uniform_grid(-1.5, 1.5, 200), cfg);
  EXPECT_FALSE(w.warnings.empty());
}

TEST(KlWeights, Examples) {
  const auto f = random_forest(5);
  const ConstantLoss c(1.0, 1, 1);
  const Dataset ds = atoms({{0.0, 0.0}, {1.0, 1.0}, {2.0, -1.0}});
  const Vec w = kl_wc_weights(0.3, f, c, ds);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(w(i), 1.0 / 3.0, 1e-15);

  // Losses 0 and lambda log 3 through a quadratic loss with a zero policy.
  SoftRegressionForest zero(1, 1, {1});
  const double lam = 0.8;
  const Dataset two = atoms({{0.0, 0.0}, {0.0, std::sqrt(lam * std::log(3.0))}});
  const Vec w2 = kl_wc_weights(lam, zero, QuadraticLoss(1), two);
  EXPECT_NEAR(w2(0), 0.25, 1e-14);
  EXPECT_NEAR(w2(1), 0.75, 1e-14);

  const Dataset many = atoms({{0.0, 0.5}, {1.0, -2.0}, {2.0, 3.0}, {-1.0, 0.0}});
  const Vec flat = kl_wc_weights(1e6, f, QuadraticLoss(1), many);
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(flat(i), 0.25, 1e-6);
  EXPECT_THROW(kl_wc_weights(0.0, f, c, ds), ValidationError);
}

TEST(KlWeights, EntropyNonIncreasingAsLambdaShrinks) {
  const auto f = random_forest(6);
  Rng rng = make_rng(6, 1);
  std::normal_distribution<double> nd;
  Dataset ds;
  ds.X = RowMat::NullaryExpr(30, 1, [&]() { return nd(rng); });
  ds.Y = RowMat::NullaryExpr(30, 1, [&]() { return nd(rng); });
  double prev = std::log(30.0) + 1e-12;
  for (double lam : {100.0, 10.0, 3.0, 1.0, 0.3, 0.1, 0.01}) {
    const Vec w = kl_wc_weights(lam, f, QuadraticLoss(1), ds);
    EXPECT_NEAR(w.sum(), 1.0, 1e-14);
    double h = 0.0;
    for (Eigen::Index i = 0; i < w.size(); ++i)
      if (w(i) > 0) h -= w(i) * std::log(w(i));
    EXPECT_LE(h, prev + 1e-12);
    prev = h;
  }
}

TEST(HardDual, ConstantLossMinimizedAtLowerEnd) {
  auto cfg = cfg_eps(0.1);
  const auto g = group_conditionals(atoms({{0.0, 1.0}, {1.0, 2.0}}));
  const auto f = random_forest(7);
  const auto res = hard_dual_solve(f, ConstantLoss(3.0, 1, 1), g, 1.0, cfg, 0.1, 5.0, 1);
  EXPECT_NEAR(res.lambda_star, 0.1, 1e-3);
  EXPECT_TRUE(res.hit_lower);
  EXPECT_NEAR(res.value, res.lambda_star * res.rho_bar + 3.0, 1e-12);
  for (Eigen::Index i = 0; i < res.curve.lambdas.size(); ++i)
    EXPECT_NEAR(res.curve.values(i), res.curve.lambdas(i) * res.rho_bar + 3.0, 1e-12);
}

TEST(HardDual, InfeasibleRadius) {
  const auto cfg = cfg_eps(0.1);
  const auto g = group_conditionals(atoms({{0.0, 1.0}}));
  const auto f = random_forest(8);
  ASSERT_LT(rho_bar(0.0, cfg, 1, 1), 0.0);
  EXPECT_THROW(hard_dual_solve(f, QuadraticLoss(1), g, 0.0, cfg, 0.1, 1.0, 1), ValidationError);
  EXPECT_THROW(hard_dual_solve(f, QuadraticLoss(1), g, 1.0, cfg, 1.0, 0.5, 1), ValidationError);
}

TEST(HardDual, ConvexCurveAndInteriorMinimizer) {
  Rng rng = make_rng(9, 0);
  std::normal_distribution<double> nd;
  Dataset ds;
  ds.X = RowMat::NullaryExpr(40, 1, [&]() { return nd(rng); });
  ds.Y = (ds.X.array() + 2.0).matrix() + RowMat::NullaryExpr(40, 1, [&]() { return 0.5 * nd(rng); });
  const auto g = group_conditionals(ds);
  SoftRegressionForest f(1, 1, {1});
  Vec th = Vec::Zero(static_cast<Eigen::Index>(f.param_count()));
  th(static_cast<Eigen::Index>(f.leaf_offset(0, 0))) = 2.0;
  th(static_cast<Eigen::Index>(f.leaf_offset(0, 1))) = 2.0;
  f.set_params(th);
  auto cfg = cfg_eps(0.1);
  cfg.n1 = 40;
  const NewsvendorLoss loss({Vec::Constant(1, 0.6), Vec::Constant(1, 1.0)});
  const auto res = hard_dual_solve(f, loss, g, 0.4, cfg, 0.05, 5.0, 3);
  EXPECT_FALSE(res.nonconvex);
  for (Eigen::Index i = 1; i + 1 < res.curve.values.size(); ++i)
    EXPECT_GE(res.curve.values(i - 1) - 2.0 * res.curve.values(i) + res.curve.values(i + 1), -1e-2);
  EXPECT_FALSE(res.hit_lower);
  EXPECT_FALSE(res.hit_upper);
  for (Eigen::Index i = 0; i < res.curve.values.size(); ++i) EXPECT_GE(res.curve.values(i), res.value - 1e-9);

  // Dense grid on the same common-random-number batch.
  Rng br = make_rng(3, 11);
  const SaaBatch batch = draw_saa_batch(g, cfg, br);
  double best = 1e300, arg = 0.0;
  for (double lam = 0.05; lam <= 5.0; lam += 2.5e-4) {
    const double v = hard_dual_value(lam, res.rho_bar, f, loss, g, batch, cfg);
    if (v < best) {
      best = v;
      arg = lam;
    }
  }
  EXPECT_NEAR(res.lambda_star, arg, 2e-3);
  EXPECT_NEAR(res.value, best, 1e-6);
}
