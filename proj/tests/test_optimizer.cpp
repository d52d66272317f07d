#include "csdro/optimizer.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

using namespace csdro;

namespace {

RowMat randn_rows(int r, int c, Rng& rng, double s = 1.0) {
  std::normal_distribution<double> nd(0.0, s);
  return RowMat::NullaryExpr(r, c, [&]() { return nd(rng); });
}

Vec randn(int n, Rng& rng, double s = 1.0) {
  std::normal_distribution<double> nd(0.0, s);
  return Vec::NullaryExpr(n, [&]() { return nd(rng); });
}

// y = sum(x) + noise, singleton groups.
Dataset linear_data(int n, int d_x, Rng& rng) {
  Dataset ds;
  ds.X = randn_rows(n, d_x, rng);
  ds.Y = ds.X.rowwise().sum() + randn_rows(n, 1, rng, 0.3);
  return ds;
}

SinkhornConfig cfg_of(double lambda, double eps) {
  SinkhornConfig c;
  c.lambda = lambda;
  c.eps = eps;
  return c;
}

double median(std::vector<double> v) {
  std::nth_element(v.begin(), v.begin() + static_cast<long>(v.size() / 2), v.end());
  return v[v.size() / 2];
}

}  // namespace

TEST(StepSchedule, Examples) {
  auto s = step_schedule(0, 10000, 1.0, 1.0);
  EXPECT_DOUBLE_EQ(s.alpha, 0.01);
  EXPECT_DOUBLE_EQ(s.beta, 0.01);
  EXPECT_EQ(step_schedule(0, 1, 1.0, 2.0).beta, 1.0);
  for (long k : {0L, 17L, 9999L}) EXPECT_EQ(step_schedule(k, 10000, 3.0, 1.0).alpha, 0.03);
  EXPECT_THROW(step_schedule(10, 10, 1.0, 1.0), ValidationError);
}

TEST(TrainConfig, Validation) {
  TrainConfig t;
  EXPECT_NO_THROW(t.validate());
  t.K = 0;
  EXPECT_THROW(t.validate(), ValidationError);
  t = TrainConfig{};
  t.radius = 0.0;
  EXPECT_THROW(t.validate(), ValidationError);
}

TEST(Scsc, HandComputedStep) {
  // Singleton group, x = 0, y = 0; depth-1 tree so each leaf has route
  // probability 1/2. Leaves at 1 give Psi = 1 (t3 = e with lambda eps = 1),
  // previous leaves at 0 give t3 = 1.
  Dataset ds;
  ds.X = RowMat::Zero(1, 1);
  ds.Y = RowMat::Zero(1, 1);
  const auto g = group_conditionals(ds);
  SoftRegressionForest f(1, 1, {1});
  const std::size_t l0 = f.leaf_offset(0, 0), l1 = f.leaf_offset(0, 1);
  TrainConfig tc;
  tc.K = 100;
  ScscState s = scsc_init(Vec::Zero(static_cast<int>(f.param_count())), tc);
  s.theta(static_cast<Eigen::Index>(l0)) = s.theta(static_cast<Eigen::Index>(l1)) = 1.0;
  s.y1 = 1.0;
  s.y1_ready = true;
  s.y2[1] = Vec::Ones(1);
  s.beta = 0.5;
  const QuadraticLoss loss(1);
  const auto scfg = cfg_of(2.0, 0.5);
  const Vec theta_before = s.theta;
  scsc_step_with(s, 0, Vec::Zero(1), Vec::Zero(1), g, f, loss, scfg, tc);
  const double e = std::exp(1.0);
  EXPECT_NEAR(s.y2[1](0) * std::exp(s.log_scale), e, 1e-14);
  EXPECT_NEAR(s.y1 * std::exp(s.log_scale), e, 1e-14);
  // direction on each leaf = (1/y1)(1/y2) t3 (1/le) dPsi/dz * 1/2 = e.
  EXPECT_NEAR(s.theta(static_cast<Eigen::Index>(l0)), 1.0 - 0.1 * e, 1e-14);
  EXPECT_NEAR(s.theta(static_cast<Eigen::Index>(l1)), 1.0 - 0.1 * e, 1e-14);
  EXPECT_EQ(s.theta_prev, theta_before);
  EXPECT_EQ(s.k, 1);
}

TEST(Scsc, ConstantLossKeepsThetaAndPullsTrackers) {
  Rng rng = make_rng(1, 0);
  const auto g = group_conditionals(linear_data(10, 2, rng));
  SoftRegressionForest f(2, 1, {2, 2});
  f.set_params(randn(static_cast<int>(f.param_count()), rng));
  const Vec theta0 = f.params();
  TrainConfig tc;
  tc.K = 200;
  tc.eval_every = 50;
  const auto res = train_causal_sdro(g, f, ConstantLoss(0.0, 1, 1), cfg_of(1.0, 0.1), tc);
  EXPECT_EQ(f.params(), theta0);
  EXPECT_EQ(res.trace.size(), 4u);
  for (const auto& r : res.trace) EXPECT_EQ(r.objective, 0.0);

  ScscState s = scsc_init(theta0, tc);
  s.y2[1] = Vec::Constant(1, 3.0);
  s.y1 = 3.0;
  s.y1_ready = true;
  s.beta = 0.25;
  scsc_step_with(s, 0, Vec::Zero(2), Vec::Zero(1), g, f, ConstantLoss(0.0, 1, 1), cfg_of(1.0, 0.1), tc);
  EXPECT_NEAR(s.y2[1](0), 0.75 * 3.0 + 0.25, 1e-15);
  EXPECT_NEAR(s.y1, 0.75 * 3.0 + 0.25, 1e-15);
}

TEST(Scsc, BetaOneIsOneSampleSgd) {
  Rng rng = make_rng(2, 0);
  const auto g = group_conditionals(linear_data(8, 2, rng));
  SoftRegressionForest f(2, 1, {2});
  f.set_params(randn(static_cast<int>(f.param_count()), rng));
  const QuadraticLoss loss(1);
  const auto scfg = cfg_of(10.0, 0.5);
  TrainConfig tc;
  tc.K = 1;  // beta = 1
  tc.c_alpha = 0.05;
  ScscState s = scsc_init(f.params(), tc);
  ASSERT_EQ(s.beta, 1.0);

  Vec theta = f.params();
  double prev_t3 = 0.0;
  Rng draws = make_rng(2, 1);
  std::uniform_int_distribution<std::size_t> pick(0, g.groups.size() - 1);
  for (int k = 0; k < 50; ++k) {
    const std::size_t gi = pick(draws);
    const Vec xi1 = sample_kernel(2, scfg, draws), xi2 = sample_kernel(1, scfg, draws);
    const Vec x = g.groups[gi].x + xi1;
    const Vec y = g.groups[gi].outcomes.row(0).transpose() + xi2;
    Vec z(1), gz(1);
    f.forward(theta.data(), x.data(), z.data());
    const double t3 = std::exp(loss.value_grad(z.data(), y.data(), gz.data()) / scfg.lam_eps());
    const double y1 = k == 0 ? t3 : prev_t3;
    const Vec u = (t3 / (y1 * scfg.lam_eps())) * gz;
    Vec d = Vec::Zero(theta.size());
    f.accumulate_vjp(theta.data(), x.data(), u.data(), d.data());
    theta -= s.alpha * d;
    project_params(f, theta, tc);
    prev_t3 = t3;

    scsc_step_with(s, gi, xi1, xi2, g, f, loss, scfg, tc);
    ASSERT_LT((s.theta - theta).cwiseAbs().maxCoeff(), 1e-12) << "step " << k;
  }
}

TEST(Scsc, ProjectionAndLeafClipping) {
  Rng rng = make_rng(3, 0);
  Dataset ds = linear_data(6, 2, rng);
  ds.Y.array() += 5.0;
  const auto g = group_conditionals(ds);
  SoftRegressionForest f(2, 1, {2, 2});
  f.set_params(randn(static_cast<int>(f.param_count()), rng, 3.0));
  TrainConfig tc;
  tc.K = 300;
  tc.radius = 0.5;
  tc.clip_leaves = true;
  tc.c_alpha = 5.0;
  train_causal_sdro(g, f, NewsvendorLoss({Vec::Constant(1, 1.0), Vec::Constant(1, 3.0)}), cfg_of(1.0, 0.2), tc);
  EXPECT_LE(f.params().cwiseAbs().maxCoeff(), 0.5);
  for (int t = 0; t < f.trees(); ++t)
    for (int l = 0; l < 4; ++l) EXPECT_GE(f.params()(static_cast<Eigen::Index>(f.leaf_offset(t, l))), 0.0);
}

TEST(Scsc, TrackersStayPositiveAndFinite) {
  Rng rng = make_rng(4, 0);
  Dataset ds = linear_data(30, 2, rng);
  // Repeated covariates give multi-outcome groups of mixed size.
  for (int i = 10; i < 30; ++i) ds.X.row(i) = ds.X.row(i % 5);
  const auto g = group_conditionals(ds);
  SoftRegressionForest f(2, 1, {2});
  f.set_params(randn(static_cast<int>(f.param_count()), rng));
  TrainConfig tc;
  tc.K = 2000;
  ScscState s = scsc_init(f.params(), tc);
  for (long k = 0; k < tc.K; ++k) {
    scsc_step(s, g, f, QuadraticLoss(1), cfg_of(0.5, 0.1), tc);
    ASSERT_GT(s.y1, 0.0);
    for (const auto& [n, v] : s.y2) ASSERT_GT(v.minCoeff(), 0.0);
  }
  EXPECT_GE(s.y2.size(), 2u);
}

TEST(Train, TraceLengthAndDeterminism) {
  Rng rng = make_rng(5, 0);
  const Dataset ds = linear_data(20, 2, rng);
  const auto g = group_conditionals(ds);
  const QuadraticLoss loss(1);
  for (long K : {1L, 99L, 100L, 101L, 250L}) {
    TrainConfig tc;
    tc.K = K;
    tc.eval_every = 50;
    SoftRegressionForest a(2, 1, {2}), b(2, 1, {2});
    const auto ra = train_causal_sdro(g, a, loss, cfg_of(1.0, 0.1), tc);
    const auto rb = train_causal_sdro(g, b, loss, cfg_of(1.0, 0.1), tc);
    EXPECT_EQ(ra.trace.size(), static_cast<std::size_t>((K + 49) / 50));
    EXPECT_EQ(ra.trace.back().iter, K);
    EXPECT_EQ(a.params(), b.params());
    for (std::size_t i = 0; i < ra.trace.size(); ++i) {
      EXPECT_EQ(ra.trace[i].objective, rb.trace[i].objective);
      EXPECT_EQ(ra.trace[i].wallclock_ms, 0.0);
    }
    SoftRegressionForest c(2, 1, {2}), d(2, 1, {2});
    const auto rc = train_sdro(ds, c, loss, cfg_of(1.0, 0.1), tc);
    train_sdro(ds, d, loss, cfg_of(1.0, 0.1), tc);
    EXPECT_EQ(rc.trace.size(), static_cast<std::size_t>((K + 49) / 50));
    EXPECT_EQ(c.params(), d.params());
  }
  TrainConfig t1, t2;
  t1.K = t2.K = 100;
  t2.seed = 1;
  SoftRegressionForest a(2, 1, {2}), b(2, 1, {2});
  a.set_params(Vec::Constant(static_cast<int>(a.param_count()), 0.1));
  b.set_params(a.params());
  train_causal_sdro(g, a, loss, cfg_of(1.0, 0.1), t1);
  train_causal_sdro(g, b, loss, cfg_of(1.0, 0.1), t2);
  EXPECT_NE(a.params(), b.params());
}

TEST(Train, QuadraticSurrogateTailBelowStart) {
  Rng rng = make_rng(6, 0);
  const auto g = group_conditionals(linear_data(40, 1, rng));
  SoftRegressionForest f(1, 1, {1});
  TrainConfig tc;
  tc.K = 4000;
  tc.eval_every = 100;
  tc.c_alpha = 2.0;
  const auto res = train_causal_sdro(g, f, QuadraticLoss(1), cfg_of(20.0, 0.5), tc);
  std::vector<double> head, tail;
  for (std::size_t i = 0; i < res.trace.size(); ++i)
    (i < res.trace.size() / 2 ? head : tail).push_back(res.trace[i].objective);
  EXPECT_LT(median(tail), res.trace.front().objective);
  EXPECT_LE(median(tail), median(head));
}

TEST(Train, GradientNormDecays) {
  Rng rng = make_rng(7, 0);
  const auto g = group_conditionals(linear_data(20, 2, rng));
  SoftRegressionForest f(2, 1, {2});
  f.set_params(randn(static_cast<int>(f.param_count()), rng, 0.5));
  const QuadraticLoss loss(1);
  auto scfg = cfg_of(2.0, 0.1);
  scfg.n1 = 20;
  scfg.n2 = 4;
  scfg.n3 = 4;
  Rng br = make_rng(7, 1);
  const auto batch = draw_saa_batch(g, scfg, br);
  TrainConfig tc;
  tc.K = 20000;
  ScscState s = scsc_init(f.params(), tc);
  const long tenth = tc.K / 10;
  double first = 0.0, last = 0.0;
  for (long k = 0; k < tc.K; ++k) {
    if (k < tenth) first += saa_gradient(f, s.theta, loss, g, batch, scfg).squaredNorm();
    if (k >= tc.K - tenth) last += saa_gradient(f, s.theta, loss, g, batch, scfg).squaredNorm();
    scsc_step(s, g, f, loss, scfg, tc);
  }
  EXPECT_LT(last, 10.0 * first);
}

TEST(Gd, ZeroGradientKeepsTheta) {
  Rng rng = make_rng(8, 0);
  const Dataset ds = linear_data(10, 2, rng);
  SoftRegressionForest f(2, 1, {2});
  f.set_params(randn(static_cast<int>(f.param_count()), rng));
  const Vec theta0 = f.params();
  TrainConfig tc;
  tc.K = 20;
  train_gd(GdObjective::erm, f, ConstantLoss(1.0, 1, 1), ds, tc);
  EXPECT_EQ(f.params(), theta0);
  train_gd(GdObjective::kl, f, ConstantLoss(1.0, 1, 1), ds, tc, 0.3);
  EXPECT_EQ(f.params(), theta0);
}

TEST(Gd, FirstStepDescends) {
  Rng rng = make_rng(9, 0);
  TrainConfig tc;
  tc.K = 1;
  tc.rate = 1e-4;
  for (int trial = 0; trial < 50; ++trial) {
    const Dataset ds = linear_data(15, 2, rng);
    SoftRegressionForest f(2, 1, {2, 1});
    f.set_params(randn(static_cast<int>(f.param_count()), rng));
    const Vec theta0 = f.params();
    const QuadraticLoss loss(1);
    const double e0 = erm_objective(f, theta0, loss, ds);
    train_gd(GdObjective::erm, f, loss, ds, tc);
    EXPECT_LT(erm_objective(f, f.params(), loss, ds), e0);
    f.set_params(theta0);
    const double k0 = kl_objective(f, theta0, loss, ds, 0.7);
    train_gd(GdObjective::kl, f, loss, ds, tc, 0.7);
    EXPECT_LT(kl_objective(f, f.params(), loss, ds, 0.7), k0);
  }
}

TEST(Gd, KlWithHugeLambdaTracksErm) {
  Rng rng = make_rng(10, 0);
  const Dataset ds = linear_data(30, 2, rng);
  SoftRegressionForest a(2, 1, {2}), b(2, 1, {2});
  a.set_params(randn(static_cast<int>(a.param_count()), rng));
  b.set_params(a.params());
  TrainConfig tc;
  tc.K = 200;
  tc.rate = 0.05;
  const QuadraticLoss loss(1);
  train_gd(GdObjective::erm, a, loss, ds, tc);
  train_gd(GdObjective::kl, b, loss, ds, tc, 1e6);
  EXPECT_NEAR(kl_objective(b, b.params(), loss, ds, 1e6), erm_objective(a, a.params(), loss, ds), 1e-3);
}

TEST(Gd, TraceAndMinibatchDeterminism) {
  Rng rng = make_rng(11, 0);
  const Dataset ds = linear_data(40, 2, rng);
  TrainConfig tc;
  tc.K = 120;
  tc.eval_every = 25;
  tc.batch = 8;
  SoftRegressionForest a(2, 1, {2}), b(2, 1, {2});
  const auto ra = train_gd(GdObjective::erm, a, QuadraticLoss(1), ds, tc);
  train_gd(GdObjective::erm, b, QuadraticLoss(1), ds, tc);
  EXPECT_EQ(ra.trace.size(), 5u);
  EXPECT_EQ(a.params(), b.params());
}
