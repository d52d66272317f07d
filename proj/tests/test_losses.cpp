#include "csdro/losses.hpp"
#include "csdro/simplex.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

using namespace csdro;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Vec vec(std::initializer_list<double> v) {
  Vec out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double e : v) out(i++) = e;
  return out;
}

Vec uniform(int n, Rng& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Vec v(n);
  for (int i = 0; i < n; ++i) v(i) = u(rng);
  return v;
}

NewsvendorCosts nv_costs() { return {vec({0.6}), vec({1.0})}; }

InventoryCosts random_inventory_costs(Rng& rng) {
  InventoryCosts k;
  k.c = uniform(3, rng, 0.0, 1.0);
  k.h = uniform(3, rng, 0.1, 1.5);
  k.b = uniform(3, rng, 0.5, 2.5);
  k.S = Mat::Zero(3, 3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) k.S(i, j) = i > j ? kInf : (i == j ? 0.0 : uniform(1, rng, 0.5, 3.0)(0));
  return k;
}

}  // namespace

TEST(Newsvendor, Examples) {
  const auto c = nv_costs();
  EXPECT_DOUBLE_EQ(newsvendor_loss(vec({1.3}), vec({1.3}), c), 0.0);
  EXPECT_DOUBLE_EQ(newsvendor_loss(vec({2}), vec({1}), c), 0.6);
  EXPECT_DOUBLE_EQ(newsvendor_loss(vec({0}), vec({1}), c), 1.0);
  EXPECT_DOUBLE_EQ(newsvendor_grad(vec({0}), vec({1}), c)(0), -1.0);
  EXPECT_DOUBLE_EQ(newsvendor_grad(vec({2}), vec({1}), c)(0), 0.6);
  EXPECT_DOUBLE_EQ(newsvendor_grad(vec({1}), vec({1}), c)(0), 0.0);
}

TEST(Newsvendor, ConvexMidpoint) {
  Rng rng = make_rng(1, 0);
  const NewsvendorCosts c{vec({0.6, 0.3}), vec({1.0, 2.0})};
  for (int t = 0; t < 500; ++t) {
    const Vec a = uniform(2, rng, -3, 3), b = uniform(2, rng, -3, 3), y = uniform(2, rng, -3, 3);
    EXPECT_LE(newsvendor_loss(0.5 * (a + b), y, c),
              0.5 * newsvendor_loss(a, y, c) + 0.5 * newsvendor_loss(b, y, c) + 1e-12);
    EXPECT_GE(newsvendor_loss(a, y, c), 0.0);
  }
}

TEST(Newsvendor, LossClassUsesPositivePart) {
  const NewsvendorLoss loss(nv_costs());
  EXPECT_TRUE(loss.nonnegative_decisions());
  Vec g(1);
  const double v = loss.value_grad(vec({-1.0}).data(), vec({1.0}).data(), g.data());
  EXPECT_DOUBLE_EQ(v, 1.0);
  EXPECT_DOUBLE_EQ(loss.value(vec({-1.0}), vec({1.0})), 1.0);
}

TEST(Simplex, TrivialBound) {
  LpProblem lp{vec({1.0}), Mat::Ones(1, 1), vec({3.0}), {}, {}};
  const auto s = simplex_solve(lp);
  ASSERT_EQ(s.status, LpStatus::optimal);
  EXPECT_NEAR(s.value, 3.0, 1e-12);
}

TEST(Simplex, InfeasibleAndUnbounded) {
  LpProblem inf{vec({1.0}), (Mat(2, 1) << 1.0, -1.0).finished(), vec({1.0, -2.0}), {}, {}};
  EXPECT_EQ(simplex_solve(inf).status, LpStatus::infeasible);
  LpProblem unb{vec({1.0, 1.0}), (Mat(1, 2) << 1.0, -1.0).finished(), vec({1.0}), {}, {true, true}};
  EXPECT_EQ(simplex_solve(unb).status, LpStatus::unbounded);
}

TEST(Simplex, BealeCyclingExampleTerminates) {
  // Cycles under the textbook largest-coefficient rule; optimum 1.25.
  LpProblem lp;
  lp.c = vec({0.75, -20.0, 0.5, -6.0});
  lp.A = (Mat(3, 4) << 0.25, -8.0, -1.0, 9.0, 0.5, -12.0, -0.5, 3.0, 0.0, 0.0, 1.0, 0.0).finished();
  lp.rhs = vec({0.0, 0.0, 1.0});
  lp.nonneg.assign(4, true);
  const auto s = simplex_solve(lp);
  ASSERT_EQ(s.status, LpStatus::optimal);
  EXPECT_NEAR(s.value, 1.25, 1e-9);
}

TEST(Simplex, MatchesVertexEnumeration) {
  // Random bounded 2-variable LPs against brute-force enumeration of constraint-pair intersections.
  Rng rng = make_rng(2, 0);
  for (int t = 0; t < 200; ++t) {
    const int m = 6;
    Mat A(m + 4, 2);
    Vec rhs(m + 4);
    A.topRows(m) = Mat::NullaryExpr(m, 2, [&]() { return uniform(1, rng, -1, 1)(0); });
    rhs.head(m) = uniform(m, rng, 0.2, 2.0);  // origin feasible
    A.bottomRows(4) << 1, 0, -1, 0, 0, 1, 0, -1;
    rhs.tail(4).setConstant(5.0);
    const Vec c = uniform(2, rng, -1, 1);
    LpProblem lp{c, A, rhs, {}, {}};
    const auto s = simplex_solve(lp);
    ASSERT_EQ(s.status, LpStatus::optimal);
    double best = -kInf;
    for (int i = 0; i < m + 4; ++i)
      for (int j = i + 1; j < m + 4; ++j) {
        Eigen::Matrix2d M;
        M << A(i, 0), A(i, 1), A(j, 0), A(j, 1);
        if (std::abs(M.determinant()) < 1e-12) continue;
        const Eigen::Vector2d v = M.inverse() * Eigen::Vector2d(rhs(i), rhs(j));
        if (((A * Vec(v)) - rhs).maxCoeff() <= 1e-9) best = std::max(best, c.dot(Vec(v)));
      }
    EXPECT_NEAR(s.value, best, 1e-9);
    // Feasibility and complementary slackness.
    const Vec slack = rhs - A * s.v;
    EXPECT_GE(slack.minCoeff(), -1e-9);
    EXPECT_LT(std::abs(s.duals.dot(slack)), 1e-8);
    EXPECT_GE(s.duals.minCoeff(), -1e-9);
    EXPECT_LT((A.transpose() * s.duals - c).norm(), 1e-8);
  }
}

TEST(Simplex, EqualityAndGeRows) {
  // max x + y  s.t. x + y = 2, x >= 0.5, y >= 0.25, x <= 1.
  LpProblem lp;
  lp.c = vec({1.0, 2.0});
  lp.A = (Mat(4, 2) << 1, 1, 1, 0, 0, 1, 1, 0).finished();
  lp.rhs = vec({2.0, 0.5, 0.25, 1.0});
  lp.sense = {Sense::eq, Sense::ge, Sense::ge, Sense::le};
  const auto s = simplex_solve(lp);
  ASSERT_EQ(s.status, LpStatus::optimal);
  EXPECT_NEAR(s.v(0), 0.5, 1e-12);
  EXPECT_NEAR(s.v(1), 1.5, 1e-12);
  EXPECT_NEAR(s.value, 3.5, 1e-12);
}

TEST(Inventory, PrimalExamples) {
  const auto k = default_inventory_costs();
  Rng rng = make_rng(3, 0);
  for (int t = 0; t < 20; ++t) {
    const Vec z = uniform(3, rng, 0, 3);
    EXPECT_NEAR(inventory_primal(z, z, k), 0.0, 1e-12);
  }
  EXPECT_NEAR(inventory_primal(vec({1, 0, 0}), vec({0, 1, 0}), k), 1.7, 1e-12);
  EXPECT_NEAR(inventory_primal(vec({0, 0, 0}), vec({1, 1, 1}), k), 4.6, 1e-12);
  EXPECT_NEAR(inventory_dual_loss(vec({0, 0, 0}), vec({0, 0, 0}), k), 0.0, 1e-12);
}

TEST(Inventory, PrimalMatchesEnumeration) {
  // Single demand unit, several substitution options: cost is the cheapest route.
  const auto k = default_inventory_costs();
  // Stock only product 1, demand for product 3: substitute at 2.0 vs shortage 1.2 plus holding 1.0.
  EXPECT_NEAR(inventory_primal(vec({1, 0, 0}), vec({0, 0, 1}), k), std::min(2.0, 1.2 + 1.0), 1e-12);
  // Stock product 2, demand product 3: substitute at 1.5 vs 1.2 + 0.7.
  EXPECT_NEAR(inventory_primal(vec({0, 1, 0}), vec({0, 0, 1}), k), std::min(1.5, 1.2 + 0.7), 1e-12);
  // Lower products cannot serve higher-index stock backwards.
  EXPECT_NEAR(inventory_primal(vec({0, 0, 1}), vec({1, 0, 0}), k), 0.6 + 1.8, 1e-12);
}

TEST(Inventory, StrongDualityPaperCosts) {
  const auto k = default_inventory_costs();
  Rng rng = make_rng(4, 0);
  for (int t = 0; t < 200; ++t) {
    const Vec z = uniform(3, rng, 0, 4), y = uniform(3, rng, 0, 4);
    const auto d = inventory_dual(z, y, k);
    EXPECT_NEAR(d.value - k.c.dot(z), inventory_primal(z, y, k), 1e-8);
  }
}

TEST(Inventory, StrongDualityRandomCosts) {
  Rng rng = make_rng(5, 0);
  for (int t = 0; t < 200; ++t) {
    const auto k = random_inventory_costs(rng);
    const Vec z = uniform(3, rng, 0, 4), y = uniform(3, rng, 0, 4);
    EXPECT_NEAR(inventory_dual_loss(z, y, k) - k.c.dot(z), inventory_primal(z, y, k), 1e-8);
    const auto d = inventory_dual(z, y, k);
    EXPECT_LE((d.eta - k.h).maxCoeff(), 1e-9);
    EXPECT_LE((d.upsilon - k.b).maxCoeff(), 1e-9);
  }
}

TEST(Inventory, DualGradientMatchesFiniteDifferences) {
  Rng rng = make_rng(6, 0);
  int checked = 0;
  for (int t = 0; t < 300 && checked < 100; ++t) {
    const auto k = random_inventory_costs(rng);
    const Vec z = uniform(3, rng, 0.1, 4), y = uniform(3, rng, 0.1, 4);
    const Vec g = inventory_dual_grad_z(z, y, k);
    const double h = 1e-6;
    Vec fd(3);
    bool kink = false;
    for (int i = 0; i < 3; ++i) {
      Vec zp = z, zm = z;
      zp(i) += h;
      zm(i) -= h;
      const double f0 = inventory_dual_loss(z, y, k);
      const double fwd = (inventory_dual_loss(zp, y, k) - f0) / h;
      const double bwd = (f0 - inventory_dual_loss(zm, y, k)) / h;
      kink |= std::abs(fwd - bwd) > 1e-6;  // degenerate basis: one-sided slopes differ
      fd(i) = 0.5 * (fwd + bwd);
    }
    if (kink) continue;
    EXPECT_LT((g - fd).cwiseAbs().maxCoeff(), 1e-4) << "instance " << t;
    ++checked;
  }
  EXPECT_GE(checked, 50);
}

TEST(Inventory, LossClassClampsNegativeDemand) {
  const InventoryLoss loss(default_inventory_costs());
  const Vec z = vec({1, 1, 1});
  EXPECT_NEAR(loss.value(z, vec({-1, 1, 1})), loss.value(z, vec({0, 1, 1})), 1e-12);
  EXPECT_NEAR(loss.value(vec({-2, 1, 1}), vec({0, 1, 1})), 0.0, 1e-12);
}

TEST(Portfolio, Examples) {
  const PortfolioParams p{5.0};
  EXPECT_NEAR(portfolio_loss(vec({0, 0.5, 0.5}), vec({0.1, -0.1}), p), 0.0, 1e-15);
  const Vec z = vec({0.03, 0.2, 0.8}), y = vec({0.05, 0.025});
  const double r = y.dot(z.tail(2));
  Vec z0 = z;
  z0(0) = r;
  EXPECT_NEAR(portfolio_loss(z0, y, p), -5.0 * r, 1e-15);
}

TEST(Portfolio, GradientMatchesFiniteDifferences) {
  Rng rng = make_rng(7, 0);
  const PortfolioParams p{3.0};
  for (int t = 0; t < 100; ++t) {
    const Vec z = uniform(4, rng, -1, 1), y = uniform(3, rng, -0.2, 0.2);
    const Vec g = portfolio_grad(z, y, p);
    Vec fd(4);
    for (int i = 0; i < 4; ++i) {
      const double h = 1e-6;
      Vec zp = z, zm = z;
      zp(i) += h;
      zm(i) -= h;
      fd(i) = (portfolio_loss(zp, y, p) - portfolio_loss(zm, y, p)) / (2 * h);
    }
    EXPECT_LT((g - fd).norm() / std::max(fd.norm(), 1e-8), 1e-6);
  }
}

TEST(Portfolio, LossClassChainRule) {
  Rng rng = make_rng(8, 0);
  const PortfolioLoss loss(3, PortfolioParams{5.0});
  for (int t = 0; t < 50; ++t) {
    const Vec raw = uniform(4, rng, -2, 2), y = uniform(3, rng, -0.1, 0.1);
    Vec g(4);
    loss.value_grad(raw.data(), y.data(), g.data());
    Vec fd(4);
    for (int i = 0; i < 4; ++i) {
      const double h = 1e-6;
      Vec rp = raw, rm = raw;
      rp(i) += h;
      rm(i) -= h;
      fd(i) = (loss.value(rp, y) - loss.value(rm, y)) / (2 * h);
    }
    EXPECT_LT((g - fd).norm() / std::max(fd.norm(), 1e-8), 1e-6);
  }
}

TEST(MapDecision, Examples) {
  const Vec w = map_decision(vec({0.4, 1.0, 1.0, 1.0, 1.0}), Application::portfolio);
  EXPECT_DOUBLE_EQ(w(0), 0.4);
  for (int i = 1; i < 5; ++i) EXPECT_NEAR(w(i), 0.25, 1e-15);
  const Vec nv = map_decision(vec({-1.0, 2.0}), Application::newsvendor);
  EXPECT_EQ(nv, vec({0.0, 2.0}));
  Rng rng = make_rng(9, 0);
  for (int t = 0; t < 100; ++t) {
    const Vec z = map_decision(uniform(6, rng, -30, 30), Application::portfolio);
    EXPECT_NEAR(z.tail(5).sum(), 1.0, 1e-12);
    EXPECT_GE(z.tail(5).minCoeff(), 0.0);
  }
}

TEST(Oracle, Values) {
  Dataset ds;
  ds.X = RowMat::Zero(4, 1);
  ds.Y = RowMat::Ones(4, 3);
  EXPECT_EQ(oracle_loss(Application::newsvendor, ds), 0.0);
  EXPECT_EQ(oracle_loss(Application::inventory, ds), 0.0);

  // With purchase costs, each demand unit takes its cheapest route: stock it,
  // substitute from a lower product, or go short.
  Rng rng = make_rng(10, 0);
  const auto k = random_inventory_costs(rng);
  ds.Y = RowMat::NullaryExpr(4, 3, [&]() { return uniform(1, rng, 0, 3)(0); });
  double expect = 0.0;
  for (Eigen::Index r = 0; r < 4; ++r)
    for (int j = 0; j < 3; ++j) {
      double unit = k.b(j);
      for (int i = 0; i <= j; ++i) unit = std::min(unit, k.c(i) + k.S(i, j));
      expect += ds.Y(r, j) * unit / 4.0;
    }
  EXPECT_NEAR(oracle_loss(Application::inventory, ds, &k), expect, 1e-8);
}

TEST(Oracle, PortfolioDominantAsset) {
  // Asset 1 earns 3% more than asset 2 on every day with identical noise:
  // variance does not depend on the weights, so the optimum is all on asset 1.
  Rng rng = make_rng(11, 0);
  RowMat Y(60, 2);
  std::normal_distribution<double> nd(0.0, 0.01);
  for (Eigen::Index i = 0; i < 60; ++i) {
    const double e = nd(rng);
    Y(i, 0) = 0.03 + e;
    Y(i, 1) = e;
  }
  const auto r = portfolio_pt(Y, PortfolioParams{5.0});
  EXPECT_NEAR(r.weights(0), 1.0, 1e-9);
  EXPECT_NEAR(r.weights(1), 0.0, 1e-9);
  EXPECT_NEAR(r.z0, Y.col(0).mean(), 1e-9);
}

TEST(Oracle, PortfolioInteriorStationarity) {
  // Two independent assets with equal means: interior optimum; check the KKT
  // condition that both weights see the same gradient.
  Rng rng = make_rng(12, 0);
  RowMat Y(200, 2);
  std::normal_distribution<double> nd(0.0, 0.02);
  for (Eigen::Index i = 0; i < 200; ++i) {
    Y(i, 0) = 0.01 + nd(rng);
    Y(i, 1) = 0.01 + 2.0 * nd(rng);
  }
  const PortfolioParams p{0.1};
  const auto r = portfolio_pt(Y, p);
  ASSERT_GT(r.weights.minCoeff(), 0.0);
  Vec z(3);
  z << r.z0, r.weights;
  Vec g = Vec::Zero(3);
  for (Eigen::Index i = 0; i < 200; ++i) g += portfolio_grad(z, Y.row(i).transpose(), p) / 200.0;
  EXPECT_NEAR(g(0), 0.0, 1e-8);
  EXPECT_NEAR(g(1), g(2), 1e-8);
}

TEST(ProjectSimplex, Properties) {
  Rng rng = make_rng(13, 0);
  for (int t = 0; t < 100; ++t) {
    const Vec v = uniform(5, rng, -2, 2);
    const Vec p = project_simplex(v);
    EXPECT_NEAR(p.sum(), 1.0, 1e-12);
    EXPECT_GE(p.minCoeff(), 0.0);
    // Projection optimality: (v - p)'(q - p) <= 0 for every vertex q.
    for (int i = 0; i < 5; ++i) {
      Vec q = Vec::Zero(5);
      q(i) = 1.0;
      EXPECT_LE((v - p).dot(q - p), 1e-12);
    }
  }
}
