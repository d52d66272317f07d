#include "csdro/losses.hpp"
#include "csdro/simplex.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace csdro {

Application parse_application(const std::string& s) {
  if (s == "newsvendor") return Application::newsvendor;
  if (s == "inventory") return Application::inventory;
  if (s == "portfolio") return Application::portfolio;
  throw ValidationError("unknown application '" + s + "' (expected newsvendor, inventory or portfolio)");
}

std::string to_string(Application a) {
  switch (a) {
    case Application::newsvendor: return "newsvendor";
    case Application::inventory: return "inventory";
    case Application::portfolio: return "portfolio";
  }
  return "?";
}

void InventoryCosts::validate() const {
  const auto n = c.size();
  if (h.size() != n || b.size() != n || S.rows() != n || S.cols() != n)
    throw ValidationError("inventory costs: dimension mismatch");
  for (Eigen::Index i = 0; i < n; ++i)
    if (S(i, i) != 0.0) throw ValidationError("inventory costs: S must have a zero diagonal");
}

InventoryCosts default_inventory_costs() {
  const double inf = std::numeric_limits<double>::infinity();
  InventoryCosts k;
  k.c = Vec::Zero(3);
  k.h = (Vec(3) << 1.0, 0.7, 0.6).finished();
  k.b = (Vec(3) << 1.8, 1.6, 1.2).finished();
  k.S = (Mat(3, 3) << 0.0, 1.7, 2.0, inf, 0.0, 1.5, inf, inf, 0.0).finished();
  return k;
}

double newsvendor_loss(const Vec& z, const Vec& y, const NewsvendorCosts& costs) {
  return costs.h.dot((z - y).cwiseMax(0.0)) + costs.b.dot((y - z).cwiseMax(0.0));
}

Vec newsvendor_grad(const Vec& z, const Vec& y, const NewsvendorCosts& costs) {
  Vec g(z.size());
  for (Eigen::Index i = 0; i < z.size(); ++i)
    g(i) = z(i) > y(i) ? costs.h(i) : (z(i) < y(i) ? -costs.b(i) : 0.0);
  return g;
}

double inventory_primal(const Vec& z, const Vec& y, const InventoryCosts& costs) {
  const int n = static_cast<int>(z.size());
  // Variables: w_ij for finite S(i,j), i<j (diagonal transfers cost 0 and are kept), then u, u'.
  std::vector<std::pair<int, int>> arcs;
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j)
      if (std::isfinite(costs.S(i, j))) arcs.emplace_back(i, j);
  const int nw = static_cast<int>(arcs.size());
  const int nv = nw + 2 * n;
  LpProblem lp;
  lp.c = Vec::Zero(nv);
  lp.A = Mat::Zero(2 * n, nv);
  lp.rhs = Vec(2 * n);
  lp.sense.assign(static_cast<std::size_t>(2 * n), Sense::eq);
  lp.nonneg.assign(static_cast<std::size_t>(nv), true);
  for (int a = 0; a < nw; ++a) {
    const auto [i, j] = arcs[static_cast<std::size_t>(a)];
    lp.c(a) = -costs.S(i, j);
    lp.A(i, a) = 1.0;
    lp.A(n + j, a) = 1.0;
  }
  for (int i = 0; i < n; ++i) {
    lp.c(nw + i) = -costs.h(i);
    lp.A(i, nw + i) = 1.0;
    lp.c(nw + n + i) = -costs.b(i);
    lp.A(n + i, nw + n + i) = 1.0;
    lp.rhs(i) = z(i);
    lp.rhs(n + i) = y(i);
  }
  const auto sol = simplex_solve(lp);
  if (sol.status != LpStatus::optimal) throw RuntimeFailure("inventory_primal: LP solver failed");
  return -sol.value;
}

InventoryDual inventory_dual(const Vec& z, const Vec& y, const InventoryCosts& costs) {
  const int n = static_cast<int>(z.size());
  if (y.size() != n) throw ValidationError("inventory_dual: dimension mismatch");
  // Variables (eta[n], upsilon[n]), all free.
  std::vector<std::pair<int, int>> arcs;
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j)
      if (std::isfinite(costs.S(i, j))) arcs.emplace_back(i, j);
  const int m = 2 * n + static_cast<int>(arcs.size());
  LpProblem lp;
  lp.c.resize(2 * n);
  lp.c << z, y;
  lp.A = Mat::Zero(m, 2 * n);
  lp.rhs.resize(m);
  for (int i = 0; i < n; ++i) {
    lp.A(i, i) = 1.0;
    lp.rhs(i) = costs.h(i);
    lp.A(n + i, n + i) = 1.0;
    lp.rhs(n + i) = costs.b(i);
  }
  for (std::size_t a = 0; a < arcs.size(); ++a) {
    const auto [i, j] = arcs[a];
    const int r = 2 * n + static_cast<int>(a);
    lp.A(r, i) = 1.0;
    lp.A(r, n + j) = 1.0;
    lp.rhs(r) = costs.S(i, j);
  }
  const auto sol = simplex_solve(lp);
  if (sol.status != LpStatus::optimal)
    throw RuntimeFailure(sol.status == LpStatus::unbounded ? "inventory_dual: unbounded (negative z or y?)"
                                                           : "inventory_dual: infeasible");
  InventoryDual d;
  d.eta = sol.v.head(n);
  d.upsilon = sol.v.tail(n);
  d.value = sol.value + costs.c.dot(z);
  d.grad_z = d.eta + costs.c;
  return d;
}

double inventory_dual_loss(const Vec& z, const Vec& y, const InventoryCosts& costs) {
  return inventory_dual(z, y, costs).value;
}

Vec inventory_dual_grad_z(const Vec& z, const Vec& y, const InventoryCosts& costs) {
  return inventory_dual(z, y, costs).grad_z;
}

double portfolio_loss(const Vec& z, const Vec& y, const PortfolioParams& params) {
  const double r = y.dot(z.tail(y.size()));
  const double dev = r - z(0);
  return -params.omega * r + dev * dev;
}

Vec portfolio_grad(const Vec& z, const Vec& y, const PortfolioParams& params) {
  const double r = y.dot(z.tail(y.size()));
  const double dev = r - z(0);
  Vec g(z.size());
  g(0) = -2.0 * dev;
  g.tail(y.size()) = (-params.omega + 2.0 * dev) * y;
  return g;
}

Vec map_decision(const Vec& raw, Application app) {
  if (app != Application::portfolio) return raw.cwiseMax(0.0);
  Vec z(raw.size());
  z(0) = raw(0);
  Vec w(raw.size() - 1);
  softmax(as_span(raw).subspan(1), as_span(w));
  z.tail(w.size()) = w;
  return z;
}

Vec map_decision_vjp(const Vec& raw, Application app, const Vec& grad_z) {
  if (app != Application::portfolio) {
    Vec g(raw.size());
    for (Eigen::Index i = 0; i < raw.size(); ++i) g(i) = raw(i) > 0.0 ? grad_z(i) : 0.0;
    return g;
  }
  const auto n = raw.size() - 1;
  Vec w(n);
  softmax(as_span(raw).subspan(1), as_span(w));
  const Vec gw = grad_z.tail(n);
  const double mean = w.dot(gw);
  Vec g(raw.size());
  g(0) = grad_z(0);
  g.tail(n) = w.cwiseProduct(gw.array().matrix() - Vec::Constant(n, mean));
  return g;
}

NewsvendorLoss::NewsvendorLoss(NewsvendorCosts costs) : costs_(std::move(costs)) {
  if (costs_.h.size() != costs_.b.size() || costs_.h.size() < 1) throw ValidationError("newsvendor: cost dimension mismatch");
  if ((costs_.h.array() <= 0.0).any() || (costs_.b.array() <= 0.0).any())
    throw ValidationError("newsvendor: costs must be > 0");
}

double NewsvendorLoss::value(const double* raw, const double* y) const {
  double v = 0.0;
  for (Eigen::Index i = 0; i < costs_.h.size(); ++i) {
    const double z = std::max(raw[i], 0.0);
    v += z > y[i] ? costs_.h(i) * (z - y[i]) : costs_.b(i) * (y[i] - z);
  }
  return v;
}

double NewsvendorLoss::value_grad(const double* raw, const double* y, double* grad) const {
  double v = 0.0;
  for (Eigen::Index i = 0; i < costs_.h.size(); ++i) {
    const double z = std::max(raw[i], 0.0);
    double g;
    if (z > y[i]) {
      v += costs_.h(i) * (z - y[i]);
      g = costs_.h(i);
    } else {
      v += costs_.b(i) * (y[i] - z);
      g = z < y[i] ? -costs_.b(i) : 0.0;
    }
    grad[i] = raw[i] > 0.0 ? g : 0.0;
  }
  return v;
}

InventoryLoss::InventoryLoss(InventoryCosts costs) : costs_(std::move(costs)) { costs_.validate(); }

double InventoryLoss::value(const double* raw, const double* y) const {
  const auto n = costs_.c.size();
  const Vec z = Eigen::Map<const Vec>(raw, n).cwiseMax(0.0);
  const Vec yy = Eigen::Map<const Vec>(y, n).cwiseMax(0.0);
  return inventory_dual(z, yy, costs_).value;
}

double InventoryLoss::value_grad(const double* raw, const double* y, double* grad) const {
  const auto n = costs_.c.size();
  const Eigen::Map<const Vec> r(raw, n);
  const Vec z = r.cwiseMax(0.0);
  const Vec yy = Eigen::Map<const Vec>(y, n).cwiseMax(0.0);
  const auto d = inventory_dual(z, yy, costs_);
  for (Eigen::Index i = 0; i < n; ++i) grad[i] = raw[i] > 0.0 ? d.grad_z(i) : 0.0;
  return d.value;
}

PortfolioLoss::PortfolioLoss(int assets, PortfolioParams params) : assets_(assets), params_(params) {
  if (assets < 1) throw ValidationError("portfolio: at least one asset required");
  if (!(params.omega > 0.0)) throw ValidationError("portfolio: omega must be > 0");
}

double PortfolioLoss::value(const double* raw, const double* y) const {
  const Vec z = map_decision(Eigen::Map<const Vec>(raw, assets_ + 1), Application::portfolio);
  return portfolio_loss(z, Eigen::Map<const Vec>(y, assets_), params_);
}

double PortfolioLoss::value_grad(const double* raw, const double* y, double* grad) const {
  const Eigen::Map<const Vec> r(raw, assets_ + 1);
  const Eigen::Map<const Vec> yy(y, assets_);
  const Vec z = map_decision(r, Application::portfolio);
  const Vec g = map_decision_vjp(r, Application::portfolio, portfolio_grad(z, yy, params_));
  std::copy(g.data(), g.data() + g.size(), grad);
  return portfolio_loss(z, yy, params_);
}

double QuadraticLoss::value(const double* raw, const double* y) const {
  double v = 0.0;
  for (int i = 0; i < dim_; ++i) v += (raw[i] - y[i]) * (raw[i] - y[i]);
  return v;
}

double QuadraticLoss::value_grad(const double* raw, const double* y, double* grad) const {
  double v = 0.0;
  for (int i = 0; i < dim_; ++i) {
    v += (raw[i] - y[i]) * (raw[i] - y[i]);
    grad[i] = 2.0 * (raw[i] - y[i]);
  }
  return v;
}

Vec project_simplex(const Vec& v) {
  std::vector<double> u(v.data(), v.data() + v.size());
  std::sort(u.begin(), u.end(), std::greater<>());
  double cum = 0.0, theta = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    cum += u[i];
    const double t = (cum - 1.0) / static_cast<double>(i + 1);
    if (u[i] - t > 0.0) theta = t;
  }
  return (v.array() - theta).cwiseMax(0.0).matrix();
}

PtResult portfolio_pt(const RowMat& Y, const PortfolioParams& params, double tol, int max_iter) {
  if (Y.rows() < 1) throw ValidationError("portfolio_pt: empty window");
  const auto n = Y.cols();
  const Vec mu = Y.colwise().mean().transpose();
  const Mat centered = Y.rowwise() - mu.transpose();
  const Mat C = centered.transpose() * centered / static_cast<double>(Y.rows());
  // Objective over weights after eliminating z0 = mu'w: -omega mu'w + w'Cw.
  const double L = std::max(2.0 * Eigen::SelfAdjointEigenSolver<Mat>(C).eigenvalues().maxCoeff(), 1e-12);
  Vec w = Vec::Constant(n, 1.0 / static_cast<double>(n));
  for (int it = 0; it < max_iter; ++it) {
    const Vec g = -params.omega * mu + 2.0 * C * w;
    const Vec next = project_simplex(w - g / L);
    const double gm = L * (next - w).norm();
    w = next;
    if (gm <= tol * (1.0 + g.norm())) {
      PtResult r;
      r.weights = w;
      r.z0 = mu.dot(w);
      r.objective = -params.omega * mu.dot(w) + w.dot(C * w);
      r.iterations = it + 1;
      return r;
    }
  }
  throw RuntimeFailure("portfolio_pt: projected gradient did not converge");
}

namespace {

double inventory_oracle(const Vec& y, const InventoryCosts& costs) {
  // min over z >= 0 of c'z + allocation cost; variables z, w, u, u'.
  const int n = static_cast<int>(y.size());
  std::vector<std::pair<int, int>> arcs;
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j)
      if (std::isfinite(costs.S(i, j))) arcs.emplace_back(i, j);
  const int nw = static_cast<int>(arcs.size());
  const int nv = n + nw + 2 * n;
  LpProblem lp;
  lp.c = Vec::Zero(nv);
  lp.A = Mat::Zero(2 * n, nv);
  lp.rhs = Vec::Zero(2 * n);
  lp.sense.assign(static_cast<std::size_t>(2 * n), Sense::eq);
  lp.nonneg.assign(static_cast<std::size_t>(nv), true);
  for (int i = 0; i < n; ++i) {
    lp.c(i) = -costs.c(i);
    lp.A(i, i) = -1.0;
    lp.rhs(n + i) = std::max(y(i), 0.0);
  }
  for (int a = 0; a < nw; ++a) {
    const auto [i, j] = arcs[static_cast<std::size_t>(a)];
    lp.c(n + a) = -costs.S(i, j);
    lp.A(i, n + a) = 1.0;
    lp.A(n + j, n + a) = 1.0;
  }
  for (int i = 0; i < n; ++i) {
    lp.c(n + nw + i) = -costs.h(i);
    lp.A(i, n + nw + i) = 1.0;
    lp.c(n + nw + n + i) = -costs.b(i);
    lp.A(n + i, n + nw + n + i) = 1.0;
  }
  const auto sol = simplex_solve(lp);
  if (sol.status != LpStatus::optimal) throw RuntimeFailure("inventory oracle: LP solver failed");
  return -sol.value;
}

}  // namespace

double oracle_loss(Application app, const Dataset& test, const InventoryCosts* inv, const PortfolioParams* port) {
  if (test.size() == 0) throw ValidationError("oracle_loss: empty test set");
  switch (app) {
    case Application::newsvendor: return 0.0;
    case Application::inventory: {
      const InventoryCosts costs = inv ? *inv : default_inventory_costs();
      if (costs.c.isZero(0.0)) return 0.0;
      double s = 0.0;
      for (std::size_t i = 0; i < test.size(); ++i)
        s += inventory_oracle(test.Y.row(static_cast<Eigen::Index>(i)).transpose(), costs);
      return s / static_cast<double>(test.size());
    }
    case Application::portfolio: return portfolio_pt(test.Y, port ? *port : PortfolioParams{}).objective;
  }
  return 0.0;
}

}  // namespace csdro
