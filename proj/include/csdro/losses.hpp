#pragma once

#include "csdro/common.hpp"
#include "csdro/data.hpp"

#include <memory>
#include <string>

namespace csdro {

enum class Application { newsvendor, inventory, portfolio };

Application parse_application(const std::string& s);
std::string to_string(Application a);

struct NewsvendorCosts {
  Vec h;
  Vec b;
};

// S(i, j) is the cost of serving demand j from stock i; +inf below the diagonal.
struct InventoryCosts {
  Vec c;
  Vec h;
  Vec b;
  Mat S;

  void validate() const;
};

// Cost data of the three-product experiment.
InventoryCosts default_inventory_costs();

struct PortfolioParams {
  double omega = 5.0;
};

double newsvendor_loss(const Vec& z, const Vec& y, const NewsvendorCosts& costs);
Vec newsvendor_grad(const Vec& z, const Vec& y, const NewsvendorCosts& costs);

// Min-cost allocation of stock z to demand y. Requires z, y >= 0.
double inventory_primal(const Vec& z, const Vec& y, const InventoryCosts& costs);

struct InventoryDual {
  double value;  // includes c'z
  Vec grad_z;    // eta* + c
  Vec eta;
  Vec upsilon;
};
InventoryDual inventory_dual(const Vec& z, const Vec& y, const InventoryCosts& costs);
double inventory_dual_loss(const Vec& z, const Vec& y, const InventoryCosts& costs);
Vec inventory_dual_grad_z(const Vec& z, const Vec& y, const InventoryCosts& costs);

// z = (z0, weights[d_y]).
double portfolio_loss(const Vec& z, const Vec& y, const PortfolioParams& params);
Vec portfolio_grad(const Vec& z, const Vec& y, const PortfolioParams& params);

// Raw policy output -> feasible decision.
Vec map_decision(const Vec& raw, Application app);
// Chain rule through map_decision: returns d/d raw given d/d z.
Vec map_decision_vjp(const Vec& raw, Application app, const Vec& grad_z);

// Loss as seen by the objectives: a function of the raw policy output.
class Loss {
 public:
  virtual ~Loss() = default;
  virtual int decision_dim() const = 0;
  virtual int outcome_dim() const = 0;
  virtual double value(const double* raw, const double* y) const = 0;
  // Returns the value; writes d value / d raw into grad.
  virtual double value_grad(const double* raw, const double* y, double* grad) const = 0;
  virtual bool nonnegative_decisions() const { return false; }

  double value(const Vec& raw, const Vec& y) const { return value(raw.data(), y.data()); }
};

class NewsvendorLoss : public Loss {
 public:
  explicit NewsvendorLoss(NewsvendorCosts costs);
  int decision_dim() const override { return static_cast<int>(costs_.h.size()); }
  int outcome_dim() const override { return static_cast<int>(costs_.h.size()); }
  double value(const double* raw, const double* y) const override;
  double value_grad(const double* raw, const double* y, double* grad) const override;
  bool nonnegative_decisions() const override { return true; }
  using Loss::value;

 private:
  NewsvendorCosts costs_;
};

// Recourse loss via the dual LP. Perturbed demands are clamped at 0 (the
// support of demand) before the LP is solved.
class InventoryLoss : public Loss {
 public:
  explicit InventoryLoss(InventoryCosts costs);
  int decision_dim() const override { return static_cast<int>(costs_.c.size()); }
  int outcome_dim() const override { return static_cast<int>(costs_.c.size()); }
  double value(const double* raw, const double* y) const override;
  double value_grad(const double* raw, const double* y, double* grad) const override;
  bool nonnegative_decisions() const override { return true; }
  using Loss::value;

 private:
  InventoryCosts costs_;
};

class PortfolioLoss : public Loss {
 public:
  PortfolioLoss(int assets, PortfolioParams params);
  int decision_dim() const override { return assets_ + 1; }
  int outcome_dim() const override { return assets_; }
  double value(const double* raw, const double* y) const override;
  double value_grad(const double* raw, const double* y, double* grad) const override;
  using Loss::value;

 private:
  int assets_;
  PortfolioParams params_;
};

// ||raw - y||^2, a smooth surrogate used in tests and convergence checks.
class QuadraticLoss : public Loss {
 public:
  explicit QuadraticLoss(int dim) : dim_(dim) {}
  int decision_dim() const override { return dim_; }
  int outcome_dim() const override { return dim_; }
  double value(const double* raw, const double* y) const override;
  double value_grad(const double* raw, const double* y, double* grad) const override;
  using Loss::value;

 private:
  int dim_;
};

class ConstantLoss : public Loss {
 public:
  ConstantLoss(double c, int d_z, int d_y) : c_(c), d_z_(d_z), d_y_(d_y) {}
  int decision_dim() const override { return d_z_; }
  int outcome_dim() const override { return d_y_; }
  double value(const double*, const double*) const override { return c_; }
  double value_grad(const double*, const double*, double* grad) const override {
    std::fill(grad, grad + d_z_, 0.0);
    return c_;
  }
  using Loss::value;

 private:
  double c_;
  int d_z_;
  int d_y_;
};

struct PtResult {
  Vec weights;
  double z0;
  double objective;  // mean loss over the window at the optimum
  int iterations;
};

// min over the simplex (and free z0) of the mean portfolio loss over the rows of Y,
// by projected gradient descent. Throws RuntimeFailure if the projected-gradient
// norm does not fall below `tol` within `max_iter` iterations.
PtResult portfolio_pt(const RowMat& Y, const PortfolioParams& params, double tol = 1e-9, int max_iter = 200000);

// Euclidean projection onto the probability simplex.
Vec project_simplex(const Vec& v);

// Mean loss under perfect information over the test set.
double oracle_loss(Application app, const Dataset& test, const InventoryCosts* inv = nullptr,
                   const PortfolioParams* port = nullptr);

}  // namespace csdro
