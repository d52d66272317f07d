#pragma once

#include "csdro/common.hpp"
#include "csdro/data.hpp"
#include "csdro/kernels.hpp"
#include "csdro/losses.hpp"
#include "csdro/objective.hpp"
#include "csdro/policies.hpp"

#include <string>
#include <vector>

namespace csdro {

enum class WcModel { causal_sdro, sdro, kl_dro };

std::string to_string(WcModel m);

// Density on a 1-D x 1-D grid, density(i, j) at (x_grid(i), y_grid(j)).
struct WorstCaseGrid {
  Vec x_grid;
  Vec y_grid;
  Mat density;
  WcModel model = WcModel::causal_sdro;
  std::vector<std::string> warnings;

  double integral() const;
};

// Trapezoid weights of an ascending grid.
Vec trapezoid_weights(const Vec& grid);
Vec uniform_grid(double lo, double hi, int n);

// Worst-case density of the soft-constrained causal problem at penalty lambda.
// Requires d_x = d_y = 1. All normalizers are trapezoid sums on the grid.
WorstCaseGrid causal_wc_density(double lambda, const DecisionRule& policy, const Loss& loss,
                                const GroupedDataset& g, const Vec& x_grid, const Vec& y_grid,
                                const SinkhornConfig& cfg);

// Same for the non-causal problem: one joint normalizer per data point.
WorstCaseGrid sdro_wc_density(double lambda, const DecisionRule& policy, const Loss& loss, const Dataset& ds,
                              const Vec& x_grid, const Vec& y_grid, const SinkhornConfig& cfg);

// Reweighting of the data points, w_i proportional to exp(Psi_i / lambda).
Vec kl_wc_weights(double lambda, const DecisionRule& policy, const Loss& loss, const Dataset& ds);

struct DualCurve {
  Vec lambdas;
  Vec values;
};

struct HardDualResult {
  double lambda_star = 0.0;
  double value = 0.0;
  double rho_bar = 0.0;
  DualCurve curve;
  bool hit_lower = false;  // minimizer at the bracket endpoint
  bool hit_upper = false;
  bool nonconvex = false;  // curve failed the convexity check after the retry
  int retries = 0;
};

// lambda * rho_bar + SAA objective at lambda, on one common batch.
double hard_dual_value(double lambda, double rb, const DecisionRule& policy, const Loss& loss,
                       const GroupedDataset& g, const SaaBatch& batch, const SinkhornConfig& cfg);

// Minimizes the dual over [lam_lo, lam_hi] by golden-section search to 1e-3 in lambda.
// Throws ValidationError("primal infeasible") when rho_bar < 0.
HardDualResult hard_dual_solve(const DecisionRule& policy, const Loss& loss, const GroupedDataset& g, double rho,
                               const SinkhornConfig& cfg, double lam_lo, double lam_hi, std::uint64_t seed,
                               int curve_points = 20);

}  // namespace csdro
