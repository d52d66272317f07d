#pragma once

#include "csdro/common.hpp"
#include "csdro/data.hpp"
#include "csdro/kernels.hpp"
#include "csdro/losses.hpp"
#include "csdro/policies.hpp"

#include <vector>

namespace csdro {

// Monte-Carlo batch for the nested causal objective. Outer samples are groups;
// xi1 rows are shared across groups and xi2 rows across outcomes of a group.
struct SaaBatch {
  std::vector<std::size_t> groups;
  Vec weights;  // outer weights, sum to 1
  RowMat xi1;   // N2 x d_x
  RowMat xi2;   // N3 x d_y
};

// Outer draws pick dataset rows uniformly with replacement, so a group is drawn
// with probability proportional to its size. With full_outer every group appears
// once, weighted by its row share.
SaaBatch draw_saa_batch(const GroupedDataset& g, const SinkhornConfig& cfg, Rng& rng, bool full_outer = false);

// Jointly drawn perturbation pairs (xi_x[k], xi_y[k]) shared by all rows.
struct SdroBatch {
  std::vector<std::size_t> rows;
  Vec weights;
  RowMat xi_x;  // M x d_x
  RowMat xi_y;  // M x d_y
};

SdroBatch draw_sdro_batch(const Dataset& ds, const SinkhornConfig& cfg, Rng& rng, bool full_outer = false);

// min(Psi, B); throws RuntimeFailure on NaN.
double clipped_loss(const Loss& loss, const double* raw, const double* y, double B);

// exp(clip(Psi(f(xh + xi1), y_i + xi2)) / (lambda eps)) for each outcome y_i of the group.
Vec t3(const DecisionRule& policy, const Vec& theta, const Loss& loss, const Group& group, const Vec& xi1,
       const Vec& xi2, const SinkhornConfig& cfg);

// Weighted geometric mean exp(sum p_i log v_i).
double t2(const Vec& v, const Vec& probs);

struct ValueGrad {
  double value = 0.0;
  Vec grad;
};

double saa_objective(const DecisionRule& policy, const Vec& theta, const Loss& loss, const GroupedDataset& g,
                     const SaaBatch& batch, const SinkhornConfig& cfg);
ValueGrad saa_value_grad(const DecisionRule& policy, const Vec& theta, const Loss& loss, const GroupedDataset& g,
                         const SaaBatch& batch, const SinkhornConfig& cfg);
Vec saa_gradient(const DecisionRule& policy, const Vec& theta, const Loss& loss, const GroupedDataset& g,
                 const SaaBatch& batch, const SinkhornConfig& cfg);

double sdro_objective(const DecisionRule& policy, const Vec& theta, const Loss& loss, const Dataset& ds,
                      const SdroBatch& batch, const SinkhornConfig& cfg);
ValueGrad sdro_value_grad(const DecisionRule& policy, const Vec& theta, const Loss& loss, const Dataset& ds,
                          const SdroBatch& batch, const SinkhornConfig& cfg);
Vec sdro_gradient(const DecisionRule& policy, const Vec& theta, const Loss& loss, const Dataset& ds,
                  const SdroBatch& batch, const SinkhornConfig& cfg);

// lambda * log mean exp(Psi_i / lambda) over the dataset rows.
double kl_objective(const DecisionRule& policy, const Vec& theta, const Loss& loss, const Dataset& ds, double lambda);
ValueGrad kl_value_grad(const DecisionRule& policy, const Vec& theta, const Loss& loss, const Dataset& ds,
                        double lambda);
Vec kl_gradient(const DecisionRule& policy, const Vec& theta, const Loss& loss, const Dataset& ds, double lambda);

double erm_objective(const DecisionRule& policy, const Vec& theta, const Loss& loss, const Dataset& ds);
ValueGrad erm_value_grad(const DecisionRule& policy, const Vec& theta, const Loss& loss, const Dataset& ds,
                         const std::vector<std::size_t>* rows = nullptr);
Vec erm_gradient(const DecisionRule& policy, const Vec& theta, const Loss& loss, const Dataset& ds);

// Mean unclipped loss of the policy's decisions over a dataset.
double mean_loss(const DecisionRule& policy, const Loss& loss, const Dataset& ds);

}  // namespace csdro
