#pragma once

#include "csdro/common.hpp"
#include "csdro/data.hpp"
#include "csdro/policies.hpp"

#include <string>
#include <vector>

namespace csdro {

struct ImportanceReport {
  Vec raw;
  Vec normalized;    // sums to 1 unless degenerate
  std::string method;
  bool degenerate = false;  // all raw scores zero, nothing to normalize
};

// C_j = mean over rows of ||d f / d x_j||_1.
ImportanceReport global_importance(const SoftRegressionForest& forest, const Dataset& ds);

// Mean l1 change of the decisions after shuffling column j.
ImportanceReport permutation_importance(const DecisionRule& rule, const Dataset& ds, Rng& rng);

struct EigAttribution {
  Mat phi;  // d_x x d_z
  Vec baseline;
  Vec prescription;

  // sum_j phi(j, k) - (prescription_k - baseline_k).
  Vec residual() const;
};

// Path integrals by the M-point midpoint rule against every dataset row.
EigAttribution eig(const SoftRegressionForest& forest, const Vec& x, const Dataset& ds, int M = 64);

struct RouteStep {
  int node;
  bool left;
  double gate_prob;  // probability of the branch taken
};

struct RouteEntry {
  int leaf;
  double prob;
  std::vector<RouteStep> path;
};

// Per tree, the top_k leaves by route probability, most likely first.
std::vector<std::vector<RouteEntry>> trace_routes(const SoftRegressionForest& forest, const Vec& x, int top_k);

}  // namespace csdro
