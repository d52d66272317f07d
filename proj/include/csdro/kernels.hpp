#pragma once

#include "csdro/common.hpp"

namespace csdro {

struct SinkhornConfig {
  int p = 2;           // transport exponent, 1 or 2
  double eps = 0.1;    // entropic regularization
  double lambda = 1.0; // penalty weight
  double B = 1e3;      // loss clip ceiling
  int n1 = 50;
  int n2 = 10;
  int n3 = 10;

  void validate() const;
  double lam_eps() const { return lambda * eps; }
};

// Draw from Q_eps / W_eps: iid Laplace(0, eps) for p=1, iid N(0, eps/2) for p=2.
Vec sample_kernel(int dim, const SinkhornConfig& cfg, Rng& rng);
void sample_kernel_into(std::span<double> out, const SinkhornConfig& cfg, Rng& rng);

// ||a-ah||^p + ||b-bh||^p with the l1 norm for p=1 and l2 for p=2.
double transport_cost(const Vec& a, const Vec& ah, const Vec& b, const Vec& bh, int p);

// log of int exp(-||u||^p / eps) du over R^dim.
double log_kernel_normalizer(int dim, int p, double eps);

// rho^p + eps*log Z_x + eps*log Z_y.
double rho_bar(double rho, const SinkhornConfig& cfg, int d_x, int d_y);

// Per-coordinate standard deviation of the kernel.
double kernel_std(int p, double eps);

}  // namespace csdro
