#include "csdro/kernels.hpp"

#include <cmath>
#include <numbers>

namespace csdro {

void SinkhornConfig::validate() const {
  if (p != 1 && p != 2) throw ValidationError("sinkhorn: p must be 1 or 2");
  if (!(eps > 0.0)) throw ValidationError("sinkhorn: eps must be > 0");
  if (!(lambda > 0.0)) throw ValidationError("sinkhorn: lambda must be > 0");
  if (!(B > 0.0)) throw ValidationError("sinkhorn: B must be > 0");
  if (n1 < 1 || n2 < 1 || n3 < 1) throw ValidationError("sinkhorn: n1, n2, n3 must be >= 1");
}

void sample_kernel_into(std::span<double> out, const SinkhornConfig& cfg, Rng& rng) {
  if (cfg.p == 2) {
    std::normal_distribution<double> n(0.0, std::sqrt(cfg.eps / 2.0));
    for (double& v : out) v = n(rng);
    return;
  }
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (double& v : out) {
    double a;
    do {
      a = u(rng);
    } while (1.0 - 2.0 * std::abs(a) <= 0.0);
    v = -cfg.eps * std::copysign(1.0, a) * std::log(1.0 - 2.0 * std::abs(a));
  }
}

Vec sample_kernel(int dim, const SinkhornConfig& cfg, Rng& rng) {
  Vec out(dim);
  sample_kernel_into(as_span(out), cfg, rng);
  return out;
}

double transport_cost(const Vec& a, const Vec& ah, const Vec& b, const Vec& bh, int p) {
  if (a.size() != ah.size() || b.size() != bh.size()) throw ValidationError("transport_cost: dimension mismatch");
  if (p == 1) return (a - ah).lpNorm<1>() + (b - bh).lpNorm<1>();
  if (p == 2) return (a - ah).squaredNorm() + (b - bh).squaredNorm();
  throw ValidationError("transport_cost: p must be 1 or 2");
}

double log_kernel_normalizer(int dim, int p, double eps) {
  if (p == 1) return dim * std::log(2.0 * eps);
  return 0.5 * dim * std::log(std::numbers::pi * eps);
}

double rho_bar(double rho, const SinkhornConfig& cfg, int d_x, int d_y) {
  if (!(rho >= 0.0)) throw ValidationError("rho_bar: rho must be >= 0");
  return std::pow(rho, cfg.p) + cfg.eps * log_kernel_normalizer(d_x, cfg.p, cfg.eps) +
         cfg.eps * log_kernel_normalizer(d_y, cfg.p, cfg.eps);
}

double kernel_std(int p, double eps) { return p == 1 ? std::sqrt(2.0) * eps : std::sqrt(eps / 2.0); }

}  // namespace csdro
