#include "csdro/policies.hpp"

#include <cmath>

namespace csdro {

TwoLayerNet::TwoLayerNet(int d_x, int d_z, int hidden) : d_x_(d_x), d_z_(d_z), m_(hidden) {
  if (d_x < 1 || d_z < 1 || hidden < 1) throw ValidationError("nn2: d_x, d_z and hidden width must be >= 1");
  theta_ = Vec::Zero(static_cast<Eigen::Index>(m_) * d_z_ * (d_x_ + 2));
}

std::unique_ptr<DecisionRule> TwoLayerNet::clone() const { return std::make_unique<TwoLayerNet>(*this); }

std::size_t TwoLayerNet::unit_offset(int k, int i) const {
  return (static_cast<std::size_t>(k) * static_cast<std::size_t>(m_) + static_cast<std::size_t>(i)) *
         static_cast<std::size_t>(d_x_ + 2);
}

void TwoLayerNet::forward(const double* theta, const double* x, double* out) const {
  for (int k = 0; k < d_z_; ++k) {
    double acc = 0.0;
    for (int i = 0; i < m_; ++i) {
      const double* u = theta + unit_offset(k, i);
      double z = u[1];
      for (int q = 0; q < d_x_; ++q) z += u[2 + q] * x[q];
      if (z > 0.0) acc += u[0] * z;
    }
    out[k] = acc / m_;
  }
}

void TwoLayerNet::accumulate_vjp(const double* theta, const double* x, const double* upstream, double* grad) const {
  for (int k = 0; k < d_z_; ++k) {
    const double c = upstream[k] / m_;
    if (c == 0.0) continue;
    for (int i = 0; i < m_; ++i) {
      const double* u = theta + unit_offset(k, i);
      double z = u[1];
      for (int q = 0; q < d_x_; ++q) z += u[2 + q] * x[q];
      if (!(z > 0.0)) continue;  // subgradient 0 at the kink
      double* g = grad + unit_offset(k, i);
      g[0] += c * z;
      const double ga = c * u[0];
      g[1] += ga;
      for (int q = 0; q < d_x_; ++q) g[2 + q] += ga * x[q];
    }
  }
}

PolicyKind parse_policy_kind(const std::string& s) {
  if (s == "srf") return PolicyKind::srf;
  if (s == "nn2") return PolicyKind::nn2;
  throw ValidationError("unknown policy kind '" + s + "' (expected srf or nn2)");
}

std::string to_string(PolicyKind k) { return k == PolicyKind::srf ? "srf" : "nn2"; }

int default_srf_depth(int d_x) {
  int c = 0;
  while ((1 << c) < d_x) ++c;
  return c + 1;
}

std::unique_ptr<DecisionRule> init_policy(PolicyKind kind, int d_x, int d_z, Rng& rng, const PolicyHyper& hyper) {
  if (d_x < 1 || d_z < 1) throw ValidationError("init_policy: d_x and d_z must be >= 1");
  if (hyper.leaf_init.size() != 0 && hyper.leaf_init.size() != d_z)
    throw ValidationError("init_policy: leaf_init length must equal d_z");
  std::normal_distribution<double> gate(0.0, 1.0 / std::sqrt(static_cast<double>(d_x)));

  if (kind == PolicyKind::srf) {
    if (hyper.trees < 1) throw ValidationError("init_policy: trees must be >= 1");
    const int D = hyper.depth > 0 ? hyper.depth : default_srf_depth(d_x);
    auto f = std::make_unique<SoftRegressionForest>(d_x, d_z, std::vector<int>(static_cast<std::size_t>(hyper.trees), D),
                                                    hyper.tau);
    Vec& th = f->params();
    for (int t = 0; t < f->trees(); ++t) {
      const int internal = (1 << D) - 1;
      for (int j = 0; j < internal; ++j) {
        const auto off = static_cast<Eigen::Index>(f->node_offset(t, j));
        for (int q = 0; q < d_x; ++q) th(off + q) = gate(rng);
        th(off + d_x) = 0.0;
      }
      for (int l = 0; l <= internal; ++l) {
        const auto off = static_cast<Eigen::Index>(f->leaf_offset(t, l));
        for (int k = 0; k < d_z; ++k) th(off + k) = hyper.leaf_init.size() ? hyper.leaf_init(k) : 0.0;
      }
    }
    return f;
  }

  const int m = hyper.hidden > 0 ? hyper.hidden : 64 * d_x;
  auto net = std::make_unique<TwoLayerNet>(d_x, d_z, m);
  std::normal_distribution<double> outw(0.0, 1.0 / std::sqrt(static_cast<double>(m)));
  Vec& th = net->params();
  for (int k = 0; k < d_z; ++k) {
    for (int i = 0; i < m; ++i) {
      const auto off = static_cast<Eigen::Index>(net->unit_offset(k, i));
      th(off) = outw(rng);
      th(off + 1) = 0.0;
      for (int q = 0; q < d_x; ++q) th(off + 2 + q) = gate(rng);
    }
  }
  return net;
}

}  // namespace csdro
