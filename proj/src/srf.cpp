#include "csdro/policies.hpp"

#include <algorithm>
#include <cmath>

namespace csdro {

void DecisionRule::set_params(const Vec& theta) {
  if (theta.size() != theta_.size()) throw ValidationError("set_params: parameter length mismatch");
  theta_ = theta;
}

Vec DecisionRule::forward(const Vec& x) const {
  if (x.size() != input_dim()) throw ValidationError("forward: input dimension mismatch");
  Vec out(output_dim());
  forward(theta_.data(), x.data(), out.data());
  return out;
}

Vec DecisionRule::vjp_theta(const Vec& x, const Vec& upstream) const {
  if (x.size() != input_dim() || upstream.size() != output_dim())
    throw ValidationError("vjp_theta: dimension mismatch");
  Vec g = Vec::Zero(theta_.size());
  accumulate_vjp(theta_.data(), x.data(), upstream.data(), g.data());
  return g;
}

std::size_t SoftRegressionForest::count_params(int d_x, int d_z, const std::vector<int>& depths) {
  std::size_t n = 0;
  for (int D : depths) {
    const std::size_t leaves = std::size_t{1} << D;
    n += (leaves - 1) * static_cast<std::size_t>(d_x + 1) + leaves * static_cast<std::size_t>(d_z);
  }
  return n;
}

SoftRegressionForest::SoftRegressionForest(int d_x, int d_z, std::vector<int> depths, double tau)
    : d_x_(d_x), d_z_(d_z), depths_(std::move(depths)), tau_(tau) {
  if (d_x < 1 || d_z < 1) throw ValidationError("srf: d_x and d_z must be >= 1");
  if (depths_.empty()) throw ValidationError("srf: at least one tree required");
  for (int D : depths_)
    if (D < 1 || D > 20) throw ValidationError("srf: depth must be in [1, 20]");
  if (!(tau > 0.0)) throw ValidationError("srf: tau must be > 0");
  std::size_t off = 0;
  for (int D : depths_) {
    offsets_.push_back(off);
    off += count_params(d_x, d_z, {D});
  }
  theta_ = Vec::Zero(static_cast<Eigen::Index>(off));
}

std::unique_ptr<DecisionRule> SoftRegressionForest::clone() const {
  return std::make_unique<SoftRegressionForest>(*this);
}

void SoftRegressionForest::set_tau(double tau) {
  if (!(tau > 0.0)) throw ValidationError("srf: tau must be > 0");
  tau_ = tau;
}

std::size_t SoftRegressionForest::node_offset(int t, int j) const {
  return offsets_[static_cast<std::size_t>(t)] + static_cast<std::size_t>(j) * static_cast<std::size_t>(d_x_ + 1);
}

std::size_t SoftRegressionForest::leaf_offset(int t, int l) const {
  const std::size_t internal = (std::size_t{1} << depth(t)) - 1;
  return offsets_[static_cast<std::size_t>(t)] + internal * static_cast<std::size_t>(d_x_ + 1) +
         static_cast<std::size_t>(l) * static_cast<std::size_t>(d_z_);
}

void SoftRegressionForest::gate_probs(const double* theta, int t, const double* x, double* s) const {
  const int internal = (1 << depth(t)) - 1;
  for (int j = 0; j < internal; ++j) {
    const double* w = theta + node_offset(t, j);
    double z = w[d_x_];
    for (int q = 0; q < d_x_; ++q) z += w[q] * x[q];
    s[j] = sigmoid(z / tau_);
  }
}

namespace {

// Heap-ordered reach probabilities; prob[0] = 1. Right branches use 1 - s.
void node_probs(const double* s, int depth, double* prob) {
  const int internal = (1 << depth) - 1;
  prob[0] = 1.0;
  for (int j = 0; j < internal; ++j) {
    prob[2 * j + 1] = prob[j] * s[j];
    prob[2 * j + 2] = prob[j] * (1.0 - s[j]);
  }
}

thread_local std::vector<double> tl_s;
thread_local std::vector<double> tl_prob;
thread_local std::vector<double> tl_acc;

void ensure(std::vector<double>& v, std::size_t n) {
  if (v.size() < n) v.resize(n);
}

}  // namespace

void SoftRegressionForest::forward(const double* theta, const double* x, double* out) const {
  std::fill(out, out + d_z_, 0.0);
  for (int t = 0; t < trees(); ++t) {
    const int D = depth(t);
    const int internal = (1 << D) - 1;
    ensure(tl_s, static_cast<std::size_t>(internal));
    ensure(tl_prob, static_cast<std::size_t>(2 * internal + 1));
    gate_probs(theta, t, x, tl_s.data());
    node_probs(tl_s.data(), D, tl_prob.data());
    for (int l = 0; l <= internal; ++l) {
      const double p = tl_prob[static_cast<std::size_t>(internal + l)];
      const double* pi = theta + leaf_offset(t, l);
      for (int k = 0; k < d_z_; ++k) out[k] += p * pi[k];
    }
  }
  const double inv_t = 1.0 / trees();
  for (int k = 0; k < d_z_; ++k) out[k] *= inv_t;
}

void SoftRegressionForest::accumulate_vjp(const double* theta, const double* x, const double* upstream,
                                          double* grad) const {
  const double inv_t = 1.0 / trees();
  for (int t = 0; t < trees(); ++t) {
    const int D = depth(t);
    const int internal = (1 << D) - 1;
    const int nodes = 2 * internal + 1;
    ensure(tl_s, static_cast<std::size_t>(internal));
    ensure(tl_prob, static_cast<std::size_t>(nodes));
    ensure(tl_acc, static_cast<std::size_t>(nodes));
    gate_probs(theta, t, x, tl_s.data());
    node_probs(tl_s.data(), D, tl_prob.data());

    // Leaves: d out/d pi_l = p_l / T. acc holds p_l * (pi_l . upstream).
    for (int l = 0; l <= internal; ++l) {
      const double p = tl_prob[static_cast<std::size_t>(internal + l)];
      const double* pi = theta + leaf_offset(t, l);
      double* g = grad + leaf_offset(t, l);
      double v = 0.0;
      for (int k = 0; k < d_z_; ++k) {
        g[k] += p * inv_t * upstream[k];
        v += pi[k] * upstream[k];
      }
      tl_acc[static_cast<std::size_t>(internal + l)] = p * v;
    }
    for (int j = internal - 1; j >= 0; --j)
      tl_acc[static_cast<std::size_t>(j)] = tl_acc[static_cast<std::size_t>(2 * j + 1)] + tl_acc[static_cast<std::size_t>(2 * j + 2)];

    // Gate j: sum over leaves below it of p_l * psi_j * v_l / tau.
    for (int j = 0; j < internal; ++j) {
      const double s = tl_s[static_cast<std::size_t>(j)];
      const double gz = ((1.0 - s) * tl_acc[static_cast<std::size_t>(2 * j + 1)] -
                         s * tl_acc[static_cast<std::size_t>(2 * j + 2)]) / tau_ * inv_t;
      double* g = grad + node_offset(t, j);
      for (int q = 0; q < d_x_; ++q) g[q] += gz * x[q];
      g[d_x_] += gz;
    }
  }
}

void SoftRegressionForest::clip_nonnegative(double* theta) const {
  for (int t = 0; t < trees(); ++t) {
    const int leaves = 1 << depth(t);
    double* pi = theta + leaf_offset(t, 0);
    for (int q = 0; q < leaves * d_z_; ++q) pi[q] = std::max(pi[q], 0.0);
  }
}

Vec SoftRegressionForest::route_probs(const Vec& x, int t) const {
  if (t < 0 || t >= trees()) throw ValidationError("route_probs: tree index out of range");
  if (x.size() != d_x_) throw ValidationError("route_probs: input dimension mismatch");
  const int internal = (1 << depth(t)) - 1;
  std::vector<double> s(static_cast<std::size_t>(internal)), prob(static_cast<std::size_t>(2 * internal + 1));
  gate_probs(theta_.data(), t, x.data(), s.data());
  node_probs(s.data(), depth(t), prob.data());
  return Eigen::Map<const Vec>(prob.data() + internal, internal + 1);
}

Mat SoftRegressionForest::grad_x(const Vec& x) const {
  if (x.size() != d_x_) throw ValidationError("grad_x: input dimension mismatch");
  Mat J = Mat::Zero(d_z_, d_x_);
  for (int t = 0; t < trees(); ++t) {
    const int D = depth(t);
    const int internal = (1 << D) - 1;
    const int nodes = 2 * internal + 1;
    std::vector<double> s(static_cast<std::size_t>(internal)), prob(static_cast<std::size_t>(nodes));
    gate_probs(theta_.data(), t, x.data(), s.data());
    node_probs(s.data(), D, prob.data());
    // Route sums G_node = sum over ancestors of psi_i w_i.
    Mat G = Mat::Zero(d_x_, nodes);
    for (int j = 0; j < internal; ++j) {
      const Eigen::Map<const Vec> w(theta_.data() + node_offset(t, j), d_x_);
      G.col(2 * j + 1) = G.col(j) + (1.0 - s[static_cast<std::size_t>(j)]) * w;
      G.col(2 * j + 2) = G.col(j) - s[static_cast<std::size_t>(j)] * w;
    }
    for (int l = 0; l <= internal; ++l) {
      const Eigen::Map<const Vec> pi(theta_.data() + leaf_offset(t, l), d_z_);
      J.noalias() += prob[static_cast<std::size_t>(internal + l)] * pi * G.col(internal + l).transpose();
    }
  }
  return J / (trees() * tau_);
}

Mat SoftRegressionForest::hessian_x(const Vec& x, int k) const {
  if (x.size() != d_x_) throw ValidationError("hessian_x: input dimension mismatch");
  if (k < 0 || k >= d_z_) throw ValidationError("hessian_x: output index out of range");
  Mat H = Mat::Zero(d_x_, d_x_);
  for (int t = 0; t < trees(); ++t) {
    const int D = depth(t);
    const int internal = (1 << D) - 1;
    const int nodes = 2 * internal + 1;
    std::vector<double> s(static_cast<std::size_t>(internal)), prob(static_cast<std::size_t>(nodes));
    gate_probs(theta_.data(), t, x.data(), s.data());
    node_probs(s.data(), D, prob.data());
    Mat G = Mat::Zero(d_x_, nodes);
    for (int j = 0; j < internal; ++j) {
      const Eigen::Map<const Vec> w(theta_.data() + node_offset(t, j), d_x_);
      G.col(2 * j + 1) = G.col(j) + (1.0 - s[static_cast<std::size_t>(j)]) * w;
      G.col(2 * j + 2) = G.col(j) - s[static_cast<std::size_t>(j)] * w;
    }
    // c_l = p_l * pi_{l,k}; C_node = sum of c_l over leaves below the node.
    std::vector<double> C(static_cast<std::size_t>(nodes), 0.0);
    for (int l = 0; l <= internal; ++l) {
      const double c = prob[static_cast<std::size_t>(internal + l)] * theta_(static_cast<Eigen::Index>(leaf_offset(t, l)) + k);
      C[static_cast<std::size_t>(internal + l)] = c;
      H.noalias() += c * G.col(internal + l) * G.col(internal + l).transpose();
    }
    for (int j = internal - 1; j >= 0; --j)
      C[static_cast<std::size_t>(j)] = C[static_cast<std::size_t>(2 * j + 1)] + C[static_cast<std::size_t>(2 * j + 2)];
    for (int j = 0; j < internal; ++j) {
      const Eigen::Map<const Vec> w(theta_.data() + node_offset(t, j), d_x_);
      const double sj = s[static_cast<std::size_t>(j)];
      H.noalias() -= sj * (1.0 - sj) * C[static_cast<std::size_t>(j)] * w * w.transpose();
    }
  }
  return H / (trees() * tau_ * tau_);
}

Vec SoftRegressionForest::hard_forward(const Vec& x) const {
  if (x.size() != d_x_) throw ValidationError("hard_forward: input dimension mismatch");
  Vec out = Vec::Zero(d_z_);
  for (int t = 0; t < trees(); ++t) {
    const int internal = (1 << depth(t)) - 1;
    int j = 0;
    while (j < internal) {
      const double* w = theta_.data() + node_offset(t, j);
      double z = w[d_x_];
      for (int q = 0; q < d_x_; ++q) z += w[q] * x(q);
      if (z == 0.0)
        throw RuntimeFailure("hard_forward: input on the decision boundary of tree " + std::to_string(t) +
                             ", node " + std::to_string(j));
      j = z > 0.0 ? 2 * j + 1 : 2 * j + 2;
    }
    out += Eigen::Map<const Vec>(theta_.data() + leaf_offset(t, j - internal), d_z_);
  }
  return out / trees();
}

SoftRegressionForest::LipschitzBounds SoftRegressionForest::lipschitz_bounds() const {
  double w_max = 0.0, pi_max = 0.0;
  int d_max = 0;
  for (int t = 0; t < trees(); ++t) {
    const int internal = (1 << depth(t)) - 1;
    d_max = std::max(d_max, depth(t));
    for (int j = 0; j < internal; ++j)
      w_max = std::max(w_max, Eigen::Map<const Vec>(theta_.data() + node_offset(t, j), d_x_).norm());
    for (int l = 0; l <= internal; ++l)
      pi_max = std::max(pi_max, Eigen::Map<const Vec>(theta_.data() + leaf_offset(t, l), d_z_).norm());
  }
  const double D = d_max;
  return {w_max * pi_max * (D - 1.0) / tau_, w_max * w_max * pi_max * (D - 1.0) * (D - 0.75) / (tau_ * tau_)};
}

}  // namespace csdro
