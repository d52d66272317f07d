#pragma once

#include "csdro/common.hpp"

#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

namespace csdro {

enum class PolicyKind { srf, nn2 };

PolicyKind parse_policy_kind(const std::string& s);
std::string to_string(PolicyKind k);

// Parametric decision rule x -> f_theta(x). The parameter vector is stored
// flat; the pointer-taking overloads evaluate at an arbitrary theta of the same
// layout so optimizers can hold several iterates without copying the rule.
class DecisionRule {
 public:
  virtual ~DecisionRule() = default;

  virtual PolicyKind kind() const = 0;
  virtual int input_dim() const = 0;
  virtual int output_dim() const = 0;
  virtual std::unique_ptr<DecisionRule> clone() const = 0;

  virtual void forward(const double* theta, const double* x, double* out) const = 0;
  // grad += upstream' * d f / d theta.
  virtual void accumulate_vjp(const double* theta, const double* x, const double* upstream, double* grad) const = 0;
  // Projection applied after optimizer steps when decisions must be nonnegative.
  virtual void clip_nonnegative(double* /*theta*/) const {}

  std::size_t param_count() const { return static_cast<std::size_t>(theta_.size()); }
  const Vec& params() const { return theta_; }
  Vec& params() { return theta_; }
  void set_params(const Vec& theta);

  Vec forward(const Vec& x) const;
  Vec vjp_theta(const Vec& x, const Vec& upstream) const;

 protected:
  Vec theta_;
};

// Soft regression forest. Tree t has 2^D-1 internal nodes in heap order
// (children of j are 2j+1 left and 2j+2 right) followed by 2^D leaves.
// Block layout per tree: node j -> (w_j[d_x], b_j), then leaf l -> pi_l[d_z].
class SoftRegressionForest : public DecisionRule {
 public:
  SoftRegressionForest(int d_x, int d_z, std::vector<int> depths, double tau = 1.0);

  PolicyKind kind() const override { return PolicyKind::srf; }
  int input_dim() const override { return d_x_; }
  int output_dim() const override { return d_z_; }
  std::unique_ptr<DecisionRule> clone() const override;

  void forward(const double* theta, const double* x, double* out) const override;
  void accumulate_vjp(const double* theta, const double* x, const double* upstream, double* grad) const override;
  void clip_nonnegative(double* theta) const override;
  using DecisionRule::forward;

  int trees() const { return static_cast<int>(depths_.size()); }
  int depth(int t) const { return depths_[static_cast<std::size_t>(t)]; }
  const std::vector<int>& depths() const { return depths_; }
  double tau() const { return tau_; }
  void set_tau(double tau);

  // Offsets into theta.
  std::size_t node_offset(int t, int j) const;
  std::size_t leaf_offset(int t, int l) const;

  Vec route_probs(const Vec& x, int t) const;
  // d_z x d_x Jacobian.
  Mat grad_x(const Vec& x) const;
  // d_x x d_x Hessian of output k.
  Mat hessian_x(const Vec& x, int k) const;
  // tau -> 0 limit. Throws RuntimeFailure when x lies on a routed decision boundary.
  Vec hard_forward(const Vec& x) const;

  struct LipschitzBounds {
    double L;
    double S;
  };
  LipschitzBounds lipschitz_bounds() const;

  static std::size_t count_params(int d_x, int d_z, const std::vector<int>& depths);

 private:
  void gate_probs(const double* theta, int t, const double* x, double* s) const;

  int d_x_;
  int d_z_;
  std::vector<int> depths_;
  std::vector<std::size_t> offsets_;
  double tau_;
};

// Two-layer ReLU network, one hidden layer of width m per output:
// f_k(x) = (1/m) sum_i a_i^k relu(w_i^k' x + b_i^k).
// Block layout per output k and unit i: (a, b, w[d_x]).
class TwoLayerNet : public DecisionRule {
 public:
  TwoLayerNet(int d_x, int d_z, int hidden);

  PolicyKind kind() const override { return PolicyKind::nn2; }
  int input_dim() const override { return d_x_; }
  int output_dim() const override { return d_z_; }
  std::unique_ptr<DecisionRule> clone() const override;

  void forward(const double* theta, const double* x, double* out) const override;
  void accumulate_vjp(const double* theta, const double* x, const double* upstream, double* grad) const override;
  using DecisionRule::forward;

  int hidden() const { return m_; }
  std::size_t unit_offset(int k, int i) const;

 private:
  int d_x_;
  int d_z_;
  int m_;
};

struct PolicyHyper {
  int trees = 20;
  int depth = 0;   // 0: ceil(log2 d_x) + 1
  int hidden = 0;  // 0: 64 * d_x
  double tau = 1.0;
  Vec leaf_init;   // initial leaf decision, length d_z; zero when empty
};

int default_srf_depth(int d_x);

std::unique_ptr<DecisionRule> init_policy(PolicyKind kind, int d_x, int d_z, Rng& rng, const PolicyHyper& hyper);

void save_policy(const DecisionRule& rule, std::ostream& out);
void save_policy(const DecisionRule& rule, const std::string& path);
std::unique_ptr<DecisionRule> load_policy(std::istream& in);
std::unique_ptr<DecisionRule> load_policy(const std::string& path);

}  // namespace csdro
