#include "csdro/interpret.hpp"

#include <algorithm>
#include <numeric>

namespace csdro {

namespace {

// Scores at rounding level relative to the decisions count as zero.
void normalize(ImportanceReport& r, double decision_scale) {
  const double s = r.raw.sum();
  r.degenerate = !(s > 1e-12 * decision_scale);
  r.normalized = r.degenerate ? Vec::Zero(r.raw.size()) : Vec(r.raw / s);
}

}  // namespace

ImportanceReport global_importance(const SoftRegressionForest& forest, const Dataset& ds) {
  if (ds.size() == 0) throw ValidationError("global_importance: empty dataset");
  ImportanceReport r;
  r.method = "gradient";
  r.raw = Vec::Zero(forest.input_dim());
  for (std::size_t i = 0; i < ds.size(); ++i)
    r.raw += forest.grad_x(ds.X.row(static_cast<Eigen::Index>(i)).transpose()).cwiseAbs().colwise().sum().transpose();
  r.raw /= static_cast<double>(ds.size());
  double scale = 0.0;
  for (std::size_t i = 0; i < ds.size(); ++i)
    scale += forest.forward(Vec(ds.X.row(static_cast<Eigen::Index>(i)).transpose())).lpNorm<1>();
  normalize(r, scale / static_cast<double>(ds.size()));
  return r;
}

ImportanceReport permutation_importance(const DecisionRule& rule, const Dataset& ds, Rng& rng) {
  if (ds.size() < 2) throw ValidationError("permutation_importance: need at least 2 rows");
  const auto n = static_cast<Eigen::Index>(ds.size());
  RowMat base(n, rule.output_dim());
  for (Eigen::Index i = 0; i < n; ++i) base.row(i) = rule.forward(Vec(ds.X.row(i).transpose())).transpose();

  ImportanceReport r;
  r.method = "permutation";
  r.raw = Vec::Zero(ds.d_x());
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
  for (int j = 0; j < ds.d_x(); ++j) {
    std::iota(perm.begin(), perm.end(), Eigen::Index{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      Vec x = ds.X.row(i).transpose();
      x(j) = ds.X(perm[static_cast<std::size_t>(i)], j);
      total += (rule.forward(x) - base.row(i).transpose()).lpNorm<1>();
    }
    r.raw(j) = total / static_cast<double>(n);
  }
  normalize(r, base.cwiseAbs().sum() / static_cast<double>(n));
  return r;
}

Vec EigAttribution::residual() const { return phi.colwise().sum().transpose() - (prescription - baseline); }

EigAttribution eig(const SoftRegressionForest& forest, const Vec& x, const Dataset& ds, int M) {
  if (ds.size() == 0) throw ValidationError("eig: empty dataset");
  if (M < 1) throw ValidationError("eig: M must be >= 1");
  if (x.size() != forest.input_dim()) throw ValidationError("eig: input dimension mismatch");
  const int dz = forest.output_dim();
  EigAttribution out;
  out.phi = Mat::Zero(forest.input_dim(), dz);
  out.baseline = Vec::Zero(dz);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const Vec xi = ds.X.row(static_cast<Eigen::Index>(i)).transpose();
    out.baseline += forest.forward(xi);
    const Vec delta = x - xi;
    Mat avg = Mat::Zero(dz, forest.input_dim());
    for (int m = 0; m < M; ++m) avg += forest.grad_x(xi + ((m + 0.5) / M) * delta);
    avg /= M;
    out.phi += (avg.transpose().array().colwise() * delta.array()).matrix();
  }
  out.phi /= static_cast<double>(ds.size());
  out.baseline /= static_cast<double>(ds.size());
  out.prescription = forest.forward(x);
  return out;
}

std::vector<std::vector<RouteEntry>> trace_routes(const SoftRegressionForest& forest, const Vec& x, int top_k) {
  if (top_k < 1) throw ValidationError("trace_routes: top_k must be >= 1");
  std::vector<std::vector<RouteEntry>> out;
  for (int t = 0; t < forest.trees(); ++t) {
    const int D = forest.depth(t);
    const int internal = (1 << D) - 1;
    const Vec probs = forest.route_probs(x, t);
    std::vector<int> order(static_cast<std::size_t>(internal + 1));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return probs(a) > probs(b); });
    order.resize(std::min<std::size_t>(order.size(), static_cast<std::size_t>(top_k)));

    std::vector<RouteEntry> entries;
    for (int l : order) {
      RouteEntry e{l, probs(l), {}};
      // Walk root -> leaf using the heap index of the leaf.
      std::vector<int> chain;
      for (int node = internal + l; node > 0; node = (node - 1) / 2) chain.push_back(node);
      int parent = 0;
      for (auto it = chain.rbegin(); it != chain.rend(); ++it) {
        const bool left = *it == 2 * parent + 1;
        const double* w = forest.params().data() + forest.node_offset(t, parent);
        double z = w[forest.input_dim()];
        for (int q = 0; q < forest.input_dim(); ++q) z += w[q] * x(q);
        const double s = sigmoid(z / forest.tau());
        e.path.push_back({parent, left, left ? s : 1.0 - s});
        parent = *it;
      }
      entries.push_back(std::move(e));
    }
    out.push_back(std::move(entries));
  }
  return out;
}

}  // namespace csdro
