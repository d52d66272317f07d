#include "csdro/objective.hpp"

#include <cmath>

namespace csdro {

namespace {

Vec outer_weights_uniform(std::size_t n) { return Vec::Constant(static_cast<Eigen::Index>(n), 1.0 / static_cast<double>(n)); }

RowMat draw_kernel_rows(int rows, int dim, const SinkhornConfig& cfg, Rng& rng) {
  RowMat m(rows, dim);
  sample_kernel_into(std::span<double>(m.data(), static_cast<std::size_t>(m.size())), cfg, rng);
  return m;
}

}  // namespace

SaaBatch draw_saa_batch(const GroupedDataset& g, const SinkhornConfig& cfg, Rng& rng, bool full_outer) {
  cfg.validate();
  if (g.groups.empty()) throw ValidationError("draw_saa_batch: empty grouped dataset");
  SaaBatch b;
  if (full_outer) {
    b.weights.resize(static_cast<Eigen::Index>(g.groups.size()));
    for (std::size_t i = 0; i < g.groups.size(); ++i) {
      b.groups.push_back(i);
      b.weights(static_cast<Eigen::Index>(i)) = static_cast<double>(g.groups[i].count) / static_cast<double>(g.rows());
    }
  } else {
    std::uniform_int_distribution<std::size_t> pick(0, g.rows() - 1);
    for (int i = 0; i < cfg.n1; ++i) b.groups.push_back(g.row_group[pick(rng)]);
    b.weights = outer_weights_uniform(b.groups.size());
  }
  b.xi1 = draw_kernel_rows(cfg.n2, g.d_x, cfg, rng);
  b.xi2 = draw_kernel_rows(cfg.n3, g.d_y, cfg, rng);
  return b;
}

SdroBatch draw_sdro_batch(const Dataset& ds, const SinkhornConfig& cfg, Rng& rng, bool full_outer) {
  cfg.validate();
  if (ds.size() == 0) throw ValidationError("draw_sdro_batch: empty dataset");
  SdroBatch b;
  if (full_outer) {
    for (std::size_t i = 0; i < ds.size(); ++i) b.rows.push_back(i);
  } else {
    std::uniform_int_distribution<std::size_t> pick(0, ds.size() - 1);
    for (int i = 0; i < cfg.n1; ++i) b.rows.push_back(pick(rng));
  }
  b.weights = outer_weights_uniform(b.rows.size());
  const int m = cfg.n2 * cfg.n3;
  b.xi_x = draw_kernel_rows(m, ds.d_x(), cfg, rng);
  b.xi_y = draw_kernel_rows(m, ds.d_y(), cfg, rng);
  return b;
}

double clipped_loss(const Loss& loss, const double* raw, const double* y, double B) {
  const double v = loss.value(raw, y);
  if (std::isnan(v)) throw RuntimeFailure("loss evaluation returned NaN");
  return std::min(v, B);
}

Vec t3(const DecisionRule& policy, const Vec& theta, const Loss& loss, const Group& group, const Vec& xi1,
       const Vec& xi2, const SinkhornConfig& cfg) {
  const Vec x = group.x + xi1;
  Vec raw(policy.output_dim());
  policy.forward(theta.data(), x.data(), raw.data());
  const auto n = group.outcomes.rows();
  Vec out(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vec y = group.outcomes.row(i).transpose() + xi2;
    out(i) = std::exp(clipped_loss(loss, raw.data(), y.data(), cfg.B) / cfg.lam_eps());
  }
  return out;
}

double t2(const Vec& v, const Vec& probs) {
  if (v.size() != probs.size()) throw ValidationError("t2: length mismatch");
  if ((v.array() <= 0.0).any()) throw ValidationError("t2: entries must be positive");
  return std::exp(probs.dot(v.array().log().matrix()));
}

namespace {

ValueGrad saa_impl(const DecisionRule& policy, const Vec& theta, const Loss& loss, const GroupedDataset& g,
                   const SaaBatch& batch, const SinkhornConfig& cfg, bool need_grad) {
  cfg.validate();
  const double le = cfg.lam_eps();
  const int dx = g.d_x, dy = g.d_y, dz = policy.output_dim();
  const auto n2 = batch.xi1.rows(), n3 = batch.xi2.rows();
  if (batch.xi1.cols() != dx || batch.xi2.cols() != dy) throw ValidationError("saa: batch dimension mismatch");

  ValueGrad vg;
  if (need_grad) vg.grad = Vec::Zero(theta.size());
  Vec x(dx), y(dy), gpsi(dz);
  RowMat raw(n2, dz), up(n2, dz);
  Vec G(n2), a(n3), wj(n2);
  RowMat ga(n3, dz);

  for (std::size_t i = 0; i < batch.groups.size(); ++i) {
    const Group& grp = g.groups[batch.groups[i]];
    const double wi = batch.weights(static_cast<Eigen::Index>(i));
    for (Eigen::Index j = 0; j < n2; ++j) {
      x = grp.x + batch.xi1.row(j).transpose();
      policy.forward(theta.data(), x.data(), raw.row(j).data());
      G(j) = 0.0;
      if (need_grad) up.row(j).setZero();
      for (Eigen::Index m = 0; m < grp.outcomes.rows(); ++m) {
        for (Eigen::Index k = 0; k < n3; ++k) {
          y = grp.outcomes.row(m).transpose() + batch.xi2.row(k).transpose();
          double psi;
          if (need_grad) {
            psi = loss.value_grad(raw.row(j).data(), y.data(), gpsi.data());
            if (psi > cfg.B) gpsi.setZero();
            ga.row(k) = gpsi.transpose();
          } else {
            psi = loss.value(raw.row(j).data(), y.data());
          }
          if (std::isnan(psi)) throw RuntimeFailure("saa: loss evaluation returned NaN");
          a(k) = std::min(psi, cfg.B) / le;
        }
        const double pm = grp.probs(m);
        G(j) += pm * log_mean_exp(as_span(a));
        if (need_grad) {
          Vec v(n3);
          softmax(as_span(a), as_span(v));
          up.row(j) += pm * (v.transpose() * ga);
        }
      }
    }
    vg.value += wi * le * log_mean_exp(as_span(G));
    if (need_grad) {
      softmax(as_span(G), as_span(wj));
      for (Eigen::Index j = 0; j < n2; ++j) {
        x = grp.x + batch.xi1.row(j).transpose();
        Vec u = (wi * wj(j)) * up.row(j).transpose();
        policy.accumulate_vjp(theta.data(), x.data(), u.data(), vg.grad.data());
      }
    }
  }
  return vg;
}

ValueGrad sdro_impl(const DecisionRule& policy, const Vec& theta, const Loss& loss, const Dataset& ds,
                    const SdroBatch& batch, const SinkhornConfig& cfg, bool need_grad) {
  cfg.validate();
  const double le = cfg.lam_eps();
  const int dz = policy.output_dim();
  const auto M = batch.xi_x.rows();
  if (batch.xi_y.rows() != M || batch.xi_x.cols() != ds.d_x() || batch.xi_y.cols() != ds.d_y())
    throw ValidationError("sdro: batch dimension mismatch");

  ValueGrad vg;
  if (need_grad) vg.grad = Vec::Zero(theta.size());
  Vec x(ds.d_x()), y(ds.d_y()), raw(dz), gpsi(dz), a(M), v(M);
  RowMat ga(M, dz);
  for (std::size_t i = 0; i < batch.rows.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(batch.rows[i]);
    const double wi = batch.weights(static_cast<Eigen::Index>(i));
    for (Eigen::Index k = 0; k < M; ++k) {
      x = ds.X.row(r).transpose() + batch.xi_x.row(k).transpose();
      y = ds.Y.row(r).transpose() + batch.xi_y.row(k).transpose();
      policy.forward(theta.data(), x.data(), raw.data());
      double psi;
      if (need_grad) {
        psi = loss.value_grad(raw.data(), y.data(), gpsi.data());
        if (psi > cfg.B) gpsi.setZero();
        ga.row(k) = gpsi.transpose();
      } else {
        psi = loss.value(raw.data(), y.data());
      }
      if (std::isnan(psi)) throw RuntimeFailure("sdro: loss evaluation returned NaN");
      a(k) = std::min(psi, cfg.B) / le;
    }
    vg.value += wi * le * log_mean_exp(as_span(a));
    if (need_grad) {
      softmax(as_span(a), as_span(v));
      for (Eigen::Index k = 0; k < M; ++k) {
        x = ds.X.row(r).transpose() + batch.xi_x.row(k).transpose();
        Vec u = (wi * v(k)) * ga.row(k).transpose();
        policy.accumulate_vjp(theta.data(), x.data(), u.data(), vg.grad.data());
      }
    }
  }
  return vg;
}

// Per-row losses and (optionally) per-row raw-output gradients.
void row_losses(const DecisionRule& policy, const Vec& theta, const Loss& loss, const Dataset& ds,
                const std::vector<std::size_t>& rows, Vec& psi, RowMat* grads) {
  const int dz = policy.output_dim();
  Vec raw(dz), x(ds.d_x()), y(ds.d_y()), g(dz);
  psi.resize(static_cast<Eigen::Index>(rows.size()));
  if (grads) grads->resize(static_cast<Eigen::Index>(rows.size()), dz);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(rows[i]);
    x = ds.X.row(r).transpose();
    y = ds.Y.row(r).transpose();
    policy.forward(theta.data(), x.data(), raw.data());
    double v;
    if (grads) {
      v = loss.value_grad(raw.data(), y.data(), g.data());
      grads->row(static_cast<Eigen::Index>(i)) = g.transpose();
    } else {
      v = loss.value(raw.data(), y.data());
    }
    if (std::isnan(v)) throw RuntimeFailure("loss evaluation returned NaN");
    psi(static_cast<Eigen::Index>(i)) = v;
  }
}

std::vector<std::size_t> all_rows(const Dataset& ds) {
  std::vector<std::size_t> r(ds.size());
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = i;
  return r;
}

}  // namespace

double saa_objective(const DecisionRule& policy, const Vec& theta, const Loss& loss, const GroupedDataset& g,
                     const SaaBatch& batch, const SinkhornConfig& cfg) {
  return saa_impl(policy, theta, loss, g, batch, cfg, false).value;
}

ValueGrad saa_value_grad(const DecisionRule& policy, const Vec& theta, const Loss& loss, const GroupedDataset& g,
                         const SaaBatch& batch, const SinkhornConfig& cfg) {
  return saa_impl(policy, theta, loss, g, batch, cfg, true);
}

Vec saa_gradient(const DecisionRule& policy, const Vec& theta, const Loss& loss, const GroupedDataset& g,
                 const SaaBatch& batch, const SinkhornConfig& cfg) {
  return saa_impl(policy, theta, loss, g, batch, cfg, true).grad;
}

double sdro_objective(const DecisionRule& policy, const Vec& theta, const Loss& loss, const Dataset& ds,
                      const SdroBatch& batch, const SinkhornConfig& cfg) {
  return sdro_impl(policy, theta, loss, ds, batch, cfg, false).value;
}

ValueGrad sdro_value_grad(const DecisionRule& policy, const Vec& theta, const Loss& loss, const Dataset& ds,
                          const SdroBatch& batch, const SinkhornConfig& cfg) {
  return sdro_impl(policy, theta, loss, ds, batch, cfg, true);
}

Vec sdro_gradient(const DecisionRule& policy, const Vec& theta, const Loss& loss, const Dataset& ds,
                  const SdroBatch& batch, const SinkhornConfig& cfg) {
  return sdro_impl(policy, theta, loss, ds, batch, cfg, true).grad;
}

ValueGrad kl_value_grad(const DecisionRule& policy, const Vec& theta, const Loss& loss, const Dataset& ds,
                        double lambda) {
  if (!(lambda > 0.0)) throw ValidationError("kl: lambda must be > 0");
  const auto rows = all_rows(ds);
  Vec psi;
  RowMat grads;
  row_losses(policy, theta, loss, ds, rows, psi, &grads);
  const Vec a = psi / lambda;
  ValueGrad vg;
  vg.value = lambda * log_mean_exp(as_span(a));
  Vec w(a.size());
  softmax(as_span(a), as_span(w));
  vg.grad = Vec::Zero(theta.size());
  Vec x(ds.d_x());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    x = ds.X.row(static_cast<Eigen::Index>(rows[i])).transpose();
    Vec u = w(static_cast<Eigen::Index>(i)) * grads.row(static_cast<Eigen::Index>(i)).transpose();
    policy.accumulate_vjp(theta.data(), x.data(), u.data(), vg.grad.data());
  }
  return vg;
}

double kl_objective(const DecisionRule& policy, const Vec& theta, const Loss& loss, const Dataset& ds, double lambda) {
  if (!(lambda > 0.0)) throw ValidationError("kl: lambda must be > 0");
  Vec psi;
  row_losses(policy, theta, loss, ds, all_rows(ds), psi, nullptr);
  const Vec a = psi / lambda;
  return lambda * log_mean_exp(as_span(a));
}

Vec kl_gradient(const DecisionRule& policy, const Vec& theta, const Loss& loss, const Dataset& ds, double lambda) {
  return kl_value_grad(policy, theta, loss, ds, lambda).grad;
}

ValueGrad erm_value_grad(const DecisionRule& policy, const Vec& theta, const Loss& loss, const Dataset& ds,
                         const std::vector<std::size_t>* rows_in) {
  if (ds.size() == 0) throw ValidationError("erm: empty dataset");
  const auto rows = rows_in ? *rows_in : all_rows(ds);
  Vec psi;
  RowMat grads;
  row_losses(policy, theta, loss, ds, rows, psi, &grads);
  ValueGrad vg;
  vg.value = psi.mean();
  vg.grad = Vec::Zero(theta.size());
  const double inv_n = 1.0 / static_cast<double>(rows.size());
  Vec x(ds.d_x());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    x = ds.X.row(static_cast<Eigen::Index>(rows[i])).transpose();
    Vec u = inv_n * grads.row(static_cast<Eigen::Index>(i)).transpose();
    policy.accumulate_vjp(theta.data(), x.data(), u.data(), vg.grad.data());
  }
  return vg;
}

double erm_objective(const DecisionRule& policy, const Vec& theta, const Loss& loss, const Dataset& ds) {
  if (ds.size() == 0) throw ValidationError("erm: empty dataset");
  Vec psi;
  row_losses(policy, theta, loss, ds, all_rows(ds), psi, nullptr);
  return psi.mean();
}

Vec erm_gradient(const DecisionRule& policy, const Vec& theta, const Loss& loss, const Dataset& ds) {
  return erm_value_grad(policy, theta, loss, ds).grad;
}

double mean_loss(const DecisionRule& policy, const Loss& loss, const Dataset& ds) {
  return erm_objective(policy, policy.params(), loss, ds);
}

}  // namespace csdro
