#include "csdro/optimizer.hpp"

#include <chrono>
#include <cmath>
#include <string>

namespace csdro {

namespace {

constexpr double kTrackerFloor = 1e-300;
constexpr double kScaleBand = 300.0;
// Direction coefficients above this only push theta onto the box faces; the
// cap keeps inf * 0 out of the VJP.
constexpr double kLogCoefCap = 460.0;

double capped_exp(double log_v) { return std::exp(std::min(log_v, kLogCoefCap)); }

void check_finite(const ScscState& s, std::size_t sample) {
  bool ok = s.theta.allFinite() && std::isfinite(s.y1);
  for (const auto& [n, v] : s.y2) ok = ok && v.allFinite();
  if (!ok)
    throw RuntimeFailure("scsc: non-finite update at iteration " + std::to_string(s.k) + ", sample " +
                         std::to_string(sample));
}

// Keep max exponent - log_scale inside the band by rescaling all trackers.
void rebase(ScscState& s, double amax) {
  const double rel = amax - s.log_scale;
  if (rel <= kScaleBand && rel >= -kScaleBand) return;
  const double factor = std::exp(-rel);
  s.log_scale = amax;
  s.y1 = std::max(s.y1 * factor, kTrackerFloor);
  for (auto& [n, v] : s.y2) v = (v * factor).cwiseMax(kTrackerFloor);
}

double elapsed_ms(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

void TrainConfig::validate() const {
  if (K < 1) throw ValidationError("train: K must be >= 1");
  if (!(radius > 0.0)) throw ValidationError("train: radius must be > 0");
  if (!(c_alpha > 0.0) || !(c_beta > 0.0)) throw ValidationError("train: c_alpha and c_beta must be > 0");
  if (eval_every < 1) throw ValidationError("train: eval_every must be >= 1");
  if (!(rate > 0.0)) throw ValidationError("train: rate must be > 0");
  if (batch < 0) throw ValidationError("train: batch must be >= 0");
}

StepSizes step_schedule(long k, long K, double c_alpha, double c_beta) {
  if (K < 1 || k < 0 || k >= K) throw ValidationError("step_schedule: need 0 <= k < K");
  const double r = std::sqrt(static_cast<double>(K));
  return {c_alpha / r, std::min(1.0, c_beta / r)};
}

void project_params(const DecisionRule& policy, Vec& theta, const TrainConfig& tcfg) {
  theta = theta.cwiseMax(-tcfg.radius).cwiseMin(tcfg.radius);
  if (tcfg.clip_leaves) policy.clip_nonnegative(theta.data());
}

ScscState scsc_init(const Vec& theta0, const TrainConfig& tcfg) {
  tcfg.validate();
  ScscState s;
  s.theta = theta0;
  s.theta_prev = theta0;
  const auto st = step_schedule(0, tcfg.K, tcfg.c_alpha, tcfg.c_beta);
  s.alpha = st.alpha;
  s.beta = st.beta;
  s.rng = make_rng(tcfg.seed, 3);
  return s;
}

StepInfo scsc_step_with(ScscState& s, std::size_t group, const Vec& xi1, const Vec& xi2, const GroupedDataset& g,
                        const DecisionRule& policy, const Loss& loss, const SinkhornConfig& scfg,
                        const TrainConfig& tcfg) {
  const Group& grp = g.groups.at(group);
  const auto n = grp.outcomes.rows();
  const int dz = policy.output_dim();
  const double le = scfg.lam_eps();

  const Vec x = grp.x + xi1;
  Vec raw_now(dz), raw_prev(dz), gp(dz);
  policy.forward(s.theta.data(), x.data(), raw_now.data());
  policy.forward(s.theta_prev.data(), x.data(), raw_prev.data());

  Vec a_now(n), a_prev(n);
  RowMat grad_now(n, dz);
  for (Eigen::Index m = 0; m < n; ++m) {
    const Vec y = grp.outcomes.row(m).transpose() + xi2;
    const double psi = loss.value_grad(raw_now.data(), y.data(), gp.data());
    if (std::isnan(psi)) throw RuntimeFailure("scsc: NaN loss at iteration " + std::to_string(s.k));
    if (psi > scfg.B) gp.setZero();
    grad_now.row(m) = gp.transpose();
    a_now(m) = std::min(psi, scfg.B) / le;
    a_prev(m) = clipped_loss(loss, raw_prev.data(), y.data(), scfg.B) / le;
  }
  rebase(s, std::max(a_now.maxCoeff(), a_prev.maxCoeff()));
  const Vec t3_now = (a_now.array() - s.log_scale).exp().matrix();
  const Vec t3_prev = (a_prev.array() - s.log_scale).exp().matrix();

  auto it = s.y2.find(static_cast<std::size_t>(n));
  if (it == s.y2.end()) it = s.y2.emplace(static_cast<std::size_t>(n), t3_now.cwiseMax(kTrackerFloor)).first;
  Vec& y2 = it->second;
  const double t2_old = t2(y2, grp.probs);
  if (!s.y1_ready) {
    s.y1 = t2_old;
    s.y1_ready = true;
  }

  // Chain rule with the old trackers: (1/y1) * dt2(y2) * dt3(theta).
  Vec u = Vec::Zero(dz);
  for (Eigen::Index m = 0; m < n; ++m) {
    const double coef =
        capped_exp(std::log(t2_old) + std::log(grp.probs(m)) - std::log(y2(m)) - std::log(s.y1) + a_now(m) - s.log_scale) / le;
    u += coef * grad_now.row(m).transpose();
  }
  Vec d = Vec::Zero(s.theta.size());
  policy.accumulate_vjp(s.theta.data(), x.data(), u.data(), d.data());

  const double b = s.beta;
  y2 = ((1.0 - b) * (y2 + t3_now - t3_prev) + b * t3_now).cwiseMax(kTrackerFloor);
  const double t2_new = t2(y2, grp.probs);
  s.y1 = std::max((1.0 - b) * (s.y1 + t2_new - t2_old) + b * t2_new, kTrackerFloor);

  s.theta_prev = s.theta;
  s.theta -= s.alpha * d;
  project_params(policy, s.theta, tcfg);
  ++s.k;
  check_finite(s, group);
  return {group, d.norm()};
}

StepInfo scsc_step(ScscState& s, const GroupedDataset& g, const DecisionRule& policy, const Loss& loss,
                   const SinkhornConfig& scfg, const TrainConfig& tcfg) {
  std::uniform_int_distribution<std::size_t> pick(0, g.rows() - 1);
  const std::size_t group = g.row_group[pick(s.rng)];
  const Vec xi1 = sample_kernel(g.d_x, scfg, s.rng);
  const Vec xi2 = sample_kernel(g.d_y, scfg, s.rng);
  return scsc_step_with(s, group, xi1, xi2, g, policy, loss, scfg, tcfg);
}

TrainResult train_causal_sdro(const GroupedDataset& g, DecisionRule& policy, const Loss& loss,
                              const SinkhornConfig& scfg, const TrainConfig& tcfg) {
  scfg.validate();
  tcfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  Rng eval_rng = make_rng(tcfg.seed, 7);
  const SaaBatch eval = draw_saa_batch(g, scfg, eval_rng);

  Vec theta0 = policy.params();
  project_params(policy, theta0, tcfg);
  ScscState s = scsc_init(theta0, tcfg);
  TrainResult res;
  double norm_sum = 0.0;
  long norm_count = 0;
  for (long k = 0; k < tcfg.K; ++k) {
    norm_sum += scsc_step(s, g, policy, loss, scfg, tcfg).direction_norm;
    ++norm_count;
    if ((k + 1) % tcfg.eval_every == 0 || k + 1 == tcfg.K) {
      res.trace.push_back({k + 1, saa_objective(policy, s.theta, loss, g, eval, scfg), norm_sum / norm_count,
                           tcfg.record_wallclock ? elapsed_ms(t0) : 0.0});
      norm_sum = 0.0;
      norm_count = 0;
    }
  }
  policy.set_params(s.theta);
  return res;
}

TrainResult train_sdro(const Dataset& ds, DecisionRule& policy, const Loss& loss, const SinkhornConfig& scfg,
                       const TrainConfig& tcfg) {
  scfg.validate();
  tcfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  Rng eval_rng = make_rng(tcfg.seed, 7);
  const SdroBatch eval = draw_sdro_batch(ds, scfg, eval_rng);

  Vec theta0 = policy.params();
  project_params(policy, theta0, tcfg);
  ScscState s = scsc_init(theta0, tcfg);
  const int dz = policy.output_dim();
  const double le = scfg.lam_eps();
  std::uniform_int_distribution<std::size_t> pick(0, ds.size() - 1);
  Vec raw_now(dz), raw_prev(dz), gp(dz);

  TrainResult res;
  double norm_sum = 0.0;
  long norm_count = 0;
  for (long k = 0; k < tcfg.K; ++k) {
    const auto r = static_cast<Eigen::Index>(pick(s.rng));
    const Vec x = ds.X.row(r).transpose() + sample_kernel(ds.d_x(), scfg, s.rng);
    const Vec y = ds.Y.row(r).transpose() + sample_kernel(ds.d_y(), scfg, s.rng);
    policy.forward(s.theta.data(), x.data(), raw_now.data());
    policy.forward(s.theta_prev.data(), x.data(), raw_prev.data());
    const double psi = loss.value_grad(raw_now.data(), y.data(), gp.data());
    if (std::isnan(psi)) throw RuntimeFailure("sdro: NaN loss at iteration " + std::to_string(s.k));
    if (psi > scfg.B) gp.setZero();
    const double a_now = std::min(psi, scfg.B) / le;
    const double a_prev = clipped_loss(loss, raw_prev.data(), y.data(), scfg.B) / le;
    rebase(s, std::max(a_now, a_prev));
    const double g_now = std::exp(a_now - s.log_scale);
    const double g_prev = std::exp(a_prev - s.log_scale);
    if (!s.y1_ready) {
      s.y1 = std::max(g_now, kTrackerFloor);
      s.y1_ready = true;
    }
    const Vec u = (capped_exp(a_now - s.log_scale - std::log(s.y1)) / le) * gp;
    Vec d = Vec::Zero(s.theta.size());
    policy.accumulate_vjp(s.theta.data(), x.data(), u.data(), d.data());
    s.y1 = std::max((1.0 - s.beta) * (s.y1 + g_now - g_prev) + s.beta * g_now, kTrackerFloor);
    s.theta_prev = s.theta;
    s.theta -= s.alpha * d;
    project_params(policy, s.theta, tcfg);
    ++s.k;
    check_finite(s, static_cast<std::size_t>(r));

    norm_sum += d.norm();
    ++norm_count;
    if ((k + 1) % tcfg.eval_every == 0 || k + 1 == tcfg.K) {
      res.trace.push_back({k + 1, sdro_objective(policy, s.theta, loss, ds, eval, scfg), norm_sum / norm_count,
                           tcfg.record_wallclock ? elapsed_ms(t0) : 0.0});
      norm_sum = 0.0;
      norm_count = 0;
    }
  }
  policy.set_params(s.theta);
  return res;
}

TrainResult train_gd(GdObjective objective, DecisionRule& policy, const Loss& loss, const Dataset& ds,
                     const TrainConfig& tcfg, double kl_lambda) {
  tcfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  Vec theta = policy.params();
  project_params(policy, theta, tcfg);
  Rng rng = make_rng(tcfg.seed, 5);
  std::uniform_int_distribution<std::size_t> pick(0, ds.size() - 1);
  const bool minibatch = objective == GdObjective::erm && tcfg.batch > 0 && static_cast<std::size_t>(tcfg.batch) < ds.size();
  std::vector<std::size_t> rows(minibatch ? static_cast<std::size_t>(tcfg.batch) : 0);

  TrainResult res;
  double norm_sum = 0.0;
  long norm_count = 0;
  for (long k = 0; k < tcfg.K; ++k) {
    ValueGrad vg;
    if (objective == GdObjective::kl) {
      vg = kl_value_grad(policy, theta, loss, ds, kl_lambda);
    } else if (minibatch) {
      for (auto& r : rows) r = pick(rng);
      vg = erm_value_grad(policy, theta, loss, ds, &rows);
    } else {
      vg = erm_value_grad(policy, theta, loss, ds);
    }
    theta -= tcfg.rate * vg.grad;
    project_params(policy, theta, tcfg);
    if (!theta.allFinite()) throw RuntimeFailure("gd: non-finite parameters at step " + std::to_string(k));
    norm_sum += vg.grad.norm();
    ++norm_count;
    if ((k + 1) % tcfg.eval_every == 0 || k + 1 == tcfg.K) {
      const double obj = objective == GdObjective::kl ? kl_objective(policy, theta, loss, ds, kl_lambda)
                                                      : erm_objective(policy, theta, loss, ds);
      res.trace.push_back({k + 1, obj, norm_sum / norm_count, tcfg.record_wallclock ? elapsed_ms(t0) : 0.0});
      norm_sum = 0.0;
      norm_count = 0;
    }
  }
  policy.set_params(theta);
  return res;
}

}  // namespace csdro
