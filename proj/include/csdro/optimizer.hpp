#pragma once

#include "csdro/common.hpp"
#include "csdro/data.hpp"
#include "csdro/kernels.hpp"
#include "csdro/losses.hpp"
#include "csdro/objective.hpp"
#include "csdro/policies.hpp"

#include <map>
#include <vector>

namespace csdro {

struct TrainConfig {
  long K = 2000;            // SCSC iterations or GD steps
  double c_alpha = 1.0;
  double c_beta = 1.0;
  double radius = 1e3;      // box projection [-R, R]
  bool clip_leaves = false; // keep leaf decisions >= 0
  long eval_every = 100;
  std::uint64_t seed = 0;
  double rate = 0.05;       // GD step size
  long batch = 0;           // ERM minibatch size, 0 for full batch
  bool record_wallclock = false;

  void validate() const;
};

struct StepSizes {
  double alpha;
  double beta;
};

// alpha = c_alpha / sqrt(K), beta = min(1, c_beta / sqrt(K)); constant in k.
StepSizes step_schedule(long k, long K, double c_alpha, double c_beta);

// Iterate of the corrected compositional method. Trackers are stored relative
// to exp(log_scale); rescaling all of them together leaves every update
// unchanged, which keeps exp(Psi / (lambda eps)) representable.
struct ScscState {
  Vec theta;
  Vec theta_prev;
  double y1 = 1.0;
  bool y1_ready = false;
  std::map<std::size_t, Vec> y2;  // keyed by group size
  long k = 0;
  double alpha = 0.0;
  double beta = 1.0;
  double log_scale = 0.0;
  Rng rng;
};

ScscState scsc_init(const Vec& theta0, const TrainConfig& tcfg);

struct StepInfo {
  std::size_t group = 0;
  double direction_norm = 0.0;
};

// One iteration with draws taken from state.rng.
StepInfo scsc_step(ScscState& state, const GroupedDataset& g, const DecisionRule& policy, const Loss& loss,
                   const SinkhornConfig& scfg, const TrainConfig& tcfg);
// Same with caller-supplied draws.
StepInfo scsc_step_with(ScscState& state, std::size_t group, const Vec& xi1, const Vec& xi2, const GroupedDataset& g,
                        const DecisionRule& policy, const Loss& loss, const SinkhornConfig& scfg,
                        const TrainConfig& tcfg);

struct TraceRow {
  long iter;
  double objective;
  double grad_norm_est;
  double wallclock_ms;
};

struct TrainResult {
  std::vector<TraceRow> trace;
};

// Runs K iterations on policy.params() in place. The trace evaluates the SAA
// objective on a fixed batch after every eval_every iterations and at the end.
TrainResult train_causal_sdro(const GroupedDataset& g, DecisionRule& policy, const Loss& loss,
                              const SinkhornConfig& scfg, const TrainConfig& tcfg);

// Two-level variant for the non-causal Sinkhorn objective with joint perturbations.
TrainResult train_sdro(const Dataset& ds, DecisionRule& policy, const Loss& loss, const SinkhornConfig& scfg,
                       const TrainConfig& tcfg);

enum class GdObjective { erm, kl };

// Fixed-rate (sub)gradient descent. K steps of size tcfg.rate.
TrainResult train_gd(GdObjective objective, DecisionRule& policy, const Loss& loss, const Dataset& ds,
                     const TrainConfig& tcfg, double kl_lambda = 1.0);

// Box projection plus optional leaf clipping.
void project_params(const DecisionRule& policy, Vec& theta, const TrainConfig& tcfg);

}  // namespace csdro
