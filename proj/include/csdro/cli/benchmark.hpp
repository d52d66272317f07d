#pragma once

#include "csdro/data.hpp"
#include "csdro/kernels.hpp"
#include "csdro/losses.hpp"
#include "csdro/optimizer.hpp"
#include "csdro/policies.hpp"

#include <memory>
#include <string>
#include <vector>

namespace csdro::cli {

struct AppSetup {
  Application app = Application::newsvendor;
  NewsvendorCosts newsvendor{Vec::Constant(1, 0.6), Vec::Constant(1, 1.0)};
  InventoryCosts inventory = default_inventory_costs();
  PortfolioParams portfolio;
};

std::unique_ptr<Loss> make_loss(const AppSetup& setup, int d_y);

// Leaf initialization: componentwise outcome mean, or (mean equal-weight return, 0, ..., 0) for portfolios.
Vec initial_decision(Application app, const Dataset& train);

struct FitSettings {
  Application app = Application::newsvendor;
  PolicyKind policy = PolicyKind::srf;
  PolicyHyper hyper;
  SinkhornConfig sink;
  TrainConfig scsc;  // SCSC iterations and step multipliers
  TrainConfig gd;    // GD steps and rate for erm and kl-dro
};

// Fresh policy initialized from `seed`, trained by the named model
// (erm, causal-sdro, sdro, kl-dro). kl-dro uses sink.lambda as its penalty.
std::unique_ptr<DecisionRule> fit_model(const std::string& model, const FitSettings& fs, const Dataset& train,
                                        const Loss& loss, std::uint64_t seed, TrainResult* trace = nullptr);

void check_model_name(const std::string& model);

struct BenchmarkSpec {
  AppSetup setup;
  FitSettings fit;
  std::vector<std::string> models{"causal-sdro"};
  std::vector<long> Ns{200};
  std::vector<long> dxs{5};
  std::vector<long> ps{2};
  std::vector<double> lambdas{1.0};
  std::vector<double> epss{0.1};
  std::vector<long> seeds{1};
  long test_size = 10000;
  double c_amp = 1.7;
  // Pick (lambda, eps) per model on a validation split of the training data,
  // then refit on the full training set.
  bool holdout_select = false;
  double holdout_frac = 0.25;
};

struct BenchmarkRow {
  long N;
  long d_x;
  long p;
  double lambda;
  double eps;
  std::string model;
  std::string policy;
  long seed;
  double test_loss;
  double prescriptiveness;
  double train_ms;
  double oracle_loss;
};

// Units (N, d_x, seed) run on up to `workers` threads; rows come back in a fixed order.
// When cell_dir is non-empty each unit's rows are also written there atomically.
// A failing unit is recorded in `failures` and the run continues.
std::vector<BenchmarkRow> run_benchmark(const BenchmarkSpec& spec, int workers, const std::string& cell_dir = "",
                                        std::vector<std::string>* failures = nullptr, const std::string& config_hash = "");

}  // namespace csdro::cli
