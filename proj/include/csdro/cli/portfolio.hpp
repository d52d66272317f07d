#pragma once

#include "csdro/cli/benchmark.hpp"

#include <string>
#include <vector>

namespace csdro::cli {

struct RollingSpec {
  long window = 504;     // trailing training rows
  long hold = 60;        // rows each decision is held
  long assets = 0;       // assets sampled per rebalance; 0 keeps all
  long min_window = 60;  // shorter training windows are skipped
  std::vector<std::string> models{"ew", "mv", "cmv", "causal-sdro", "pt"};
  std::uint64_t seed = 1;
  PortfolioParams params;
  FitSettings fit;
};

struct WindowMetrics {
  long window;
  long start_row;
  std::string model;
  double mean;
  double stddev;
  double sharpe;
  double cvar;
  double loss;
};

// sqrt(252) * mean / sample std. Throws RuntimeFailure when the std is zero.
double sharpe_ratio(const std::vector<double>& returns);

// Mean of the worst ceil(0.05 n) losses, losses being negated returns.
double cvar_loss(const std::vector<double>& returns, double level = 0.05);

// Rebalances every `hold` rows starting at row min_window, training on the
// preceding min(window, t) rows. Skipped windows are reported in `warnings`.
std::vector<WindowMetrics> run_portfolio_rolling(const Dataset& ds, const RollingSpec& spec,
                                                 std::vector<std::string>* warnings = nullptr);

}  // namespace csdro::cli
