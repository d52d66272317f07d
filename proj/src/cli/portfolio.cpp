#include "csdro/cli/portfolio.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace csdro::cli {

double sharpe_ratio(const std::vector<double>& returns) {
  const auto n = static_cast<double>(returns.size());
  if (returns.size() < 2) throw RuntimeFailure("sharpe ratio needs at least two returns");
  const double mean = std::accumulate(returns.begin(), returns.end(), 0.0) / n;
  double ss = 0.0;
  for (double r : returns) ss += (r - mean) * (r - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  if (sd == 0.0) throw RuntimeFailure("sharpe ratio undefined: zero standard deviation");
  return std::sqrt(252.0) * mean / sd;
}

double cvar_loss(const std::vector<double>& returns, double level) {
  if (returns.empty()) throw ValidationError("cvar of an empty return series");
  std::vector<double> losses(returns.size());
  std::transform(returns.begin(), returns.end(), losses.begin(), [](double r) { return -r; });
  std::sort(losses.begin(), losses.end(), std::greater<>());
  const auto tail = static_cast<std::size_t>(std::ceil(level * static_cast<double>(losses.size()) - 1e-12));
  const std::size_t k = std::max<std::size_t>(1, tail);
  return std::accumulate(losses.begin(), losses.begin() + static_cast<std::ptrdiff_t>(k), 0.0) / static_cast<double>(k);
}

namespace {

Dataset select_assets(const Dataset& ds, const std::vector<int>& cols) {
  Dataset out;
  out.X = ds.X;
  out.Y.resize(ds.Y.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) out.Y.col(static_cast<Eigen::Index>(j)) = ds.Y.col(cols[j]);
  return out;
}

Dataset row_range(const Dataset& ds, long begin, long end) {
  Dataset out;
  out.X = ds.X.middleRows(begin, end - begin);
  out.Y = ds.Y.middleRows(begin, end - begin);
  return out;
}

Vec weights_of(const Vec& z) { return z.tail(z.size() - 1); }

}  // namespace

std::vector<WindowMetrics> run_portfolio_rolling(const Dataset& ds, const RollingSpec& spec,
                                                 std::vector<std::string>* warnings) {
  ds.validate();
  if (spec.window < 1 || spec.hold < 1 || spec.min_window < 1) throw ValidationError("portfolio: window, hold and min_window must be positive");
  if (spec.assets < 0 || spec.assets > ds.d_y()) throw ValidationError("portfolio: assets must lie in [0, d_y]");
  for (const auto& m : spec.models)
    if (m != "ew" && m != "mv" && m != "pt" && m != "cmv") check_model_name(m);

  const long n = static_cast<long>(ds.size());
  const int d = spec.assets == 0 ? ds.d_y() : static_cast<int>(spec.assets);
  FitSettings fs = spec.fit;
  fs.app = Application::portfolio;
  AppSetup setup;
  setup.app = Application::portfolio;
  setup.portfolio = spec.params;

  std::vector<WindowMetrics> out;
  long window = 0;
  for (long t = spec.min_window; t < n; t += spec.hold, ++window) {
    const long begin = std::max(0L, t - spec.window);
    if (t - begin < spec.min_window) {
      if (warnings) warnings->push_back("window " + std::to_string(window) + " skipped: " + std::to_string(t - begin) + " rows");
      continue;
    }
    const long end = std::min(n, t + spec.hold);

    std::vector<int> cols(static_cast<std::size_t>(ds.d_y()));
    std::iota(cols.begin(), cols.end(), 0);
    if (d < ds.d_y()) {
      Rng rng = make_rng(spec.seed, 20 + static_cast<std::uint64_t>(window));
      std::shuffle(cols.begin(), cols.end(), rng);
      cols.resize(static_cast<std::size_t>(d));
      std::sort(cols.begin(), cols.end());
    }
    const Dataset sel = select_assets(ds, cols);
    const Dataset train = row_range(sel, begin, t);
    const Dataset hold = row_range(sel, t, end);
    const auto loss = make_loss(setup, d);

    for (const auto& m : spec.models) {
      Vec z;
      if (m == "ew") {
        z = Vec::Zero(d + 1);
        z.tail(d).setConstant(1.0 / d);
        z(0) = train.Y.rowwise().mean().mean();  // mean equal-weight return over the training window
      } else if (m == "mv" || m == "pt") {
        const PtResult r = portfolio_pt(m == "mv" ? train.Y : hold.Y, spec.params);
        z = Vec(d + 1);
        z(0) = r.z0;
        z.tail(d) = r.weights;
      } else {
        auto policy = fit_model(m == "cmv" ? "erm" : m, fs, train, *loss, spec.seed + static_cast<std::uint64_t>(window));
        z = map_decision(policy->forward(Vec(hold.X.row(0).transpose())), Application::portfolio);
      }
      const Vec w = weights_of(z);
      std::vector<double> rets(static_cast<std::size_t>(hold.size()));
      double lsum = 0.0;
      for (std::size_t i = 0; i < hold.size(); ++i) {
        const Vec y = hold.Y.row(static_cast<Eigen::Index>(i)).transpose();
        rets[i] = y.dot(w);
        lsum += portfolio_loss(z, y, spec.params);
      }
      const double mean = std::accumulate(rets.begin(), rets.end(), 0.0) / static_cast<double>(rets.size());
      double ss = 0.0;
      for (double r : rets) ss += (r - mean) * (r - mean);
      const double sd = rets.size() > 1 ? std::sqrt(ss / static_cast<double>(rets.size() - 1)) : std::nan("");
      double sharpe = std::nan("");
      try {
        sharpe = sharpe_ratio(rets);
      } catch (const RuntimeFailure& e) {
        if (warnings) warnings->push_back("window " + std::to_string(window) + " " + m + ": " + e.what());
      }
      out.push_back({window, t, m, mean, sd, sharpe, cvar_loss(rets), lsum / static_cast<double>(hold.size())});
    }
  }
  return out;
}

}  // namespace csdro::cli
