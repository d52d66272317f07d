#include "csdro/cli/benchmark.hpp"

#include "csdro/cli/csv_out.hpp"
#include "csdro/objective.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <mutex>
#include <numeric>
#include <thread>

namespace csdro::cli {

std::unique_ptr<Loss> make_loss(const AppSetup& setup, int d_y) {
  switch (setup.app) {
    case Application::newsvendor: {
      NewsvendorCosts c = setup.newsvendor;
      if (c.h.size() == 1 && d_y > 1) c.h = Vec::Constant(d_y, c.h(0));
      if (c.b.size() == 1 && d_y > 1) c.b = Vec::Constant(d_y, c.b(0));
      if (c.h.size() != d_y || c.b.size() != d_y) throw ValidationError("newsvendor costs do not match d_y");
      return std::make_unique<NewsvendorLoss>(c);
    }
    case Application::inventory:
      if (setup.inventory.c.size() != d_y) throw ValidationError("inventory costs do not match d_y");
      return std::make_unique<InventoryLoss>(setup.inventory);
    case Application::portfolio: return std::make_unique<PortfolioLoss>(d_y, setup.portfolio);
  }
  throw ValidationError("unknown application");
}

Vec initial_decision(Application app, const Dataset& train) {
  const Vec mean = train.Y.colwise().mean().transpose();
  if (app != Application::portfolio) return mean;
  Vec z = Vec::Zero(train.d_y() + 1);
  z(0) = mean.mean();
  return z;
}

void check_model_name(const std::string& model) {
  if (model != "erm" && model != "causal-sdro" && model != "sdro" && model != "kl-dro")
    throw ValidationError("unknown model '" + model + "' (expected erm, causal-sdro, sdro or kl-dro)");
}

std::unique_ptr<DecisionRule> fit_model(const std::string& model, const FitSettings& fs, const Dataset& train,
                                        const Loss& loss, std::uint64_t seed, TrainResult* trace) {
  check_model_name(model);
  Rng init_rng = make_rng(seed, 9);
  PolicyHyper hyper = fs.hyper;
  hyper.leaf_init = initial_decision(fs.app, train);
  auto policy = init_policy(fs.policy, train.d_x(), loss.decision_dim(), init_rng, hyper);
  TrainConfig scsc = fs.scsc, gd = fs.gd;
  scsc.seed = gd.seed = seed;
  scsc.clip_leaves = gd.clip_leaves = loss.nonnegative_decisions();
  TrainResult tr;
  if (model == "erm") {
    tr = train_gd(GdObjective::erm, *policy, loss, train, gd);
  } else if (model == "kl-dro") {
    tr = train_gd(GdObjective::kl, *policy, loss, train, gd, fs.sink.lambda);
  } else if (model == "sdro") {
    tr = train_sdro(train, *policy, loss, fs.sink, scsc);
  } else {
    tr = train_causal_sdro(group_conditionals(train), *policy, loss, fs.sink, scsc);
  }
  if (trace) *trace = std::move(tr);
  return policy;
}

namespace {

struct UnitData {
  Dataset train;
  Dataset test;
};

UnitData make_unit_data(const BenchmarkSpec& spec, long N, long d_x, long seed) {
  const auto s = static_cast<std::uint64_t>(seed);
  Rng model_rng = make_rng(s, 0), train_rng = make_rng(s, 1), test_rng = make_rng(s, 2);
  UnitData u;
  if (spec.setup.app == Application::newsvendor) {
    NewsvendorGenerator gen(static_cast<int>(d_x), spec.c_amp, model_rng);
    u.train = gen.draw(static_cast<std::size_t>(N), train_rng);
    u.test = gen.draw(static_cast<std::size_t>(spec.test_size), test_rng);
  } else if (spec.setup.app == Application::inventory) {
    InventoryGenerator gen(static_cast<int>(d_x), model_rng);
    u.train = gen.draw(static_cast<std::size_t>(N), train_rng);
    u.test = gen.draw(static_cast<std::size_t>(spec.test_size), test_rng);
  } else {
    throw ValidationError("benchmark: portfolio runs use the portfolio command");
  }
  return u;
}

double timed_fit_loss(const std::string& model, const FitSettings& fs, const Dataset& train, const Dataset& eval,
                      const Loss& loss, long seed, double& ms) {
  const auto t0 = std::chrono::steady_clock::now();
  auto policy = fit_model(model, fs, train, loss, static_cast<std::uint64_t>(seed));
  ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return mean_loss(*policy, loss, eval);
}

std::string cell_label(long N, long d_x, long seed, long p, double lam, double eps, const std::string& model) {
  return "N=" + std::to_string(N) + " d_x=" + std::to_string(d_x) + " seed=" + std::to_string(seed) +
         " p=" + std::to_string(p) + " lambda=" + fmt(lam) + " eps=" + fmt(eps) + " model=" + model;
}

// Rows of one (N, d_x, seed) unit. A failing model fit is recorded in `failures` and skipped;
// a failing ERM baseline fails the whole unit.
std::vector<BenchmarkRow> run_unit(const BenchmarkSpec& spec, long N, long d_x, long seed,
                                   std::vector<std::string>& failures) {
  const UnitData data = make_unit_data(spec, N, d_x, seed);
  const auto loss = make_loss(spec.setup, data.train.d_y());
  const double oracle = oracle_loss(spec.setup.app, data.test, &spec.setup.inventory, &spec.setup.portfolio);
  const std::string pol = to_string(spec.fit.policy);
  const double nan = std::numeric_limits<double>::quiet_NaN();

  double erm_ms = 0.0;
  const double erm_loss = timed_fit_loss("erm", spec.fit, data.train, data.test, *loss, seed, erm_ms);
  std::vector<BenchmarkRow> rows;

  if (!spec.holdout_select) {
    for (long p : spec.ps)
      for (double lam : spec.lambdas)
        for (double eps : spec.epss) {
          rows.push_back({N, d_x, p, lam, eps, "erm", pol, seed, erm_loss, 0.0, erm_ms, oracle});
          FitSettings fs = spec.fit;
          fs.sink.p = static_cast<int>(p);
          fs.sink.lambda = lam;
          fs.sink.eps = eps;
          for (const auto& m : spec.models) {
            try {
              double ms = 0.0;
              const double l = timed_fit_loss(m, fs, data.train, data.test, *loss, seed, ms);
              rows.push_back({N, d_x, p, lam, eps, m, pol, seed, l, prescriptiveness(l, erm_loss, oracle), ms, oracle});
            } catch (const std::exception& e) {
              failures.push_back(cell_label(N, d_x, seed, p, lam, eps, m) + ": " + e.what());
            }
          }
        }
    return rows;
  }

  // Validation split of the training rows.
  std::vector<std::size_t> idx(data.train.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng split_rng = make_rng(static_cast<std::uint64_t>(seed), 4);
  std::shuffle(idx.begin(), idx.end(), split_rng);
  const auto n_val = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(spec.holdout_frac * static_cast<double>(idx.size()))));
  if (n_val >= idx.size()) throw ValidationError("benchmark: holdout leaves no training rows");
  const Dataset val = data.train.subset({idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val)});
  const Dataset fit = data.train.subset({idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end()});

  for (long p : spec.ps) {
    rows.push_back({N, d_x, p, nan, nan, "erm", pol, seed, erm_loss, 0.0, erm_ms, oracle});
    for (const auto& m : spec.models) {
      double best = std::numeric_limits<double>::infinity(), best_lam = spec.lambdas.front(), best_eps = spec.epss.front();
      for (double lam : spec.lambdas)
        for (double eps : spec.epss) {
          FitSettings fs = spec.fit;
          fs.sink.p = static_cast<int>(p);
          fs.sink.lambda = lam;
          fs.sink.eps = eps;
          double ms = 0.0, v = 0.0;
          try {
            v = timed_fit_loss(m, fs, fit, val, *loss, seed, ms);
          } catch (const std::exception&) {
            continue;  // a diverging candidate is simply not selectable
          }
          if (v < best) {
            best = v;
            best_lam = lam;
            best_eps = eps;
          }
        }
      if (!std::isfinite(best)) {
        failures.push_back(cell_label(N, d_x, seed, p, nan, nan, m) + ": every holdout candidate failed");
        continue;
      }
      FitSettings fs = spec.fit;
      fs.sink.p = static_cast<int>(p);
      fs.sink.lambda = best_lam;
      fs.sink.eps = best_eps;
      try {
        double ms = 0.0;
        const double l = timed_fit_loss(m, fs, data.train, data.test, *loss, seed, ms);
        rows.push_back({N, d_x, p, best_lam, best_eps, m, pol, seed, l, prescriptiveness(l, erm_loss, oracle), ms, oracle});
      } catch (const std::exception& e) {
        failures.push_back(cell_label(N, d_x, seed, p, best_lam, best_eps, m) + ": " + e.what());
      }
    }
  }
  return rows;
}

void write_unit(const std::string& dir, const std::vector<BenchmarkRow>& rows, long N, long d_x, long seed,
                const std::string& hash) {
  CsvWriter w(dir + "/cell_N" + std::to_string(N) + "_dx" + std::to_string(d_x) + "_seed" + std::to_string(seed) + ".csv",
              {static_cast<std::uint64_t>(seed), hash},
              {"N", "d_x", "p", "lambda", "eps", "model", "policy", "seed", "test_loss", "prescriptiveness"});
  for (const auto& r : rows)
    w.row({fmt(r.N), fmt(r.d_x), fmt(r.p), fmt(r.lambda), fmt(r.eps), r.model, r.policy, fmt(r.seed), fmt(r.test_loss),
           fmt(r.prescriptiveness)});
  w.close();
}

}  // namespace

std::vector<BenchmarkRow> run_benchmark(const BenchmarkSpec& spec_in, int workers, const std::string& cell_dir,
                                        std::vector<std::string>* failures, const std::string& config_hash) {
  BenchmarkSpec spec = spec_in;
  spec.fit.app = spec.setup.app;
  if (spec.Ns.empty() || spec.dxs.empty() || spec.ps.empty() || spec.lambdas.empty() || spec.epss.empty() ||
      spec.seeds.empty())
    throw ValidationError("benchmark: every grid axis must be non-empty");
  for (const auto& m : spec.models) check_model_name(m);
  for (long p : spec.ps)
    if (p != 1 && p != 2) throw ValidationError("benchmark: p must be 1 or 2");

  struct Unit {
    long N, d_x, seed;
  };
  std::vector<Unit> units;
  for (long N : spec.Ns)
    for (long dx : spec.dxs)
      for (long s : spec.seeds) units.push_back({N, dx, s});

  std::vector<std::vector<BenchmarkRow>> results(units.size());
  std::vector<std::vector<std::string>> errors(units.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < units.size(); i = next++) {
      try {
        results[i] = run_unit(spec, units[i].N, units[i].d_x, units[i].seed, errors[i]);
        if (!cell_dir.empty()) write_unit(cell_dir, results[i], units[i].N, units[i].d_x, units[i].seed, config_hash);
      } catch (const std::exception& e) {
        errors[i].push_back("N=" + std::to_string(units[i].N) + " d_x=" + std::to_string(units[i].d_x) +
                    " seed=" + std::to_string(units[i].seed) + ": " + e.what());
      }
    }
  };
  const int n_threads = std::max(1, std::min<int>(workers, static_cast<int>(units.size())));
  std::vector<std::thread> pool;
  for (int t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  std::vector<BenchmarkRow> rows;
  for (std::size_t i = 0; i < units.size(); ++i) {
    if (failures) failures->insert(failures->end(), errors[i].begin(), errors[i].end());
    rows.insert(rows.end(), results[i].begin(), results[i].end());
  }
  return rows;
}

}  // namespace csdro::cli
