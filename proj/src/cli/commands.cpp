#include "csdro/cli/commands.hpp"

#include "csdro/cli/benchmark.hpp"
#include "csdro/cli/config.hpp"
#include "csdro/cli/csv_out.hpp"
#include "csdro/cli/portfolio.hpp"
#include "csdro/interpret.hpp"
#include "csdro/worstcase.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <optional>

namespace csdro::cli {

namespace {

namespace fs = std::filesystem;

struct Common {
  std::string config_path;
  std::string out_dir = ".";
  int workers = 1;
  std::optional<long> seed;
};

struct Run {
  Config cfg;
  std::string out;
  int workers;
  std::uint64_t seed;
  Provenance prov;

  std::string path(const std::string& name) const { return (fs::path(out) / name).string(); }
};

Run prepare(const Common& c) {
  Run r;
  if (!c.config_path.empty()) r.cfg = Config::from_file(c.config_path);
  if (c.seed) r.cfg.set("experiment", "seed", std::to_string(*c.seed));
  const long seed = r.cfg.get_long("experiment", "seed", 1);
  if (seed < 0) throw ValidationError("experiment.seed must be nonnegative");
  if (c.workers < 1) throw ValidationError("--workers must be at least 1");
  r.seed = static_cast<std::uint64_t>(seed);
  r.workers = c.workers;
  r.out = c.out_dir;
  r.prov = {r.seed, r.cfg.hash_hex()};
  return r;
}

void make_out_dir(const Run& r) {
  std::error_code ec;
  fs::create_directories(r.out, ec);
  if (ec) throw RuntimeFailure("cannot create output directory '" + r.out + "': " + ec.message());
}

Vec to_vec(const std::vector<double>& v) { return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size())); }

Application application(const Config& cfg) { return parse_application(cfg.get_string("experiment", "application", "newsvendor")); }

AppSetup app_setup(const Config& cfg) {
  AppSetup s;
  s.app = application(cfg);
  if (s.app == Application::newsvendor) {
    s.newsvendor.h = to_vec(cfg.get_doubles("costs", "h", {0.6}));
    s.newsvendor.b = to_vec(cfg.get_doubles("costs", "b", {1.0}));
    if ((s.newsvendor.h.array() < 0).any() || (s.newsvendor.b.array() < 0).any())
      throw ValidationError("costs: h and b must be nonnegative");
  } else if (s.app == Application::inventory) {
    if (cfg.has("costs", "h")) s.inventory.h = to_vec(cfg.get_doubles("costs", "h", {}));
    if (cfg.has("costs", "b")) s.inventory.b = to_vec(cfg.get_doubles("costs", "b", {}));
    if (cfg.has("costs", "c")) s.inventory.c = to_vec(cfg.get_doubles("costs", "c", {}));
    s.inventory.validate();
  }
  s.portfolio.omega = cfg.get_double("costs", "omega", 5.0);
  if (!(s.portfolio.omega >= 0)) throw ValidationError("costs.omega must be nonnegative");
  return s;
}

SinkhornConfig sink_config(const Config& cfg) {
  SinkhornConfig s;
  s.p = static_cast<int>(cfg.get_long("sinkhorn", "p", s.p));
  s.eps = cfg.get_double("sinkhorn", "eps", s.eps);
  s.lambda = cfg.get_double("sinkhorn", "lambda", s.lambda);
  s.B = cfg.get_double("sinkhorn", "B", s.B);
  s.n1 = static_cast<int>(cfg.get_long("sinkhorn", "n1", s.n1));
  s.n2 = static_cast<int>(cfg.get_long("sinkhorn", "n2", s.n2));
  s.n3 = static_cast<int>(cfg.get_long("sinkhorn", "n3", s.n3));
  s.validate();
  return s;
}

FitSettings fit_settings(const Config& cfg, std::uint64_t seed) {
  FitSettings f;
  f.app = application(cfg);
  f.policy = parse_policy_kind(cfg.get_string("experiment", "policy", "srf"));
  f.hyper.trees = static_cast<int>(cfg.get_long("policy", "trees", f.hyper.trees));
  f.hyper.depth = static_cast<int>(cfg.get_long("policy", "depth", f.hyper.depth));
  f.hyper.hidden = static_cast<int>(cfg.get_long("policy", "hidden", f.hyper.hidden));
  f.hyper.tau = cfg.get_double("policy", "tau", f.hyper.tau);
  if (f.hyper.trees < 1 || f.hyper.depth < 0 || f.hyper.hidden < 0 || !(f.hyper.tau > 0))
    throw ValidationError("policy: trees >= 1, depth >= 0, hidden >= 0 and tau > 0 required");
  f.sink = sink_config(cfg);
  for (TrainConfig* t : {&f.scsc, &f.gd}) {
    t->c_alpha = cfg.get_double("train", "c_alpha", t->c_alpha);
    t->c_beta = cfg.get_double("train", "c_beta", t->c_beta);
    t->radius = cfg.get_double("train", "radius", t->radius);
    t->eval_every = cfg.get_long("train", "eval_every", t->eval_every);
    t->rate = cfg.get_double("train", "rate", t->rate);
    t->batch = cfg.get_long("train", "batch", t->batch);
    t->record_wallclock = cfg.get_bool("train", "record_wallclock", false);
    t->seed = seed;
  }
  f.scsc.K = cfg.get_long("train", "iterations", 2000);
  f.gd.K = cfg.get_long("train", "gd_steps", 500);
  f.scsc.validate();
  f.gd.validate();
  return f;
}

void check_model(const Config& cfg, const std::string& model) {
  check_model_name(model);
  if (model != "erm" && !(cfg.get_double("sinkhorn", "lambda", 1.0) > 0))
    throw ValidationError("sinkhorn.lambda must be positive for DRO models");
}

std::vector<std::string> column_names(const std::string& prefix, int d) {
  std::vector<std::string> out;
  if (d == 1 && prefix == "y") return {"y"};
  for (int j = 1; j <= d; ++j) out.push_back(prefix + std::to_string(j));
  return out;
}

// Dataset named by the [data] section: a generator draw from `seed` or a CSV file.
Dataset load_dataset(const Config& cfg, std::uint64_t seed) {
  const std::string source = cfg.get_string("data", "source", "generator");
  const Application app = application(cfg);
  if (source == "csv") {
    const std::string path = cfg.get_string("data", "path", "");
    if (path.empty()) throw ValidationError("data.path is required when data.source = csv");
    if (!fs::exists(path)) throw ValidationError("data file '" + path + "' does not exist");
    if (!cfg.has("data", "features") || !cfg.has("data", "outcomes"))
      throw ValidationError("data.features and data.outcomes are required when data.source = csv");
    Dataset ds = load_csv(path, cfg.get_strings("data", "features", {}), cfg.get_strings("data", "outcomes", {}));
    ds.validate();
    return ds;
  }
  if (source != "generator") throw ValidationError("data.source must be generator or csv, got '" + source + "'");
  const long n = cfg.get_long("data", "n", app == Application::portfolio ? 1000 : 200);
  const long d_x = cfg.get_long("data", "d_x", 5);
  if (n < 1) throw ValidationError("data.n must be at least 1");
  if (d_x < 1) throw ValidationError("data.d_x must be at least 1");
  switch (app) {
    case Application::newsvendor: {
      NewsvendorGenConfig g;
      g.N = static_cast<std::size_t>(n);
      g.d_x = static_cast<int>(d_x);
      g.c_amp = cfg.get_double("data", "c_amp", g.c_amp);
      g.seed = seed;
      g.validate();
      return generate_newsvendor(g);
    }
    case Application::inventory: {
      InventoryGenConfig g;
      g.N = static_cast<std::size_t>(n);
      g.d_x = static_cast<int>(d_x);
      g.seed = seed;
      g.validate();
      return generate_inventory(g);
    }
    case Application::portfolio: {
      PortfolioGenConfig g;
      g.N = static_cast<std::size_t>(n);
      g.d_x = static_cast<int>(d_x);
      const long d_y = cfg.get_long("data", "d_y", g.d_y);
      if (d_y < 1) throw ValidationError("data.d_y must be at least 1");
      g.d_y = static_cast<int>(d_y);
      g.seed = seed;
      g.validate();
      return generate_portfolio(g);
    }
  }
  throw ValidationError("unknown application");
}

std::unique_ptr<DecisionRule> load_policy_file(const Config& cfg, const Run& r) {
  std::string path = cfg.get_string("policy", "file", "");
  if (path.empty()) path = r.path("policy.txt");
  if (!fs::exists(path)) throw ValidationError("policy file '" + path + "' does not exist");
  return load_policy(path);
}

void check_dims(const DecisionRule& rule, const Dataset& ds, const Loss& loss) {
  if (rule.input_dim() != ds.d_x() || rule.output_dim() != loss.decision_dim())
    throw ValidationError("policy dimensions (d_x=" + std::to_string(rule.input_dim()) + ", d_z=" + std::to_string(rule.output_dim()) +
                          ") do not match the data (d_x=" + std::to_string(ds.d_x()) +
                          ", d_z=" + std::to_string(loss.decision_dim()) + ")");
}

// ---- generate ----

int cmd_generate(const Run& r) {
  const Application app = application(r.cfg);
  if (r.cfg.get_string("data", "source", "generator") != "generator")
    throw ValidationError("generate requires data.source = generator");
  const Dataset ds = load_dataset(r.cfg, r.seed);
  make_out_dir(r);
  std::vector<std::string> header;
  if (app == Application::portfolio) header.push_back("date");
  for (const auto& s : column_names("x", ds.d_x())) header.push_back(s);
  for (const auto& s : column_names("y", ds.d_y())) header.push_back(s);
  CsvWriter w(r.path("dataset.csv"), r.prov, header);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    std::vector<std::string> row;
    if (app == Application::portfolio) row.push_back(fmt(i + 1));
    for (int j = 0; j < ds.d_x(); ++j) row.push_back(fmt(ds.X(static_cast<Eigen::Index>(i), j)));
    for (int j = 0; j < ds.d_y(); ++j) row.push_back(fmt(ds.Y(static_cast<Eigen::Index>(i), j)));
    w.row(row);
  }
  w.close();

  const std::string meta = r.path("dataset.meta");
  std::ofstream m(meta + ".tmp");
  m << "seed=" << r.seed << "\nconfig-hash=" << r.prov.config_hash << "\napplication=" << to_string(app)
    << "\nrows=" << ds.size() << "\nd_x=" << ds.d_x() << "\nd_y=" << ds.d_y() << "\n";
  if (app == Application::newsvendor) m << "c_amp=" << format_double(r.cfg.get_double("data", "c_amp", 1.7)) << "\n";
  m.close();
  if (!m) throw RuntimeFailure("cannot write '" + meta + "'");
  fs::rename(meta + ".tmp", meta);
  std::cout << "wrote " << ds.size() << " rows to " << r.path("dataset.csv") << "\n";
  return 0;
}

// ---- train ----

int cmd_train(const Run& r) {
  const std::string model = r.cfg.get_string("experiment", "model", "causal-sdro");
  check_model(r.cfg, model);
  const AppSetup setup = app_setup(r.cfg);
  const FitSettings fs_ = fit_settings(r.cfg, r.seed);
  const Dataset ds = load_dataset(r.cfg, r.seed);
  const auto loss = make_loss(setup, ds.d_y());
  make_out_dir(r);

  TrainResult tr;
  std::unique_ptr<DecisionRule> policy;
  try {
    policy = fit_model(model, fs_, ds, *loss, r.seed, &tr);
  } catch (const ValidationError& e) {
    throw ValidationError("train " + model + ": " + e.what());
  } catch (const RuntimeFailure& e) {
    throw RuntimeFailure("train " + model + ": " + e.what());
  }
  save_policy(*policy, r.path("policy.txt"));
  CsvWriter w(r.path("trace.csv"), r.prov, {"iter", "objective", "grad_norm_est", "wallclock_ms"});
  for (const auto& t : tr.trace) w.row({fmt(t.iter), fmt(t.objective), fmt(t.grad_norm_est), fmt(t.wallclock_ms)});
  w.close();
  std::cout << model << ": train loss " << format_double(mean_loss(*policy, *loss, ds)) << "\n";
  return 0;
}

// ---- benchmark ----

double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

int cmd_benchmark(const Run& r) {
  BenchmarkSpec spec;
  spec.setup = app_setup(r.cfg);
  spec.fit = fit_settings(r.cfg, r.seed);
  spec.models = r.cfg.get_strings("experiment", "models", {r.cfg.get_string("experiment", "model", "causal-sdro")});
  spec.models.erase(std::remove(spec.models.begin(), spec.models.end(), "erm"), spec.models.end());
  for (const auto& m : spec.models) check_model(r.cfg, m);
  spec.Ns = r.cfg.get_longs("benchmark", "n", {r.cfg.get_long("data", "n", 200)});
  spec.dxs = r.cfg.get_longs("benchmark", "d_x", {r.cfg.get_long("data", "d_x", 5)});
  spec.ps = r.cfg.get_longs("benchmark", "p", {spec.fit.sink.p});
  spec.lambdas = r.cfg.get_doubles("benchmark", "lambda", {spec.fit.sink.lambda});
  spec.epss = r.cfg.get_doubles("benchmark", "eps", {spec.fit.sink.eps});
  spec.seeds = r.cfg.get_longs("experiment", "seeds", {static_cast<long>(r.seed)});
  spec.test_size = r.cfg.get_long("experiment", "test_size", spec.test_size);
  spec.c_amp = r.cfg.get_double("data", "c_amp", spec.c_amp);
  const std::string select = r.cfg.get_string("benchmark", "select", "grid");
  if (select != "grid" && select != "holdout") throw ValidationError("benchmark.select must be grid or holdout");
  spec.holdout_select = select == "holdout";
  spec.holdout_frac = r.cfg.get_double("benchmark", "holdout", spec.holdout_frac);
  if (!(spec.holdout_frac > 0 && spec.holdout_frac < 1)) throw ValidationError("benchmark.holdout must lie in (0, 1)");
  if (spec.test_size < 1) throw ValidationError("experiment.test_size must be at least 1");
  for (long n : spec.Ns)
    if (n < 2) throw ValidationError("benchmark.n entries must be at least 2");
  for (long d : spec.dxs)
    if (d < 1) throw ValidationError("benchmark.d_x entries must be at least 1");
  for (long s : spec.seeds)
    if (s < 0) throw ValidationError("experiment.seeds must be nonnegative");
  for (double v : spec.lambdas)
    if (!(v > 0)) throw ValidationError("benchmark.lambda entries must be positive");
  for (double v : spec.epss)
    if (!(v > 0)) throw ValidationError("benchmark.eps entries must be positive");

  make_out_dir(r);
  const std::string cells = r.path("cells");
  fs::create_directories(cells);
  std::vector<std::string> failures;
  const auto rows = run_benchmark(spec, r.workers, cells, &failures, r.prov.config_hash);

  CsvWriter w(r.path("benchmark.csv"), r.prov,
              {"N", "d_x", "p", "lambda", "eps", "model", "policy", "seed", "test_loss", "prescriptiveness"});
  for (const auto& b : rows)
    w.row({fmt(b.N), fmt(b.d_x), fmt(b.p), fmt(b.lambda), fmt(b.eps), b.model, b.policy, fmt(b.seed), fmt(b.test_loss),
           fmt(b.prescriptiveness)});
  for (const auto& f : failures) w.comment("failed: " + f);
  w.close();

  // Aggregates per (N, d_x, p, lambda, eps, model). ERM rows are keyed by p only in holdout mode.
  using Key = std::tuple<long, long, long, std::string, std::string, std::string>;
  std::map<Key, std::pair<std::vector<double>, std::vector<double>>> groups;
  for (const auto& b : rows) {
    auto& g = groups[{b.N, b.d_x, b.p, spec.holdout_select ? "" : fmt(b.lambda), spec.holdout_select ? "" : fmt(b.eps), b.model}];
    g.first.push_back(b.test_loss);
    g.second.push_back(b.prescriptiveness);
  }
  CsvWriter s(r.path("summary.csv"), r.prov,
              {"N", "d_x", "p", "lambda", "eps", "model", "count", "mean_loss", "median_loss", "iqr_loss",
               "mean_prescriptiveness", "median_prescriptiveness", "iqr_prescriptiveness", "positive"});
  for (const auto& [k, v] : groups) {
    const auto& [N, dx, p, lam, eps, model] = k;
    const auto mean = [](const std::vector<double>& x) {
      double t = 0;
      for (double e : x) t += e;
      return t / static_cast<double>(x.size());
    };
    const long positive = std::count_if(v.second.begin(), v.second.end(), [](double e) { return e > 0; });
    s.row({fmt(N), fmt(dx), fmt(p), lam.empty() ? "selected" : lam, eps.empty() ? "selected" : eps, model, fmt(v.first.size()),
           fmt(mean(v.first)), fmt(quantile(v.first, 0.5)), fmt(quantile(v.first, 0.75) - quantile(v.first, 0.25)),
           fmt(mean(v.second)), fmt(quantile(v.second, 0.5)), fmt(quantile(v.second, 0.75) - quantile(v.second, 0.25)),
           fmt(positive)});
  }
  s.close();

  if (spec.fit.scsc.record_wallclock) {
    CsvWriter t(r.path("timing.csv"), r.prov, {"N", "d_x", "p", "lambda", "eps", "model", "seed", "train_ms"});
    for (const auto& b : rows)
      t.row({fmt(b.N), fmt(b.d_x), fmt(b.p), fmt(b.lambda), fmt(b.eps), b.model, fmt(b.seed), fmt(b.train_ms)});
    t.close();
  }
  for (const auto& f : failures) std::cerr << "warning: unit failed: " << f << "\n";
  std::cout << rows.size() << " rows written to " << r.path("benchmark.csv") << "\n";
  if (rows.empty() && !failures.empty()) throw RuntimeFailure("every benchmark unit failed");
  return 0;
}

// ---- worstcase ----

int cmd_worstcase(const Run& r) {
  const std::string model = r.cfg.get_string("experiment", "model", "causal-sdro");
  check_model(r.cfg, model);
  if (model == "erm") throw ValidationError("worstcase needs a DRO model (causal-sdro, sdro or kl-dro)");
  const AppSetup setup = app_setup(r.cfg);
  const SinkhornConfig sink = sink_config(r.cfg);
  const Dataset ds = load_dataset(r.cfg, r.seed);
  const auto loss = make_loss(setup, ds.d_y());
  const auto policy = load_policy_file(r.cfg, r);
  check_dims(*policy, ds, *loss);
  const double lambda = r.cfg.get_double("worstcase", "lambda", sink.lambda);
  if (!(lambda > 0)) throw ValidationError("worstcase.lambda must be positive");
  make_out_dir(r);

  if (model == "kl-dro") {
    const Vec w = kl_wc_weights(lambda, *policy, *loss, ds);
    std::vector<std::string> header{"row"};
    for (const auto& s : column_names("x", ds.d_x())) header.push_back(s);
    for (const auto& s : column_names("y", ds.d_y())) header.push_back(s);
    header.push_back("weight");
    CsvWriter out(r.path("kl_weights.csv"), r.prov, header);
    for (std::size_t i = 0; i < ds.size(); ++i) {
      std::vector<std::string> row{fmt(i)};
      for (int j = 0; j < ds.d_x(); ++j) row.push_back(fmt(ds.X(static_cast<Eigen::Index>(i), j)));
      for (int j = 0; j < ds.d_y(); ++j) row.push_back(fmt(ds.Y(static_cast<Eigen::Index>(i), j)));
      row.push_back(fmt(w(static_cast<Eigen::Index>(i))));
      out.row(row);
    }
    out.close();
  } else {
    if (ds.d_x() != 1 || ds.d_y() != 1) throw ValidationError("worstcase densities need d_x = d_y = 1");
    const double pad = 6.0 * kernel_std(sink.p, sink.eps);
    const long grid = r.cfg.get_long("worstcase", "grid", 200);
    if (grid < 2) throw ValidationError("worstcase.grid must be at least 2");
    const Vec x_grid = uniform_grid(r.cfg.get_double("worstcase", "x_min", ds.X.minCoeff() - pad),
                                    r.cfg.get_double("worstcase", "x_max", ds.X.maxCoeff() + pad), static_cast<int>(grid));
    const Vec y_grid = uniform_grid(r.cfg.get_double("worstcase", "y_min", ds.Y.minCoeff() - pad),
                                    r.cfg.get_double("worstcase", "y_max", ds.Y.maxCoeff() + pad), static_cast<int>(grid));
    const WorstCaseGrid wc = model == "causal-sdro"
                                 ? causal_wc_density(lambda, *policy, *loss, group_conditionals(ds), x_grid, y_grid, sink)
                                 : sdro_wc_density(lambda, *policy, *loss, ds, x_grid, y_grid, sink);
    const double integral = wc.integral();
    CsvWriter out(r.path("density.csv"), r.prov, {"x", "y", "density"});
    out.comment("integral=" + fmt(integral));
    for (Eigen::Index i = 0; i < wc.x_grid.size(); ++i)
      for (Eigen::Index j = 0; j < wc.y_grid.size(); ++j)
        out.row({fmt(wc.x_grid(i)), fmt(wc.y_grid(j)), fmt(wc.density(i, j))});
    out.close();
    std::ofstream side(r.path("density.integral"));
    side << "integral=" << fmt(integral) << "\nmodel=" << to_string(wc.model) << "\nlambda=" << fmt(lambda) << "\n";
    for (const auto& w : wc.warnings) std::cerr << "warning: " << w << "\n";
  }

  if (r.cfg.has("worstcase", "rho")) {
    if (model != "causal-sdro") throw ValidationError("the hard-constrained dual is available for causal-sdro only");
    const double rho = r.cfg.get_double("worstcase", "rho", 0.0);
    const HardDualResult hd = hard_dual_solve(
        *policy, *loss, group_conditionals(ds), rho, sink, r.cfg.get_double("worstcase", "lambda_lo", 1e-2),
        r.cfg.get_double("worstcase", "lambda_hi", 1e2), r.seed, static_cast<int>(r.cfg.get_long("worstcase", "curve_points", 20)));
    CsvWriter out(r.path("dual_curve.csv"), r.prov, {"lambda", "value"});
    out.comment("lambda_star=" + fmt(hd.lambda_star) + ", value=" + fmt(hd.value) + ", rho_bar=" + fmt(hd.rho_bar));
    if (hd.nonconvex) out.comment("nonconvex=true");
    for (Eigen::Index i = 0; i < hd.curve.lambdas.size(); ++i) out.row({fmt(hd.curve.lambdas(i)), fmt(hd.curve.values(i))});
    out.close();
    if (hd.hit_lower || hd.hit_upper) std::cerr << "warning: dual minimizer at the bracket endpoint\n";
    if (hd.nonconvex) std::cerr << "warning: dual curve failed the convexity check\n";
  }
  return 0;
}

// ---- interpret ----

void write_importance(const Run& r, const std::string& name, const ImportanceReport& rep) {
  CsvWriter w(r.path(name), r.prov, {"feature", "score", "normalized"});
  w.comment("method=" + rep.method + ", degenerate=" + (rep.degenerate ? "true" : "false"));
  for (Eigen::Index j = 0; j < rep.raw.size(); ++j)
    w.row({"x" + std::to_string(j + 1), fmt(rep.raw(j)), fmt(rep.normalized(j))});
  w.close();
}

int cmd_interpret(const Run& r) {
  const AppSetup setup = app_setup(r.cfg);
  const Dataset ds = load_dataset(r.cfg, r.seed);
  const auto loss = make_loss(setup, ds.d_y());
  const auto policy = load_policy_file(r.cfg, r);
  check_dims(*policy, ds, *loss);
  make_out_dir(r);

  Rng perm_rng = make_rng(r.seed, 6);
  write_importance(r, "permutation_importance.csv", permutation_importance(*policy, ds, perm_rng));
  const auto* forest = dynamic_cast<const SoftRegressionForest*>(policy.get());
  if (!forest) {
    std::cerr << "warning: gradient importance, EIG and routes need a forest policy; wrote permutation importance only\n";
    return 0;
  }
  write_importance(r, "importance.csv", global_importance(*forest, ds));

  Vec x = ds.X.row(0).transpose();
  if (r.cfg.has("interpret", "point")) {
    x = to_vec(r.cfg.get_doubles("interpret", "point", {}));
    if (x.size() != ds.d_x()) throw ValidationError("interpret.point must have d_x entries");
  }
  const long M = r.cfg.get_long("interpret", "quadrature", 64);
  if (M < 1) throw ValidationError("interpret.quadrature must be at least 1");
  const EigAttribution att = eig(*forest, x, ds, static_cast<int>(M));
  for (int k = 0; k < forest->output_dim(); ++k) {
    const std::string name = forest->output_dim() == 1 ? "eig.csv" : "eig_z" + std::to_string(k + 1) + ".csv";
    CsvWriter w(r.path(name), r.prov, {"feature", "contribution"});
    for (int j = 0; j < forest->input_dim(); ++j) w.row({"x" + std::to_string(j + 1), fmt(att.phi(j, k))});
    w.row({"baseline", fmt(att.baseline(k))});
    w.row({"prescription", fmt(att.prescription(k))});
    w.comment("residual=" + fmt(att.residual()(k)));
    w.close();
  }

  const long top_k = r.cfg.get_long("interpret", "top_k", 3);
  if (top_k < 1) throw ValidationError("interpret.top_k must be at least 1");
  const auto routes = trace_routes(*forest, x, static_cast<int>(top_k));
  CsvWriter rw(r.path("routes.csv"), r.prov, {"tree", "rank", "leaf", "prob", "path"});
  for (std::size_t t = 0; t < routes.size(); ++t)
    for (std::size_t k = 0; k < routes[t].size(); ++k) {
      const auto& e = routes[t][k];
      std::string path;
      for (const auto& s : e.path) {
        if (!path.empty()) path += " ";
        path += std::to_string(s.node) + (s.left ? "L" : "R") + ":" + fmt(s.gate_prob);
      }
      rw.row({fmt(t), fmt(k + 1), std::to_string(e.leaf), fmt(e.prob), path});
    }
  rw.close();

  CsvWriter hw(r.path("hessian.csv"), r.prov, {"output", "i", "j", "value"});
  for (int k = 0; k < forest->output_dim(); ++k) {
    const Mat H = forest->hessian_x(x, k);
    for (Eigen::Index i = 0; i < H.rows(); ++i)
      for (Eigen::Index j = 0; j < H.cols(); ++j)
        hw.row({std::to_string(k + 1), "x" + std::to_string(i + 1), "x" + std::to_string(j + 1), fmt(H(i, j))});
  }
  hw.close();
  return 0;
}

// ---- portfolio ----

int cmd_portfolio(const Run& r) {
  if (application(r.cfg) != Application::portfolio) throw ValidationError("portfolio requires experiment.application = portfolio");
  RollingSpec spec;
  spec.params = app_setup(r.cfg).portfolio;
  spec.fit = fit_settings(r.cfg, r.seed);
  spec.seed = r.seed;
  spec.window = r.cfg.get_long("portfolio", "window", spec.window);
  spec.hold = r.cfg.get_long("portfolio", "hold", spec.hold);
  spec.assets = r.cfg.get_long("portfolio", "assets", spec.assets);
  spec.min_window = r.cfg.get_long("portfolio", "min_window", spec.min_window);
  spec.models = r.cfg.get_strings("experiment", "models", spec.models);
  for (const auto& m : spec.models)
    if (m != "ew" && m != "mv" && m != "cmv" && m != "pt") check_model(r.cfg, m);
  const Dataset ds = load_dataset(r.cfg, r.seed);
  make_out_dir(r);

  std::vector<std::string> warnings;
  const auto rows = run_portfolio_rolling(ds, spec, &warnings);
  CsvWriter w(r.path("portfolio.csv"), r.prov, {"window", "start_row", "model", "mean", "std", "sharpe", "cvar", "loss"});
  for (const auto& m : rows)
    w.row({fmt(m.window), fmt(m.start_row), m.model, fmt(m.mean), fmt(m.stddev), fmt(m.sharpe), fmt(m.cvar), fmt(m.loss)});
  for (const auto& s : warnings) w.comment("warning: " + s);
  w.close();

  CsvWriter s(r.path("portfolio_summary.csv"), r.prov, {"model", "windows", "loss", "sharpe", "mean", "std", "cvar"});
  for (const auto& model : spec.models) {
    double n = 0, loss = 0, sharpe = 0, mean = 0, sd = 0, cvar = 0;
    for (const auto& m : rows)
      if (m.model == model) {
        n += 1;
        loss += m.loss;
        sharpe += m.sharpe;
        mean += m.mean;
        sd += m.stddev;
        cvar += m.cvar;
      }
    if (n == 0) continue;
    s.row({model, fmt(static_cast<long>(n)), fmt(loss / n), fmt(sharpe / n), fmt(mean / n), fmt(sd / n), fmt(cvar / n)});
  }
  s.close();
  for (const auto& m : warnings) std::cerr << "warning: " << m << "\n";
  return 0;
}

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config_path, "Configuration file")->check(CLI::ExistingFile);
  sub->add_option("--out", c.out_dir, "Output directory");
  sub->add_option("--workers", c.workers, "Worker threads");
  sub->add_option("--seed", c.seed, "Overrides experiment.seed");
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Causal Sinkhorn DRO experiments"};
  app.require_subcommand(1);
  Common common;
  using Handler = int (*)(const Run&);
  const std::vector<std::tuple<std::string, std::string, Handler>> commands = {
      {"generate", "Draw a synthetic dataset", cmd_generate},
      {"train", "Train a decision rule", cmd_train},
      {"benchmark", "Run a seed and parameter grid against ERM", cmd_benchmark},
      {"worstcase", "Export worst-case densities and the dual curve", cmd_worstcase},
      {"interpret", "Export importance, EIG attributions and routes", cmd_interpret},
      {"portfolio", "Rolling-horizon portfolio backtest", cmd_portfolio},
  };
  std::vector<CLI::App*> subs;
  for (const auto& [name, desc, _] : commands) {
    subs.push_back(app.add_subcommand(name, desc));
    add_common(subs.back(), common);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  try {
    const Run run = prepare(common);
    for (std::size_t i = 0; i < subs.size(); ++i)
      if (subs[i]->parsed()) return std::get<2>(commands[i])(run);
    return 1;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const RuntimeFailure& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

int run_cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv{"csdro"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace csdro::cli
