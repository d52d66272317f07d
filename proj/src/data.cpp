#include "csdro/data.hpp"

#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace csdro {

void Dataset::validate() const {
  if (X.rows() != Y.rows()) throw ValidationError("dataset: X and Y row counts differ");
  if (X.cols() < 1 || Y.cols() < 1) throw ValidationError("dataset: d_x and d_y must be positive");
  if (!X.allFinite() || !Y.allFinite()) throw ValidationError("dataset: non-finite entry");
}

Dataset Dataset::subset(const std::vector<std::size_t>& rows) const {
  Dataset out;
  out.X.resize(static_cast<Eigen::Index>(rows.size()), X.cols());
  out.Y.resize(static_cast<Eigen::Index>(rows.size()), Y.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.X.row(static_cast<Eigen::Index>(i)) = X.row(static_cast<Eigen::Index>(rows[i]));
    out.Y.row(static_cast<Eigen::Index>(i)) = Y.row(static_cast<Eigen::Index>(rows[i]));
  }
  return out;
}

namespace {

template <class Row>
std::vector<std::uint64_t> bit_key(const Row& r) {
  std::vector<std::uint64_t> key(static_cast<std::size_t>(r.size()));
  for (Eigen::Index j = 0; j < r.size(); ++j) {
    double v = r(j);
    std::memcpy(&key[static_cast<std::size_t>(j)], &v, sizeof v);
  }
  return key;
}

}  // namespace

GroupedDataset group_conditionals(const Dataset& ds) {
  if (ds.size() == 0) throw ValidationError("group_conditionals: empty dataset");
  GroupedDataset g;
  g.d_x = ds.d_x();
  g.d_y = ds.d_y();
  g.row_group.resize(ds.size());

  std::map<std::vector<std::uint64_t>, std::size_t> index;
  std::vector<std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    auto key = bit_key(ds.X.row(static_cast<Eigen::Index>(i)));
    auto [it, fresh] = index.emplace(std::move(key), members.size());
    if (fresh) members.emplace_back();
    members[it->second].push_back(i);
    g.row_group[i] = it->second;
  }

  g.groups.reserve(members.size());
  for (const auto& rows : members) {
    // Distinct outcomes in order of first appearance.
    std::map<std::vector<std::uint64_t>, std::size_t> seen;
    std::vector<std::size_t> first_row;
    std::vector<std::size_t> counts;
    for (std::size_t r : rows) {
      auto [it, fresh] = seen.emplace(bit_key(ds.Y.row(static_cast<Eigen::Index>(r))), first_row.size());
      if (fresh) {
        first_row.push_back(r);
        counts.push_back(0);
      }
      ++counts[it->second];
    }
    Group grp;
    grp.x = ds.X.row(static_cast<Eigen::Index>(rows.front())).transpose();
    grp.count = rows.size();
    grp.outcomes.resize(static_cast<Eigen::Index>(first_row.size()), ds.d_y());
    grp.probs.resize(static_cast<Eigen::Index>(first_row.size()));
    for (std::size_t k = 0; k < first_row.size(); ++k) {
      grp.outcomes.row(static_cast<Eigen::Index>(k)) = ds.Y.row(static_cast<Eigen::Index>(first_row[k]));
      grp.probs(static_cast<Eigen::Index>(k)) = static_cast<double>(counts[k]) / static_cast<double>(rows.size());
    }
    g.groups.push_back(std::move(grp));
  }
  return g;
}

void NewsvendorGenConfig::validate() const {
  if (N < 1) throw ValidationError("newsvendor generator: N must be >= 1");
  if (d_x < 1) throw ValidationError("newsvendor generator: d_x must be >= 1");
  if (!(h > 0.0) || !(b > 0.0)) throw ValidationError("newsvendor generator: h and b must be > 0");
  if (!(c_amp > 0.0)) throw ValidationError("newsvendor generator: c_amp must be > 0");
}

void InventoryGenConfig::validate() const {
  if (N < 1) throw ValidationError("inventory generator: N must be >= 1");
  if (d_x < 1) throw ValidationError("inventory generator: d_x must be >= 1");
}

void PortfolioGenConfig::validate() const {
  if (N < 1) throw ValidationError("portfolio generator: N must be >= 1");
  if (d_x < 1 || d_y < 1) throw ValidationError("portfolio generator: d_x and d_y must be >= 1");
}

double newsvendor_f_true(double index, double c_amp) {
  return c_amp * (std::sin(2.0 * index) + 2.0 * std::exp(-16.0 * index * index) + 1.0);
}

Mat covariate_covariance(int d_x) {
  Mat s(d_x, d_x);
  for (int i = 0; i < d_x; ++i)
    for (int j = 0; j < d_x; ++j) s(i, j) = std::pow(0.5, std::abs(i - j));
  return s;
}

namespace {

Vec draw_beta(int d_x, Rng& rng) {
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  Vec beta(d_x);
  for (int j = 0; j < d_x; ++j) beta(j) = u(rng);
  return beta;
}

Mat cholesky_lower(const Mat& s) {
  Eigen::LLT<Mat> llt(s);
  if (llt.info() != Eigen::Success) throw RuntimeFailure("covariance is not positive definite");
  return llt.matrixL();
}

Vec draw_mvn(const Mat& chol, Rng& rng) {
  std::normal_distribution<double> n01;
  Vec z(chol.rows());
  for (Eigen::Index j = 0; j < z.size(); ++j) z(j) = n01(rng);
  return chol * z;
}

}  // namespace

NewsvendorGenerator::NewsvendorGenerator(int d_x, double c_amp, Rng& model_rng)
    : d_x_(d_x), c_amp_(c_amp), beta_(draw_beta(d_x, model_rng)), chol_(cholesky_lower(covariate_covariance(d_x))) {}

double NewsvendorGenerator::draw_outcome(double index, Rng& rng) const {
  std::normal_distribution<double> n01;
  const double mean = newsvendor_f_true(index, c_amp_);
  for (long attempt = 0; attempt < 1000000; ++attempt) {
    const double y = mean + n01(rng);
    if (y >= 0.0) return y;
  }
  throw RuntimeFailure("newsvendor generator: rejection sampling exceeded 1e6 draws");
}

Dataset NewsvendorGenerator::draw(std::size_t n, Rng& rng) const {
  Dataset ds;
  ds.X.resize(static_cast<Eigen::Index>(n), d_x_);
  ds.Y.resize(static_cast<Eigen::Index>(n), 1);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec x = draw_mvn(chol_, rng);
    const auto r = static_cast<Eigen::Index>(i);
    ds.X.row(r) = x.transpose();
    ds.Y(r, 0) = draw_outcome(beta_.dot(x), rng);
  }
  return ds;
}

InventoryGenerator::InventoryGenerator(int d_x, Rng& model_rng)
    : d_x_(d_x), beta_(draw_beta(d_x, model_rng)), chol_(cholesky_lower(covariate_covariance(d_x))) {}

Vec InventoryGenerator::draw_outcome(double index, Rng& rng) const {
  // Shape-scale convention: Gamma(k, s) has mean k*s.
  const double scale = std::exp(index);
  std::exponential_distribution<double> e1(1.0 / scale);
  std::gamma_distribution<double> g2(2.0, scale);
  std::gamma_distribution<double> g4(4.0, scale);
  Vec y(3);
  y(0) = e1(rng);
  y(1) = g2(rng);
  y(2) = g4(rng);
  return y;
}

Dataset InventoryGenerator::draw(std::size_t n, Rng& rng) const {
  Dataset ds;
  ds.X.resize(static_cast<Eigen::Index>(n), d_x_);
  ds.Y.resize(static_cast<Eigen::Index>(n), 3);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec x = draw_mvn(chol_, rng);
    const auto r = static_cast<Eigen::Index>(i);
    ds.X.row(r) = x.transpose();
    ds.Y.row(r) = draw_outcome(beta_.dot(x), rng).transpose();
  }
  return ds;
}

PortfolioGenerator::PortfolioGenerator(int d_x, int d_y, Rng& model_rng) : d_x_(d_x), d_y_(d_y) {
  std::normal_distribution<double> n01;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  load_.resize(d_y, d_x);
  drift_.resize(d_y);
  vol_.resize(d_y);
  for (int i = 0; i < d_y; ++i) {
    for (int j = 0; j < d_x; ++j) load_(i, j) = n01(model_rng) / std::sqrt(static_cast<double>(d_x));
    drift_(i) = 2e-4 * (u(model_rng) - 0.3);
    vol_(i) = 0.008 + 0.012 * u(model_rng);
  }
}

Dataset PortfolioGenerator::draw(std::size_t n, Rng& rng) const {
  // Features follow a stationary AR(1); returns load on the current features.
  std::normal_distribution<double> n01;
  const double phi = 0.95;
  const Mat chol = cholesky_lower(covariate_covariance(d_x_));
  Dataset ds;
  ds.X.resize(static_cast<Eigen::Index>(n), d_x_);
  ds.Y.resize(static_cast<Eigen::Index>(n), d_y_);
  Vec x = draw_mvn(chol, rng);
  for (std::size_t t = 0; t < n; ++t) {
    x = phi * x + std::sqrt(1.0 - phi * phi) * draw_mvn(chol, rng);
    const auto r = static_cast<Eigen::Index>(t);
    ds.X.row(r) = x.transpose();
    const Vec signal = load_ * x;
    for (int i = 0; i < d_y_; ++i)
      ds.Y(r, i) = drift_(i) + 2e-3 * std::tanh(signal(i)) + vol_(i) * n01(rng);
  }
  return ds;
}

Dataset generate_newsvendor(const NewsvendorGenConfig& cfg) {
  cfg.validate();
  Rng model_rng = make_rng(cfg.seed, 0);
  Rng sample_rng = make_rng(cfg.seed, 1);
  return NewsvendorGenerator(cfg.d_x, cfg.c_amp, model_rng).draw(cfg.N, sample_rng);
}

Dataset generate_inventory(const InventoryGenConfig& cfg) {
  cfg.validate();
  Rng model_rng = make_rng(cfg.seed, 0);
  Rng sample_rng = make_rng(cfg.seed, 1);
  return InventoryGenerator(cfg.d_x, model_rng).draw(cfg.N, sample_rng);
}

Dataset generate_portfolio(const PortfolioGenConfig& cfg) {
  cfg.validate();
  Rng model_rng = make_rng(cfg.seed, 0);
  Rng sample_rng = make_rng(cfg.seed, 1);
  return PortfolioGenerator(cfg.d_x, cfg.d_y, model_rng).draw(cfg.N, sample_rng);
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

}  // namespace

Dataset load_csv(const std::string& path, const std::vector<std::string>& feature_cols,
                 const std::vector<std::string>& outcome_cols) {
  std::ifstream in(path);
  if (!in) throw ValidationError("load_csv: cannot open '" + path + "'");
  if (feature_cols.empty() || outcome_cols.empty())
    throw ValidationError("load_csv: feature and outcome columns must be non-empty");

  std::string line;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    if (trim(line).empty() || line[0] == '#') continue;
    for (auto& h : split_csv_line(line)) header.push_back(trim(h));
    break;
  }
  if (header.empty()) throw ValidationError("load_csv: " + path + ": no data rows");

  auto locate = [&](const std::string& name) {
    for (std::size_t j = 0; j < header.size(); ++j)
      if (header[j] == name) return j;
    throw ValidationError("load_csv: " + path + ": missing column '" + name + "'");
  };
  std::vector<std::size_t> fidx, oidx;
  for (const auto& c : feature_cols) fidx.push_back(locate(c));
  for (const auto& c : outcome_cols) oidx.push_back(locate(c));

  std::vector<std::vector<double>> xs, ys;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty() || line[0] == '#') continue;
    const auto cells = split_csv_line(line);
    auto parse = [&](std::size_t col) {
      if (col >= cells.size())
        throw ValidationError("load_csv: " + path + ": row " + std::to_string(line_no) + ", column '" +
                              header[col] + "': missing cell");
      const std::string s = trim(cells[col]);
      double v = 0.0;
      auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc() || p != s.data() + s.size() || s.empty() || !std::isfinite(v))
        throw ValidationError("load_csv: " + path + ": row " + std::to_string(line_no) + ", column '" +
                              header[col] + "': non-numeric value '" + s + "'");
      return v;
    };
    std::vector<double> x, y;
    for (auto j : fidx) x.push_back(parse(j));
    for (auto j : oidx) y.push_back(parse(j));
    xs.push_back(std::move(x));
    ys.push_back(std::move(y));
  }
  if (xs.empty()) throw ValidationError("load_csv: " + path + ": no data rows");

  Dataset ds;
  ds.X.resize(static_cast<Eigen::Index>(xs.size()), static_cast<Eigen::Index>(fidx.size()));
  ds.Y.resize(static_cast<Eigen::Index>(xs.size()), static_cast<Eigen::Index>(oidx.size()));
  for (std::size_t i = 0; i < xs.size(); ++i) {
    for (std::size_t j = 0; j < fidx.size(); ++j) ds.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = xs[i][j];
    for (std::size_t j = 0; j < oidx.size(); ++j) ds.Y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = ys[i][j];
  }
  return ds;
}

double prescriptiveness(double loss_policy, double loss_erm, double loss_oracle) {
  const double denom = loss_erm - loss_oracle;
  if (denom == 0.0) throw RuntimeFailure("prescriptiveness: ERM loss equals oracle loss (degenerate benchmark)");
  return (1.0 - (loss_policy - loss_oracle) / denom) * 100.0;
}

}  // namespace csdro
