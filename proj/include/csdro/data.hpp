#pragma once

#include "csdro/common.hpp"

#include <cstddef>
#include <string>
#include <vector>

namespace csdro {

// Empirical joint sample: row i is (X.row(i), Y.row(i)).
struct Dataset {
  RowMat X;
  RowMat Y;

  std::size_t size() const { return static_cast<std::size_t>(X.rows()); }
  int d_x() const { return static_cast<int>(X.cols()); }
  int d_y() const { return static_cast<int>(Y.cols()); }

  // Throws ValidationError on row-count mismatch, zero dims or non-finite entries.
  void validate() const;
  Dataset subset(const std::vector<std::size_t>& rows) const;
};

// Rows sharing a bit-identical covariate vector, with empirical conditional frequencies.
struct Group {
  Vec x;
  RowMat outcomes;   // distinct y values, one per row
  Vec probs;         // p(y | x), sums to 1
  std::size_t count = 0;  // rows of the source dataset in this group
};

struct GroupedDataset {
  std::vector<Group> groups;
  std::vector<std::size_t> row_group;  // dataset row -> group index
  int d_x = 0;
  int d_y = 0;

  std::size_t rows() const { return row_group.size(); }
};

GroupedDataset group_conditionals(const Dataset& ds);

struct NewsvendorGenConfig {
  std::size_t N = 200;
  int d_x = 5;
  double c_amp = 1.7;
  double h = 0.6;
  double b = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct InventoryGenConfig {
  std::size_t N = 200;
  int d_x = 5;
  std::uint64_t seed = 0;

  void validate() const;
};

struct PortfolioGenConfig {
  std::size_t N = 1000;
  int d_x = 5;
  int d_y = 10;
  std::uint64_t seed = 0;

  void validate() const;
};

double newsvendor_f_true(double index, double c_amp);

// Sigma_ij = 0.5^|i-j|.
Mat covariate_covariance(int d_x);

// Data-generating model with its coefficient vector beta fixed at construction.
// draw() can be called repeatedly for train and test samples from one model.
class NewsvendorGenerator {
 public:
  NewsvendorGenerator(int d_x, double c_amp, Rng& model_rng);

  Dataset draw(std::size_t n, Rng& rng) const;
  // y | beta'x = index, by rejection until y >= 0.
  double draw_outcome(double index, Rng& rng) const;
  const Vec& beta() const { return beta_; }

 private:
  int d_x_;
  double c_amp_;
  Vec beta_;
  Mat chol_;
};

class InventoryGenerator {
 public:
  InventoryGenerator(int d_x, Rng& model_rng);

  Dataset draw(std::size_t n, Rng& rng) const;
  Vec draw_outcome(double index, Rng& rng) const;
  const Vec& beta() const { return beta_; }

 private:
  int d_x_;
  Vec beta_;
  Mat chol_;
};

class PortfolioGenerator {
 public:
  PortfolioGenerator(int d_x, int d_y, Rng& model_rng);

  // Rows are consecutive trading days.
  Dataset draw(std::size_t n, Rng& rng) const;

 private:
  int d_x_;
  int d_y_;
  Mat load_;   // d_y x d_x factor loadings
  Vec drift_;
  Vec vol_;
};

// Model from stream 0 of cfg.seed, sample from stream 1.
Dataset generate_newsvendor(const NewsvendorGenConfig& cfg);
Dataset generate_inventory(const InventoryGenConfig& cfg);
Dataset generate_portfolio(const PortfolioGenConfig& cfg);

// Numeric CSV with a header row. Columns are selected by header name.
Dataset load_csv(const std::string& path, const std::vector<std::string>& feature_cols,
                 const std::vector<std::string>& outcome_cols);

// (1 - (loss_policy - loss_oracle) / (loss_erm - loss_oracle)) * 100.
double prescriptiveness(double loss_policy, double loss_erm, double loss_oracle);

}  // namespace csdro
