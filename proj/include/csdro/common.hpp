#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace csdro {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Rng = std::mt19937_64;

// Bad input or configuration. The CLI maps it to exit code 1.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Numerical or IO failure at run time. The CLI maps it to exit code 2.
class RuntimeFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Independent stream `stream` derived from a run seed.
Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0);

double sigmoid(double z);

// log(sum exp(v)) with a max shift; -inf for empty input.
double log_sum_exp(std::span<const double> v);
// log((1/n) sum exp(v)).
double log_mean_exp(std::span<const double> v);
// softmax(v) written into out (same length).
void softmax(std::span<const double> v, std::span<double> out);

inline std::span<const double> as_span(const Vec& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }
inline std::span<double> as_span(Vec& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

// Shortest round-trip decimal representation.
std::string format_double(double v);

}  // namespace csdro
