#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace fusemap {

using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

/// Base class for all library errors. Subclasses map onto the CLI exit
/// code contract: validation -> 2, numerical -> 3, io -> 4.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Seeded RNG used everywhere; no global randomness.
using Rng = std::mt19937_64;

inline double geometric_mean(const Eigen::VectorXd& v) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (!(v[i] > 0.0)) throw NumericalError("geometric_mean: non-positive entry");
    acc += std::log(v[i]);
  }
  return std::exp(acc / static_cast<double>(v.size()));
}

inline double log_sum_exp(const std::vector<double>& logs) {
  if (logs.empty()) throw NumericalError("log_sum_exp: empty input");
  double m = logs[0];
  for (double v : logs) m = std::max(m, v);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double v : logs) s += std::exp(v - m);
  return m + std::log(s);
}

inline Eigen::VectorXd standard_normal(int n, Rng& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Eigen::VectorXd z(n);
  for (int i = 0; i < n; ++i) z[i] = nd(rng);
  return z;
}

/// Standard normal CDF.
inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

/// Fixed-width formatting for all emitted tables; keeps seeded runs
/// byte-identical across invocations.
std::string format_double(double v);

}  // namespace fusemap
