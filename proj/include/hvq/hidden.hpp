#pragma once

// The hidden-variable law P(lambda). Only |lambda| is parameterized; the sign
// is an independent fair coin, so P(lambda) = P(-lambda) holds structurally.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace hvq {

struct LambdaNode {
  double lambda = 0.0;
  double weight = 0.0;
};

class LambdaDistribution {
 public:
  enum class Kind { binary, lognormal, table };

  /// |lambda| = hbar.
  static LambdaDistribution binary(double hbar = 1.0);
  /// log|lambda| ~ N(log hbar, sigma^2): the median of |lambda| is hbar.
  /// sigma = 0 is the point mass at hbar.
  static LambdaDistribution lognormal(double sigma, double hbar = 1.0);
  /// Rows of (|lambda|, weight); weights are normalized.
  static LambdaDistribution table(std::vector<std::pair<double, double>> rows, double hbar = 1.0);

  Kind kind() const noexcept { return kind_; }
  double hbar() const noexcept { return hbar_; }
  double sigma() const noexcept { return sigma_; }
  const std::vector<std::pair<double, double>>& rows() const noexcept { return rows_; }
  std::string describe() const;

  /// Signed nodes in ascending lambda with paired weights summing to 1.
  /// Log-normal: n Gauss-Legendre nodes in log|lambda| over +-6 sigma,
  /// mirrored (2n nodes). Binary ignores n.
  std::vector<LambdaNode> quadrature_nodes(std::size_t n) const;

  /// Distinct |lambda| values with their total weight, ascending.
  std::vector<LambdaNode> magnitudes(std::size_t n) const;

  std::vector<double> sample(std::size_t n, std::uint64_t seed) const;

  /// Exact moments of |lambda| under the (untruncated) law.
  double abs_mean() const;
  double abs_variance() const;
  double second_moment() const;

 private:
  LambdaDistribution(Kind kind, double hbar) : kind_(kind), hbar_(hbar) {}

  Kind kind_;
  double hbar_;
  double sigma_ = 0.0;
  std::vector<std::pair<double, double>> rows_;
};

}  // namespace hvq
