#include "hvq/hidden.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <fmt/format.h>
#include <gsl/gsl_integration.h>

#include "hvq/errors.hpp"

namespace hvq {

namespace {

constexpr double kSpan = 6.0;  // log-normal nodes cover +-6 sigma

void check_hbar(double hbar) {
  if (!(hbar > 0.0) || !std::isfinite(hbar)) throw InvalidArgument("hbar must be positive");
}

// Magnitudes (ascending) -> signed nodes, ascending in lambda.
std::vector<LambdaNode> mirror(const std::vector<LambdaNode>& mags) {
  std::vector<LambdaNode> out;
  out.reserve(2 * mags.size());
  for (auto it = mags.rbegin(); it != mags.rend(); ++it) out.push_back({-it->lambda, 0.5 * it->weight});
  for (const auto& m : mags) out.push_back({m.lambda, 0.5 * m.weight});
  return out;
}

}  // namespace

LambdaDistribution LambdaDistribution::binary(double hbar) {
  check_hbar(hbar);
  return LambdaDistribution(Kind::binary, hbar);
}

LambdaDistribution LambdaDistribution::lognormal(double sigma, double hbar) {
  check_hbar(hbar);
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw InvalidArgument("sigma must be non-negative");
  LambdaDistribution d(Kind::lognormal, hbar);
  d.sigma_ = sigma;
  return d;
}

LambdaDistribution LambdaDistribution::table(std::vector<std::pair<double, double>> rows, double hbar) {
  check_hbar(hbar);
  if (rows.empty()) throw InvalidArgument("table distribution needs at least one row");
  double total = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto [mag, w] = rows[i];
    if (!(mag > 0.0) || !std::isfinite(mag))
      throw InvalidArgument(fmt::format("table row {}: |lambda| must be positive", i));
    if (!(w >= 0.0) || !std::isfinite(w))
      throw InvalidArgument(fmt::format("table row {}: weight must be non-negative", i));
    total += w;
  }
  if (!(total > 0.0)) throw InvalidArgument("table weights sum to zero");
  std::stable_sort(rows.begin(), rows.end(), [](auto& a, auto& b) { return a.first < b.first; });
  for (auto& r : rows) r.second /= total;
  LambdaDistribution d(Kind::table, hbar);
  d.rows_ = std::move(rows);
  return d;
}

std::string LambdaDistribution::describe() const {
  switch (kind_) {
    case Kind::binary: return fmt::format("binary(hbar={})", hbar_);
    case Kind::lognormal: return fmt::format("lognormal(sigma={}, hbar={})", sigma_, hbar_);
    case Kind::table: return fmt::format("table({} rows, hbar={})", rows_.size(), hbar_);
  }
  return {};
}

std::vector<LambdaNode> LambdaDistribution::magnitudes(std::size_t n) const {
  if (n == 0) throw InvalidArgument("quadrature needs at least one node");
  std::vector<LambdaNode> mags;
  switch (kind_) {
    case Kind::binary: mags.push_back({hbar_, 1.0}); break;
    case Kind::table: {
      for (const auto& [m, w] : rows_) {
        if (!mags.empty() && mags.back().lambda == m) mags.back().weight += w;
        else mags.push_back({m, w});
      }
      break;
    }
    case Kind::lognormal: {
      if (sigma_ == 0.0 || n == 1) {
        mags.push_back({hbar_, 1.0});
        break;
      }
      gsl_integration_glfixed_table* t = gsl_integration_glfixed_table_alloc(n);
      if (t == nullptr) throw NumericalError("Gauss-Legendre table allocation failed");
      const double half = kSpan * sigma_;
      double total = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        double u = 0.0, w = 0.0;
        gsl_integration_glfixed_point(-half, half, i, &u, &w, t);
        const double z = u / sigma_;
        const double density = std::exp(-0.5 * z * z) / (sigma_ * std::sqrt(2.0 * M_PI));
        mags.push_back({hbar_ * std::exp(u), w * density});
        total += w * density;
      }
      gsl_integration_glfixed_table_free(t);
      std::sort(mags.begin(), mags.end(), [](auto& a, auto& b) { return a.lambda < b.lambda; });
      for (auto& m : mags) m.weight /= total;
      break;
    }
  }
  const double total = std::accumulate(mags.begin(), mags.end(), 0.0,
                                       [](double s, const LambdaNode& m) { return s + m.weight; });
  for (auto& m : mags) m.weight /= total;
  return mags;
}

std::vector<LambdaNode> LambdaDistribution::quadrature_nodes(std::size_t n) const {
  return mirror(magnitudes(n));
}

std::vector<double> LambdaDistribution::sample(std::size_t n, std::uint64_t seed) const {
  if (n == 0) throw InvalidArgument("sample size must be at least 1");
  std::mt19937_64 rng(seed);
  std::vector<double> out(n);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> weights;
  for (const auto& r : rows_) weights.push_back(r.second);
  std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
  for (auto& x : out) {
    const bool negative = (rng() >> 63) != 0;
    double mag = hbar_;
    if (kind_ == Kind::lognormal) mag = hbar_ * std::exp(sigma_ * normal(rng));
    else if (kind_ == Kind::table) mag = rows_[pick(rng)].first;
    x = negative ? -mag : mag;
  }
  return out;
}

double LambdaDistribution::abs_mean() const {
  switch (kind_) {
    case Kind::binary: return hbar_;
    case Kind::lognormal: return hbar_ * std::exp(0.5 * sigma_ * sigma_);
    case Kind::table: {
      double s = 0.0;
      for (const auto& [m, w] : rows_) s += w * m;
      return s;
    }
  }
  return 0.0;
}

double LambdaDistribution::second_moment() const {
  switch (kind_) {
    case Kind::binary: return hbar_ * hbar_;
    case Kind::lognormal: return hbar_ * hbar_ * std::exp(2.0 * sigma_ * sigma_);
    case Kind::table: {
      double s = 0.0;
      for (const auto& [m, w] : rows_) s += w * m * m;
      return s;
    }
  }
  return 0.0;
}

double LambdaDistribution::abs_variance() const {
  if (kind_ == Kind::binary) return 0.0;
  if (kind_ == Kind::lognormal) {
    const double s2 = sigma_ * sigma_;
    return hbar_ * hbar_ * std::exp(s2) * std::expm1(s2);
  }
  const double m = abs_mean();
  double s = 0.0;
  for (const auto& [x, w] : rows_) s += w * (x - m) * (x - m);
  return s;
}

}  // namespace hvq
