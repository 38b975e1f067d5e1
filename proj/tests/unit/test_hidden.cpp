#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "hvq/errors.hpp"
#include "hvq/hidden.hpp"

using namespace hvq;

namespace {

/// E[|lambda|^k] of the log-normal law by adaptive quadrature over |lambda|.
double lognormal_moment(double sigma, double hbar, int k) {
  auto pdf = [&](double x) {
    const double z = std::log(x / hbar) / sigma;
    return std::exp(-0.5 * z * z) / (x * sigma * std::sqrt(2.0 * std::numbers::pi));
  };
  const double lo = hbar * std::exp(-12.0 * sigma), hi = hbar * std::exp(12.0 * sigma);
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
      [&](double x) { return std::pow(x, k) * pdf(x); }, lo, hi, 15, 1e-14);
}

std::vector<LambdaDistribution> kinds() {
  return {LambdaDistribution::binary(1.3), LambdaDistribution::lognormal(0.25, 0.9),
          LambdaDistribution::lognormal(0.0), LambdaDistribution::table({{0.5, 1.0}, {1.0, 2.0}, {2.0, 1.0}}, 1.0)};
}

}  // namespace

TEST_CASE("binary law has two nodes at plus and minus hbar") {
  const auto nodes = LambdaDistribution::binary(1.0).quadrature_nodes(7);
  REQUIRE(nodes.size() == 2);
  CHECK(nodes[0].lambda == -1.0);
  CHECK(nodes[0].weight == 0.5);
  CHECK(nodes[1].lambda == 1.0);
  CHECK(nodes[1].weight == 0.5);
}

TEST_CASE("every law is unbiased with paired nodes") {
  for (const auto& d : kinds()) {
    const auto nodes = d.quadrature_nodes(33);
    double first = 0.0, third = 0.0, second = 0.0, total = 0.0;
    for (const auto& n : nodes) {
      first += n.weight * n.lambda;
      third += n.weight * n.lambda * n.lambda * n.lambda;
      second += n.weight * n.lambda * n.lambda;
      total += n.weight;
      CHECK(n.lambda != 0.0);
      CHECK(n.weight > 0.0);
    }
    CHECK(std::abs(first) < 1e-12);
    CHECK(std::abs(third) < 1e-12);
    for (std::size_t i = 0; i < nodes.size() / 2; ++i) {
      const auto& lo = nodes[i];
      const auto& hi = nodes[nodes.size() - 1 - i];
      CHECK(lo.weight * lo.lambda + hi.weight * hi.lambda == 0.0);
      CHECK(lo.weight * lo.lambda * lo.lambda * lo.lambda + hi.weight * hi.lambda * hi.lambda * hi.lambda == 0.0);
    }
    CHECK(second > 0.0);
    CHECK(std::abs(total - 1.0) < 1e-12);
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      CHECK(nodes[i].lambda == -nodes[nodes.size() - 1 - i].lambda);
      CHECK(nodes[i].weight == nodes[nodes.size() - 1 - i].weight);
    }
    CHECK(std::is_sorted(nodes.begin(), nodes.end(), [](auto& a, auto& b) { return a.lambda < b.lambda; }));
  }
}

TEST_CASE("binary second moment is exactly hbar squared") {
  const auto d = LambdaDistribution::binary(1.7);
  double m2 = 0.0;
  for (const auto& n : d.quadrature_nodes(1)) m2 += n.weight * n.lambda * n.lambda;
  CHECK(m2 == 1.7 * 1.7);
  CHECK(d.second_moment() == 1.7 * 1.7);
  CHECK(d.abs_variance() == 0.0);
}

TEST_CASE("log-normal quadrature reproduces the mean of |lambda|") {
  const double sigma = 0.1;
  double mean = 0.0;
  for (const auto& n : LambdaDistribution::lognormal(sigma).quadrature_nodes(64)) mean += n.weight * std::abs(n.lambda);
  CHECK(std::abs(mean - std::exp(sigma * sigma / 2)) < 1e-8);
  CHECK(std::abs(mean - lognormal_moment(sigma, 1.0, 1)) < 1e-8);
}

TEST_CASE("log-normal closed-form moments agree with direct integration") {
  for (double sigma : {0.05, 0.1, 0.2, 0.5}) {
    const auto d = LambdaDistribution::lognormal(sigma, 1.4);
    const double m1 = lognormal_moment(sigma, 1.4, 1), m2 = lognormal_moment(sigma, 1.4, 2);
    CHECK(d.abs_mean() == doctest::Approx(m1).epsilon(1e-11));
    CHECK(d.second_moment() == doctest::Approx(m2).epsilon(1e-11));
    CHECK(d.abs_variance() == doctest::Approx(m2 - m1 * m1).epsilon(1e-8));
  }
}

TEST_CASE("log-normal median sits at hbar and sigma zero is a point mass") {
  const auto mags = LambdaDistribution::lognormal(0.3, 2.0).magnitudes(32);
  double below = 0.0;
  for (const auto& m : mags)
    if (m.lambda < 2.0) below += m.weight;
  CHECK(below == doctest::Approx(0.5).epsilon(1e-12));
  const auto point = LambdaDistribution::lognormal(0.0, 2.0).quadrature_nodes(16);
  REQUIRE(point.size() == 2);
  CHECK(point[1].lambda == 2.0);
}

TEST_CASE("table law normalizes weights and rejects non-positive magnitudes") {
  const auto d = LambdaDistribution::table({{2.0, 3.0}, {1.0, 1.0}});
  const auto mags = d.magnitudes(1);
  REQUIRE(mags.size() == 2);
  CHECK(mags[0].lambda == 1.0);
  CHECK(mags[0].weight == 0.25);
  CHECK(mags[1].weight == 0.75);
  CHECK(d.abs_mean() == doctest::Approx(1.75));
  CHECK_THROWS_AS(LambdaDistribution::table({{0.0, 1.0}}), InvalidArgument);
  CHECK_THROWS_AS(LambdaDistribution::table({{-1.0, 1.0}}), InvalidArgument);
  CHECK_THROWS_AS(LambdaDistribution::table({}), InvalidArgument);
  CHECK_THROWS_AS(LambdaDistribution::lognormal(-0.1), InvalidArgument);
  CHECK_THROWS_AS(LambdaDistribution::binary(0.0), InvalidArgument);
}

TEST_CASE("binary sampling is fair and takes only plus and minus hbar") {
  const auto s = LambdaDistribution::binary(1.0).sample(1000000, 42);
  std::size_t plus = 0;
  for (double v : s) {
    CHECK((v == 1.0 || v == -1.0));
    plus += v > 0;
  }
  CHECK(std::abs(static_cast<double>(plus) / 1e6 - 0.5) < 0.002);
}

TEST_CASE("sampling is deterministic for a fixed seed") {
  const auto d = LambdaDistribution::lognormal(0.3);
  CHECK(d.sample(1000, 9) == d.sample(1000, 9));
  CHECK(d.sample(1000, 9) != d.sample(1000, 10));
}

TEST_CASE("nearly degenerate log-normal samples cluster at hbar") {
  for (double v : LambdaDistribution::lognormal(1e-6, 1.0).sample(10000, 3)) CHECK(std::abs(std::abs(v) - 1.0) < 1e-5);
}

TEST_CASE("Monte Carlo and quadrature means agree") {
  for (const auto& d : kinds()) {
    const auto s = d.sample(200000, 5);
    double m = 0.0, m2 = 0.0, sign = 0.0;
    for (double v : s) {
      m += std::abs(v);
      m2 += v * v;
      sign += v > 0 ? 1.0 : -1.0;
    }
    m /= static_cast<double>(s.size());
    m2 /= static_cast<double>(s.size());
    const double se = std::sqrt(std::max(m2 - m * m, 0.0) / static_cast<double>(s.size()));
    double quad = 0.0;
    for (const auto& n : d.quadrature_nodes(64)) quad += n.weight * std::abs(n.lambda);
    CHECK(std::abs(m - quad) <= 4.0 * se + 1e-12);
    CHECK(std::abs(sign) / static_cast<double>(s.size()) < 0.01);
  }
}
