#include <doctest.h>

#include <cmath>
#include <numbers>

#include "helpers.hpp"
#include "hvq/measurement.hpp"

using namespace hvq;
using hvq::test::gaussian;
using hvq::test::tabulate;

namespace {

MeasurementSetup eigenstate(double l, const LambdaDistribution& dist, const Grid& pointer_grid, double g = 1.0,
                            double t = 1.0) {
  return MeasurementSetup{g, t, {{l, 1.0}}, gaussian(pointer_grid, 0.0, 0.5), dist};
}

}  // namespace

TEST_CASE("classical pointer shift") {
  CHECK(classical_pointer_shift(2.0, 1.0, 1.0) == 2.0);
  CHECK(classical_pointer_shift(0.0, 3.0, 1.5) == 0.0);
  CHECK(classical_pointer_shift(1.7, 0.3, 2.0) == doctest::Approx(2.0 * classical_pointer_shift(1.7, 0.3, 1.0)));
}

TEST_CASE("pointer shift follows the inferred outcome") {
  const Grid g = Grid::line(-10.0, 10.0, 401);
  const auto s = eigenstate(2.0, LambdaDistribution::binary(), g);
  CHECK(pointer_shift(2.0, 1.0, s) == 2.0);
  CHECK(pointer_shift(2.0, -1.0, s) == 2.0);
  CHECK(pointer_shift(2.0, 1.5, s) == 3.0);
  CHECK(pointer_shift(0.0, 1.5, s) == 0.0);
}

TEST_CASE("integer-node shifts translate the packet exactly") {
  const Grid g = Grid::line(-10.0, 10.0, 401);  // spacing 0.05
  const auto s = eigenstate(2.0, LambdaDistribution::binary(), g);
  for (double lambda : {1.0, -1.0, 1.5}) {
    const auto shifted = eigenstate_pointer(2.0, lambda, s);
    const auto n = static_cast<std::ptrdiff_t>(std::lround(2.0 * std::abs(lambda) / 0.05));
    for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(g.size()); ++k) {
      const complex expected = k - n >= 0 ? s.pointer0[static_cast<std::size_t>(k - n)] : complex{};
      CHECK(std::abs(shifted[static_cast<std::size_t>(k)] - expected) <= 1e-10);
    }
  }
  const auto still = eigenstate_pointer(0.0, 1.0, s);
  for (std::size_t k = 0; k < g.size(); ++k) CHECK(still[k] == s.pointer0[k]);
}

TEST_CASE("fractional shifts agree with the translated closed form") {
  const Grid g = Grid::line(-10.0, 10.0, 801);
  auto s = eigenstate(1.0, LambdaDistribution::binary(), g, 0.3337);
  const auto shifted = eigenstate_pointer(1.0, 1.0, s);
  const auto exact = gaussian(g, 0.3337, 0.5);
  double err = 0.0;
  for (std::size_t k = 0; k < g.size(); ++k) err = std::max(err, std::abs(shifted[k] - exact[k]));
  CHECK(err < 1e-5);
}

TEST_CASE("shifts that leave the pointer grid are rejected") {
  const Grid g = Grid::line(-5.0, 5.0, 201);
  const auto s = eigenstate(8.0, LambdaDistribution::binary(), g);
  CHECK_THROWS_AS(eigenstate_pointer(8.0, 1.0, s), InvalidArgument);
}

TEST_CASE("setup validation") {
  const Grid g = Grid::line(-5.0, 5.0, 201);
  auto s = eigenstate(1.0, LambdaDistribution::binary(), g);
  CHECK_NOTHROW(validate_setup(s));
  s.components = {{1.0, 0.7}, {-1.0, 0.7}};
  CHECK_THROWS_AS(validate_setup(s), InvalidArgument);
  s.components = {{1.0, 1.0}};
  for (auto& v : s.pointer0.values()) v *= 1.1;
  CHECK_THROWS_AS(validate_setup(s), InvalidArgument);
}

TEST_CASE("binary eigenstate gives a certain outcome") {
  const Grid g = Grid::line(-10.0, 10.0, 401);
  const auto s = eigenstate(2.0, LambdaDistribution::binary(), g);
  const auto stats = pointer_distribution(s, 8);
  CHECK(stats.inferred_mean == 2.0);
  CHECK(stats.inferred_variance == 0.0);
  const auto expected = density(eigenstate_pointer(2.0, 1.0, s));
  CHECK(hvq::test::max_abs_diff(stats.pointer_density, expected) < 1e-12);
  REQUIRE(stats.peaks.size() == 1);
  CHECK(stats.peaks[0].location == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(stats.peaks[0].inferred == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(std::abs(integrate(stats.pointer_density) - 1.0) < 1e-9);
}

TEST_CASE("binary superposition gives two Born-weighted peaks") {
  const Grid g = Grid::line(-10.0, 10.0, 401);
  const double a = 1.0 / std::numbers::sqrt2;
  MeasurementSetup s{3.0, 1.0, {{1.0, a}, {-1.0, a}}, gaussian(g, 0.0, 0.4), LambdaDistribution::binary()};
  const auto stats = pointer_distribution(s, 8, 1.0);
  REQUIRE(stats.peaks.size() == 2);
  CHECK_FALSE(stats.ambiguous);
  CHECK(stats.peaks[0].location == doctest::Approx(-3.0));
  CHECK(stats.peaks[1].location == doctest::Approx(3.0));
  CHECK(std::abs(stats.peaks[0].mass - 0.5) < 1e-9);
  CHECK(std::abs(stats.peaks[1].mass - 0.5) < 1e-9);
  // direct two-term sum
  const auto left = density(eigenstate_pointer(-1.0, 1.0, s)), right = density(eigenstate_pointer(1.0, 1.0, s));
  for (std::size_t k = 0; k < g.size(); ++k)
    CHECK(stats.pointer_density[k] == doctest::Approx(0.5 * left[k] + 0.5 * right[k]).epsilon(1e-12).scale(1e-300));
  CHECK(std::abs(stats.inferred_mean) < 1e-15);
  CHECK(stats.inferred_variance == doctest::Approx(1.0));
}

TEST_CASE("log-normal broadening matches closed-form moments") {
  const Grid g = Grid::line(-10.0, 30.0, 1601);
  for (double sigma : {0.05, 0.1, 0.2}) {
    CAPTURE(sigma);
    const auto s = eigenstate(2.0, LambdaDistribution::lognormal(sigma), g);
    const auto stats = pointer_distribution(s, 128);
    const double mean = std::exp(sigma * sigma / 2.0);
    const double var = (std::exp(sigma * sigma) - 1.0) * std::exp(sigma * sigma);
    CHECK(std::abs(stats.inferred_mean - 2.0 * mean) < 1e-8);
    CHECK(std::abs(stats.inferred_variance - 4.0 * var) < 1e-8);
    CHECK(std::abs(integrate(stats.pointer_density) - 1.0) < 1e-9);
  }
}

TEST_CASE("inferred mean scales linearly in l and in the coupling") {
  const Grid g = Grid::line(-10.0, 40.0, 2001);
  const auto d = LambdaDistribution::lognormal(0.1);
  const double base = pointer_distribution(eigenstate(1.0, d, g), 32).inferred_mean;
  CHECK(pointer_distribution(eigenstate(3.0, d, g), 32).inferred_mean == doctest::Approx(3.0 * base).epsilon(1e-12));
  // inferred values are in units of l, so g T enters only the pointer position
  const auto wide = pointer_distribution(eigenstate(1.0, d, g, 2.0, 1.5), 32);
  CHECK(wide.inferred_mean == doctest::Approx(base).epsilon(1e-12));
  REQUIRE(!wide.peaks.empty());
  CHECK(wide.peaks[0].location == doctest::Approx(3.0 * base).epsilon(0.02));
}

TEST_CASE("variance grows with sigma") {
  const Grid g = Grid::line(-10.0, 30.0, 801);
  double last = -1.0;
  for (double sigma : {0.0, 0.05, 0.1, 0.2}) {
    const double v = pointer_distribution(eigenstate(2.0, LambdaDistribution::lognormal(sigma), g), 64).inferred_variance;
    CHECK(v >= 0.0);
    CHECK(v > last);
    last = v;
  }
}

TEST_CASE("watershed splits a two-bump density") {
  const Grid g = Grid::line(-6.0, 6.0, 601);
  const auto f = tabulate(g, [](auto q) {
    return 0.25 * std::exp(-(q[0] + 2) * (q[0] + 2) / 0.18) / std::sqrt(0.18 * std::numbers::pi) +
           0.75 * std::exp(-(q[0] - 2) * (q[0] - 2) / 0.18) / std::sqrt(0.18 * std::numbers::pi);
  });
  const auto peaks = find_peaks(f, 0.5);
  REQUIRE(peaks.size() == 2);
  CHECK(peaks[0].location == doctest::Approx(-2.0));
  CHECK(peaks[0].mass == doctest::Approx(0.25).epsilon(1e-6));
  CHECK(peaks[1].mass == doctest::Approx(0.75).epsilon(1e-6));
  CHECK(find_peaks(f, 5.0).size() == 1);
}

namespace {

ScalarField separable_density(const Grid& g) {
  auto rho = tabulate(g, [](auto q) { return std::exp(-q[0] * q[0] / 0.5 - q[1] * q[1] / 0.5); });
  const double total = integrate(rho);
  for (auto& v : rho.values()) v /= total;
  return rho;
}

Grid plane(std::size_t n) {
  return Grid({Axis{-4.0, 4.0, n, Boundary::box}, Axis{-4.0, 4.0, n, Boundary::box}});
}

}  // namespace

TEST_CASE("zero coupling leaves both densities unchanged") {
  const Grid g = plane(64);
  const auto rho = separable_density(g);
  const auto r = position_measurement_check(rho, ScalarField(g), 0.0, 0.5, 0.05);
  CHECK(r.max_difference < 1e-12);
  CHECK(hvq::test::max_abs_diff(r.classical, rho) < 1e-13);
}

TEST_CASE("position measurement: quantum and classical agree and converge") {
  const auto coarse = position_measurement_check(separable_density(plane(64)), ScalarField(plane(64)), 1.0, 0.5, 0.03125);
  const auto fine = position_measurement_check(separable_density(plane(127)), ScalarField(plane(127)), 1.0, 0.5, 0.015625);
  CHECK(coarse.norm_drift < 1e-9);
  CHECK(fine.norm_drift < 1e-9);
  CHECK(fine.solve_residual < 1e-10);
  CHECK(fine.max_difference < coarse.max_difference);
  const double ratio = coarse.max_difference / fine.max_difference;
  CHECK(ratio > 3.0);
  CHECK(ratio < 5.0);
}

TEST_CASE("a narrow column translates by g q1 T") {
  const Grid g = plane(81);  // spacing 0.1
  auto rho = tabulate(g, [](auto q) { return std::abs(q[0] - 1.0) < 1e-9 ? std::exp(-q[1] * q[1] / 0.5) : 0.0; });
  const double total = integrate(rho);
  for (auto& v : rho.values()) v /= total;
  const auto r = position_measurement_check(rho, ScalarField(g), 2.0, 0.5, 0.01);
  double m0 = 0.0, m1 = 0.0;
  for (std::size_t k = 0; k < g.size(); ++k) {
    m0 += r.classical[k];
    m1 += r.classical[k] * g.coordinate(k, 1);
  }
  CHECK(m1 / m0 == doctest::Approx(1.0).epsilon(1e-6));
}
