#include <doctest.h>

#include <cmath>
#include <numbers>

#include "helpers.hpp"
#include "hvq/verify.hpp"

using namespace hvq;
using hvq::test::gaussian;
using hvq::test::tabulate;
using hvq::test::tabulate_complex;

namespace {

double identity_max(double (*omega)(double), std::size_t n, double half = 6.0) {
  const Grid g = Grid::line(-half, half, n);
  return identity_check(tabulate(g, [&](auto q) { return omega(q[0]); })).max_residual;
}

double gauss2(double x) { return std::exp(-x * x); }
double quartic(double x) { return std::exp(-x * x * x * x); }

/// Harmonic coherent state (m = k = hbar = 1) with amplitude a at time t.
ComplexField coherent(const Grid& g, double a, double t) {
  const double q = a * std::cos(t), p = -a * std::sin(t);
  return tabulate_complex(g, [&](auto x) {
    const double d = x[0] - q;
    return std::pow(std::numbers::pi, -0.25) * std::polar(std::exp(-d * d / 2.0), p * x[0] - t / 2.0 - q * p / 2.0);
  });
}

ComplexField plane_wave(const Grid& g, double k, double t) {
  return tabulate_complex(g, [&](auto x) { return std::polar(1.0 / std::sqrt(2.0 * std::numbers::pi), k * x[0] - k * k * t / 2.0); });
}

}  // namespace

TEST_CASE("identity residual converges at second order") {
  for (auto [f, half] : {std::pair{gauss2, 6.0}, std::pair{quartic, 2.5}}) {
    const double coarse = identity_max(f, 257, half), fine = identity_max(f, 513, half),
                 finer = identity_max(f, 1025, half);
    CHECK(coarse / fine == doctest::Approx(4.0).epsilon(0.125));
    CHECK(fine / finer == doctest::Approx(4.0).epsilon(0.125));
  }
}

TEST_CASE("identity residual of exp(-q^2) stays below 1e-6 at 512 nodes on [-6, 6]" * doctest::should_fail()) {
  // The relative stencil error grows like q^4 dx^2 towards the ends of the
  // interval, where exp(-q^2) is ~1e-16; at this resolution the maximum is O(1).
  CHECK(identity_max(gauss2, 512) < 1e-6);
}

TEST_CASE("identity terms vanish for a constant field") {
  const Grid g({Axis{-1.0, 1.0, 21}, Axis{-1.0, 1.0, 21}});
  const auto r = identity_check(tabulate(g, [](auto) { return 3.0; }));
  CHECK(r.fields.size() == 3);
  CHECK(r.max_residual == 0.0);
}

TEST_CASE("identity holds for arbitrary smooth positive fields in 2D") {
  auto field = [](std::size_t n) {
    const Grid g({Axis{-1.0, 1.0, n}, Axis{-1.0, 1.0, n}});
    return identity_check(tabulate(g, [](auto q) { return 2.0 + std::sin(q[0] + 2.0 * q[1]) * std::cos(q[0]); }));
  };
  const auto coarse = field(41), fine = field(81);
  CHECK(coarse.max_residual / fine.max_residual == doctest::Approx(4.0).epsilon(0.15));
}

TEST_CASE("identity check rejects non-positive fields") {
  const Grid g = Grid::line(-1.0, 1.0, 11);
  auto w = tabulate(g, [](auto q) { return q[0] * q[0]; });
  CHECK_THROWS_AS(identity_check(w), DomainError);
}

TEST_CASE("stationary ground state satisfies the HJM equation") {
  // the quantum-potential stencil error grows like x^4 dx^2 up to the
  // support edge near |x| = 3.7, which sets the resolution
  const Grid g = Grid::line(-10.0, 10.0, 6001);
  const auto sys = ClassicalSystem::cartesian({"x"}, 1.0, "0.5*x^2");
  const double dt = 1e-3;
  const auto psi0 = tabulate_complex(g, [](auto x) { return complex(std::exp(-x[0] * x[0] / 2.0), 0.0); });
  ComplexField psi1 = psi0;
  for (auto& v : psi1.values()) v *= std::polar(1.0, -0.5 * dt);
  CHECK(hjm_residual(psi0, psi1, dt, sys, 1.0).max_residual < 1e-4);
}

TEST_CASE("plane waves satisfy both equations to rounding") {
  const Grid g = Grid::line(0.0, 2.0 * std::numbers::pi, 128, Boundary::periodic);
  const auto sys = ClassicalSystem::cartesian({"x"}, 1.0);
  const double dt = 0.01;
  const auto psi0 = plane_wave(g, 3.0, 0.0), psi1 = plane_wave(g, 3.0, dt);
  CHECK(hjm_residual(psi0, psi1, dt, sys, 1.0).max_residual < 1e-10);
  CHECK(continuity_residual(psi0, psi1, dt, sys, 1.0).max_residual < 1e-12);
}

TEST_CASE("harmonic coherent state satisfies HJM and continuity") {
  const Grid g = Grid::line(-10.0, 10.0, 1601);
  const auto sys = ClassicalSystem::cartesian({"x"}, 1.0, "0.5*x^2");
  const double dt = 1e-3, t = 0.7;
  const auto psi0 = coherent(g, 2.0, t), psi1 = coherent(g, 2.0, t + dt);
  CHECK(continuity_residual(psi0, psi1, dt, sys, 1.0).max_residual < 1e-4);
  CHECK(hjm_residual(psi0, psi1, dt, sys, 1.0).max_residual < 1e-3);
}

TEST_CASE("residuals of closed-form states converge at second order") {
  const auto sys = ClassicalSystem::cartesian({"x"}, 1.0, "0.5*x^2");
  auto residuals = [&](std::size_t n, double dt) {
    const Grid g = Grid::line(-10.0, 10.0, n);
    const auto psi0 = coherent(g, 2.0, 0.7), psi1 = coherent(g, 2.0, 0.7 + dt);
    return std::pair{hjm_residual(psi0, psi1, dt, sys, 1.0).max_residual,
                     continuity_residual(psi0, psi1, dt, sys, 1.0).max_residual};
  };
  const auto [h1, c1] = residuals(801, 0.01);
  const auto [h2, c2] = residuals(1601, 0.005);
  CHECK(h1 / h2 == doctest::Approx(4.0).epsilon(0.125));
  CHECK(c1 / c2 == doctest::Approx(4.0).epsilon(0.125));
}

TEST_CASE("propagated free Gaussian: residuals converge at second order") {
  const auto sys = ClassicalSystem::cartesian({"x"}, 1.0);
  auto residuals = [&](std::size_t n, double dt) {
    const Grid g = Grid::line(-20.0, 20.0, n);
    const auto frames = propagate(gaussian(g, 0.0, 1.0, 0.5), sys, 1.0, {1.0, dt, 1});
    const auto& a = frames[frames.size() - 2].psi;
    const auto& b = frames.back().psi;
    return std::pair{hjm_residual(a, b, dt, sys, 1.0).max_residual, continuity_residual(a, b, dt, sys, 1.0).max_residual};
  };
  const auto [h1, c1] = residuals(401, 0.02);
  const auto [h2, c2] = residuals(801, 0.01);
  CHECK(h1 / h2 == doctest::Approx(4.0).epsilon(0.25));
  CHECK(c1 / c2 == doctest::Approx(4.0).epsilon(0.25));
}

TEST_CASE("a single corrupted node is caught and located") {
  const Grid g = Grid::line(-10.0, 10.0, 801);
  const auto sys = ClassicalSystem::cartesian({"x"}, 1.0, "0.5*x^2");
  const double dt = 1e-3;
  const auto psi0 = coherent(g, 2.0, 0.0);
  auto psi1 = coherent(g, 2.0, dt);
  const double clean = continuity_residual(psi0, psi1, dt, sys, 1.0).max_residual;
  psi1[450] *= 1.0 + 1e-6;
  const auto r = continuity_residual(psi0, psi1, dt, sys, 1.0);
  CHECK(r.max_residual > 100.0 * clean);
  CHECK(r.argmax == 450);
}

TEST_CASE("residual mask drops ends and low-amplitude neighbourhoods") {
  const Grid g = Grid::line(0.0, 1.0, 21);
  auto amp = tabulate(g, [](auto) { return 1.0; });
  amp[10] = 1e-6;
  const auto mask = residual_mask(amp, {3, 1e-3, 2});
  for (std::size_t k = 0; k < 21; ++k) {
    const bool dropped = k < 3 || k > 17 || (k >= 8 && k <= 12);
    CHECK(static_cast<bool>(mask[k]) == !dropped);
  }
}

TEST_CASE("sign symmetry is structural") {
  const Grid g = Grid::line(-8.0, 8.0, 161);
  const auto sys = ClassicalSystem::parse({"x"}, {{"1/(1+0.2*x^2)"}}, {"0.3*x"}, "0.5*x^2");
  const auto psi0 = gaussian(g, 1.0, 1.0, 0.5);
  for (double l : {1.0, 0.7}) {
    const auto r = sign_symmetry_check(propagate(psi0, sys, l, {1.0, 0.01, 10}), propagate(psi0, sys, -l, {1.0, 0.01, 10}));
    CHECK(r.symmetric);
    CHECK_FALSE(r.premise_violated);
  }
  const auto other = gaussian(g, 1.1, 1.0, 0.5);
  const auto r = sign_symmetry_check(propagate(psi0, sys, 1.0, {1.0, 0.01, 10}), propagate(other, sys, -1.0, {1.0, 0.01, 10}));
  CHECK_FALSE(r.symmetric);
  CHECK(r.premise_violated);
  CHECK(r.first_mismatch == 0);
}
