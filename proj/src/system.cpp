#include "hvq/system.hpp"

#include <cmath>

#include <fmt/format.h>

#include "hvq/errors.hpp"

namespace hvq {

namespace {

constexpr std::size_t kMaxDims = 8;

// In-place Cholesky of a small symmetric matrix; false if not positive definite.
bool positive_definite(std::span<double> m, std::size_t n) {
  for (std::size_t j = 0; j < n; ++j) {
    double d = m[j * n + j];
    for (std::size_t k = 0; k < j; ++k) d -= m[j * n + k] * m[j * n + k];
    if (!(d > 0.0)) return false;
    const double l = std::sqrt(d);
    m[j * n + j] = l;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = m[i * n + j];
      for (std::size_t k = 0; k < j; ++k) s -= m[i * n + k] * m[j * n + k];
      m[i * n + j] = s / l;
    }
  }
  return true;
}

}  // namespace

ClassicalSystem::ClassicalSystem(std::vector<std::string> coordinates,
                                 std::vector<std::vector<expr::Expression>> metric_inverse,
                                 std::vector<expr::Expression> vector_potential,
                                 expr::Expression scalar_potential)
    : coordinates_(std::move(coordinates)),
      vector_potential_(std::move(vector_potential)),
      scalar_potential_(std::move(scalar_potential)) {
  const std::size_t n = coordinates_.size();
  if (n == 0 || n > kMaxDims) throw InvalidArgument("system needs between 1 and 8 coordinates");
  if (metric_inverse.size() != n) throw InvalidArgument("metric_inverse must have one row per coordinate");
  if (vector_potential_.size() != n)
    throw InvalidArgument("vector_potential must have one entry per coordinate");
  metric_.reserve(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    if (metric_inverse[i].size() != n)
      throw InvalidArgument(fmt::format("metric_inverse row {} must have {} entries", i, n));
    for (auto& e : metric_inverse[i]) metric_.push_back(std::move(e));
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (!(metric_[i * n + j] == metric_[j * n + i]))
        throw InvalidArgument(fmt::format("metric_inverse is not symmetric at ({}, {})", i, j));
  auto check = [&](const expr::Expression& e, const std::string& what) {
    if (e.coordinates() != coordinates_)
      throw InvalidArgument(what + " is declared over different coordinates");
    if (e.depends_on_time()) throw InvalidArgument(what + " must not depend on t");
  };
  for (std::size_t k = 0; k < metric_.size(); ++k)
    check(metric_[k], fmt::format("metric_inverse({}, {})", k / n, k % n));
  for (std::size_t i = 0; i < n; ++i) check(vector_potential_[i], fmt::format("vector_potential({})", i));
  check(scalar_potential_, "scalar_potential");
}

ClassicalSystem ClassicalSystem::parse(const std::vector<std::string>& coordinates,
                                       const std::vector<std::vector<std::string>>& metric_inverse,
                                       const std::vector<std::string>& vector_potential,
                                       const std::string& scalar_potential) {
  std::vector<std::vector<expr::Expression>> g;
  for (const auto& row : metric_inverse) {
    auto& out = g.emplace_back();
    for (const auto& s : row) out.push_back(expr::Expression::parse(s, coordinates));
  }
  std::vector<expr::Expression> a;
  for (const auto& s : vector_potential) a.push_back(expr::Expression::parse(s, coordinates));
  return ClassicalSystem(coordinates, std::move(g), std::move(a),
                         expr::Expression::parse(scalar_potential, coordinates));
}

ClassicalSystem ClassicalSystem::cartesian(const std::vector<std::string>& coordinates, double mass,
                                           const std::string& scalar_potential) {
  if (!(mass > 0.0)) throw InvalidArgument("mass must be positive");
  const std::size_t n = coordinates.size();
  std::vector<std::vector<expr::Expression>> g(n);
  std::vector<expr::Expression> a;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j)
      g[i].push_back(expr::Expression::constant(i == j ? 1.0 / mass : 0.0, coordinates));
    a.push_back(expr::Expression::constant(0.0, coordinates));
  }
  return ClassicalSystem(coordinates, std::move(g), std::move(a),
                         expr::Expression::parse(scalar_potential, coordinates));
}

bool ClassicalSystem::coefficients(std::span<const double> q, std::span<double> g,
                                   std::span<double> a, double& v) const noexcept {
  const std::size_t n = dims();
  for (std::size_t k = 0; k < n * n; ++k)
    if (metric_[k].evaluate(q, 0.0, g[k]) != expr::EvalStatus::ok) return false;
  for (std::size_t i = 0; i < n; ++i)
    if (vector_potential_[i].evaluate(q, 0.0, a[i]) != expr::EvalStatus::ok) return false;
  return scalar_potential_.evaluate(q, 0.0, v) == expr::EvalStatus::ok;
}

bool ClassicalSystem::hamiltonian(std::span<const double> q, std::span<const double> p,
                                  double& out) const noexcept {
  const std::size_t n = dims();
  double g[kMaxDims * kMaxDims], a[kMaxDims], v = 0.0;
  if (!coefficients(q, std::span<double>(g, n * n), std::span<double>(a, n), v)) return false;
  double kinetic = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) kinetic += g[i * n + j] * (p[i] - a[i]) * (p[j] - a[j]);
  out = 0.5 * kinetic + v;
  return std::isfinite(out);
}

double ClassicalSystem::hamiltonian(std::span<const double> q, std::span<const double> p) const {
  double out = 0.0;
  if (!hamiltonian(q, p, out)) throw DomainError("Hamiltonian evaluation failed", 0);
  return out;
}

bool ClassicalSystem::velocity(std::span<const double> q, std::span<const double> p,
                               std::span<double> out) const noexcept {
  const std::size_t n = dims();
  double g[kMaxDims * kMaxDims], a[kMaxDims], v = 0.0;
  if (!coefficients(q, std::span<double>(g, n * n), std::span<double>(a, n), v)) return false;
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * (p[j] - a[j]);
    out[i] = s;
  }
  return true;
}

GridCoefficients evaluate_coefficients(const ClassicalSystem& system, const Grid& grid) {
  const std::size_t n = system.dims();
  if (grid.dims() != n)
    throw InvalidArgument(fmt::format("system has {} coordinates but grid has {} axes", n, grid.dims()));
  GridCoefficients c{grid, {}, {}, expr::evaluate_on_grid(system.scalar_potential(), grid, 0.0), {}};
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      c.metric.push_back(expr::evaluate_on_grid(system.metric_inverse(i, j), grid, 0.0));
      c.metric_zero.push_back(system.metric_inverse(i, j).is_zero());
    }
  for (std::size_t i = 0; i < n; ++i)
    c.vector_potential.push_back(expr::evaluate_on_grid(system.vector_potential(i), grid, 0.0));

  std::vector<double> m(n * n);
  for (std::size_t k = 0; k < grid.size(); ++k) {
    for (std::size_t e = 0; e < n * n; ++e) m[e] = c.metric[e][k];
    if (!positive_definite(m, n)) throw DomainError("inverse metric is not positive definite", k);
  }
  return c;
}

}  // namespace hvq
