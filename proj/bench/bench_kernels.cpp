// Serial reference kernels against their OpenMP versions. The thread cap is
// the benchmark argument; HVQ_THREADS is not consulted here.

#include <complex>
#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "hvq/dynamics.hpp"
#include "hvq/kernels.hpp"
#include "hvq/system.hpp"

using namespace hvq;

namespace {

const Grid& plane() {
  static const Grid g({Axis{-4.0, 4.0, 256}, Axis{-4.0, 4.0, 256}});
  return g;
}

const expr::Expression& potential() {
  static const auto e = expr::Expression::parse("exp(-x^2)*cos(3*y) + sqrt(1 + x^2*y^2)", {"x", "y"});
  return e;
}

template <bool Parallel>
void evaluate(benchmark::State& state) {
  kernels::set_thread_limit(static_cast<int>(state.range(0)));
  std::vector<double> out(plane().size());
  for (auto _ : state) {
    if constexpr (Parallel) kernels::omp::evaluate_nodes(potential().program(), plane(), 0.0, out);
    else kernels::serial::evaluate_nodes(potential().program(), plane(), 0.0, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(out.size()));
}

template <bool Parallel>
void matvec(benchmark::State& state) {
  kernels::set_thread_limit(static_cast<int>(state.range(0)));
  static const auto h = build_hamiltonian(
      ClassicalSystem::parse({"x", "y"}, {{"1+0.1*x^2", "0.2"}, {"0.2", "1"}}, {"0.3*y", "-0.3*x"}, "x^2"), plane(),
      1.0);
  const auto& m = h.matrix;
  const kernels::CsrView view{static_cast<std::size_t>(m.rows()),
                              {m.outerIndexPtr(), static_cast<std::size_t>(m.rows() + 1)},
                              {m.innerIndexPtr(), static_cast<std::size_t>(m.nonZeros())},
                              {m.valuePtr(), static_cast<std::size_t>(m.nonZeros())}};
  std::vector<std::complex<double>> x(view.rows, {1.0, 0.5}), y(view.rows);
  for (auto _ : state) {
    if constexpr (Parallel) kernels::omp::csr_matvec(view, x, y);
    else kernels::serial::csr_matvec(view, x, y);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(view.value.size()));
}

template <bool Parallel>
void hamilton(benchmark::State& state) {
  kernels::set_thread_limit(static_cast<int>(state.range(0)));
  static const auto sys = ClassicalSystem::cartesian({"x"}, 1.0, "0.5*x^2 + 0.1*x^4");
  const std::size_t n = 4096, steps = 100;
  std::mt19937_64 rng(1);
  std::normal_distribution<double> normal;
  std::vector<double> q0(n), p0(n);
  for (std::size_t i = 0; i < n; ++i) {
    q0[i] = normal(rng);
    p0[i] = normal(rng);
  }
  std::vector<double> history(2 * n);
  for (auto _ : state) {
    auto q = q0, p = p0;
    const kernels::HamiltonArgs args{&sys, 0.01, steps, steps, n, q, p, history};
    if constexpr (Parallel) kernels::omp::integrate_hamilton(args);
    else kernels::serial::integrate_hamilton(args);
    benchmark::DoNotOptimize(q.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * steps));
}

template <bool Parallel>
void transport(benchmark::State& state) {
  kernels::set_thread_limit(static_cast<int>(state.range(0)));
  const std::size_t rows = 256, cols = 256, steps = 16;
  std::vector<double> speeds(rows);
  for (std::size_t r = 0; r < rows; ++r) speeds[r] = -4.0 + 8.0 * static_cast<double>(r) / (rows - 1);
  std::vector<std::complex<double>> psi0(rows * cols);
  for (std::size_t k = 0; k < psi0.size(); ++k) psi0[k] = std::polar(1.0, 0.01 * static_cast<double>(k));
  for (auto _ : state) {
    auto psi = psi0;
    const kernels::TransportArgs args{rows, cols, speeds, 8.0 / (cols - 1), 0.01, steps, psi};
    if constexpr (Parallel) benchmark::DoNotOptimize(kernels::omp::transport_rows(args));
    else benchmark::DoNotOptimize(kernels::serial::transport_rows(args));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(rows * cols * steps));
}

}  // namespace

BENCHMARK(evaluate<false>)->Name("evaluate_nodes/serial")->Arg(1)->UseRealTime();
BENCHMARK(evaluate<true>)->Name("evaluate_nodes/omp")->DenseRange(1, 4)->UseRealTime();
BENCHMARK(matvec<false>)->Name("csr_matvec/serial")->Arg(1)->UseRealTime();
BENCHMARK(matvec<true>)->Name("csr_matvec/omp")->DenseRange(1, 4)->UseRealTime();
BENCHMARK(hamilton<false>)->Name("integrate_hamilton/serial")->Arg(1)->UseRealTime();
BENCHMARK(hamilton<true>)->Name("integrate_hamilton/omp")->DenseRange(1, 4)->UseRealTime();
BENCHMARK(transport<false>)->Name("transport_rows/serial")->Arg(1)->UseRealTime();
BENCHMARK(transport<true>)->Name("transport_rows/omp")->DenseRange(1, 4)->UseRealTime();

BENCHMARK_MAIN();
