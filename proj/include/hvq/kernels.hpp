#pragma once

// Data-parallel inner loops. Every kernel exists twice: `serial` is the
// reference used by tests, `omp` is the OpenMP version used by the library.
// Each iteration of a parallel loop touches only its own outputs, so both
// versions produce bit-identical results at any thread count.

#include <complex>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <limits>
#include <span>

#include "hvq/expr.hpp"
#include "hvq/fields.hpp"

namespace hvq {
class ClassicalSystem;
}

namespace hvq::kernels {

inline constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

/// Caps OpenMP parallelism for every kernel (0 restores the runtime default).
void set_thread_limit(int threads);
int thread_limit();

/// Runs f(i) for i in [0, n) on the capped thread team. If any call throws,
/// the exception of the lowest index is rethrown after the loop.
template <class F>
void parallel_for(std::size_t n, F&& f) {
  std::exception_ptr error;
  std::size_t error_index = std::numeric_limits<std::size_t>::max();
  const auto count = static_cast<std::int64_t>(n);
#pragma omp parallel for num_threads(thread_limit()) schedule(dynamic, 1)
  for (std::int64_t i = 0; i < count; ++i) {
    try {
      f(static_cast<std::size_t>(i));
    } catch (...) {
#pragma omp critical(hvq_parallel_for_error)
      if (static_cast<std::size_t>(i) < error_index) {
        error_index = static_cast<std::size_t>(i);
        error = std::current_exception();
      }
    }
  }
  if (error) std::rethrow_exception(error);
}

struct EvalFailure {
  expr::EvalStatus status = expr::EvalStatus::ok;
  std::size_t node = kNone;
};

/// Compressed sparse rows over complex values.
struct CsrView {
  std::size_t rows = 0;
  std::span<const std::int64_t> row_begin;  // rows + 1 entries
  std::span<const std::int64_t> column;
  std::span<const std::complex<double>> value;
};

/// Velocity field sampled at one instant.
struct VelocityFrame {
  double time = 0.0;
  VectorField velocity;
};

/// Advects `positions` (n x dims, row-major) with RK4 through the frames,
/// `substeps` steps per frame interval, with linear-in-time interpolation
/// between frames and multilinear interpolation in space. Box axes reflect,
/// periodic axes wrap. `history` receives positions at every frame time
/// (frames.size() x n x dims). Returns the first particle that went non-finite.
struct AdvectArgs {
  std::span<const VelocityFrame> frames;
  std::size_t substeps = 1;
  std::size_t particles = 0;
  std::span<double> positions;
  std::span<double> history;
};

/// RK4 for Hamilton's equations of `system`, one independent state per
/// particle. `q_history` receives q every `record_every` steps (including
/// step 0), laid out as records x n x dims.
struct HamiltonArgs {
  const ClassicalSystem* system = nullptr;
  double dt = 0.0;
  std::size_t steps = 0;
  std::size_t record_every = 1;
  std::size_t particles = 0;
  std::span<double> q;
  std::span<double> p;
  std::span<double> q_history;
};

/// Crank-Nicolson for d psi/dt + c_r d psi/dq = 0 on every row r of a
/// rows x cols block, central differences, both row ends pinned to zero.
struct TransportArgs {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::span<const double> speeds;  // one per row
  double spacing = 1.0;
  double dt = 0.0;
  std::size_t steps = 0;
  std::span<std::complex<double>> psi;
};

namespace serial {
EvalFailure evaluate_nodes(const expr::Program& program, const Grid& grid, double time,
                           std::span<double> out);
void csr_matvec(const CsrView& a, std::span<const std::complex<double>> x,
                std::span<std::complex<double>> y);
std::size_t advect_particles(const AdvectArgs& args);
std::size_t integrate_hamilton(const HamiltonArgs& args);
double transport_rows(const TransportArgs& args);
}  // namespace serial

namespace omp {
EvalFailure evaluate_nodes(const expr::Program& program, const Grid& grid, double time,
                           std::span<double> out);
void csr_matvec(const CsrView& a, std::span<const std::complex<double>> x,
                std::span<std::complex<double>> y);
std::size_t advect_particles(const AdvectArgs& args);
std::size_t integrate_hamilton(const HamiltonArgs& args);
/// Returns the largest relative linear-solve residual seen.
double transport_rows(const TransportArgs& args);
}  // namespace omp

}  // namespace hvq::kernels
