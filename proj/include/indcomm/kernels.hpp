#pragma once

// Dense row-major matrix kernels used by the autodiff engine.
//
// Every kernel accumulates into its output (C += ...). The `serial`
// namespace holds straightforward reference loops; the default entry points
// split output rows across OpenMP threads once the problem is large enough.
// Each output element is accumulated in the same order on both paths, so the
// parallel kernels are bit-identical to the serial ones.

#include <cstddef>

namespace indcomm::kernels {

/// C[m x n] += A[m x k] * B[k x n]
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c);
/// C[m x n] += A[m x k] * B[n x k]^T
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c);
/// C[m x n] += A[k x m]^T * B[k x n]
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c);

namespace serial {
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c);
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c);
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c);
}  // namespace serial

// Multiply-accumulate count above which the parallel kernels fork threads.
inline constexpr std::size_t kParallelThreshold = std::size_t{1} << 17;
// Below this many rows gemm_nt runs dot products directly instead of
// transposing B first.
inline constexpr std::size_t kNtTransposeRows = 8;

}  // namespace indcomm::kernels
