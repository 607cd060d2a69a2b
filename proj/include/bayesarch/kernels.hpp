// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>

// Dense matrix kernels used by the autodiff tape. All matrices are row-major
// and every kernel accumulates into its output (out += ...).
//
// The serial and parallel variants perform the same floating-point operations
// in the same order per output element, so their results are bit-identical.
// Only the distribution of output rows over threads differs.

namespace bayesarch::kernels {

namespace serial {

// out[m,n] += a[m,k] * b[k,n]
void matmul(std::span<const double> a, std::span<const double> b, std::span<double> out,
            std::size_t m, std::size_t k, std::size_t n);
// out[k,n] += a[m,k]^T * g[m,n]
void matmul_at_b(std::span<const double> a, std::span<const double> g, std::span<double> out,
                 std::size_t m, std::size_t k, std::size_t n);
// out[m,k] += g[m,n] * b[k,n]^T
void matmul_a_bt(std::span<const double> g, std::span<const double> b, std::span<double> out,
                 std::size_t m, std::size_t k, std::size_t n);

}  // namespace serial

namespace parallel {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> out,
            std::size_t m, std::size_t k, std::size_t n);
void matmul_at_b(std::span<const double> a, std::span<const double> g, std::span<double> out,
                 std::size_t m, std::size_t k, std::size_t n);
void matmul_a_bt(std::span<const double> g, std::span<const double> b, std::span<double> out,
                 std::size_t m, std::size_t k, std::size_t n);

}  // namespace parallel

// Work (multiply-adds) below which the parallel variants stay on one thread.
inline constexpr std::size_t kParallelThreshold = 1 << 16;

}  // namespace bayesarch::kernels
