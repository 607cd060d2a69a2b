// SPDX-License-Identifier: Apache-2.0
#include "bayesarch/kernels.hpp"

#include <cstdint>

namespace bayesarch::kernels {

namespace {

// Row kernels shared by both variants so the per-element operation order is
// identical by construction.

inline void matmul_row(const double* a, const double* b, double* out, std::size_t k, std::size_t n) {
    for (std::size_t p = 0; p < k; ++p) {
        const double av = a[p];
        if (av == 0.0) continue;
        const double* brow = b + p * n;
        for (std::size_t j = 0; j < n; ++j) out[j] += av * brow[j];
    }
}

inline void matmul_at_b_row(const double* a, const double* g, double* out, std::size_t p, std::size_t m,
                            std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double av = a[i * k + p];
        if (av == 0.0) continue;
        const double* grow = g + i * n;
        for (std::size_t j = 0; j < n; ++j) out[j] += av * grow[j];
    }
}

inline void matmul_a_bt_row(const double* g, const double* b, double* out, std::size_t k, std::size_t n) {
    for (std::size_t p = 0; p < k; ++p) {
        const double* brow = b + p * n;
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += g[j] * brow[j];
        out[p] += acc;
    }
}

}  // namespace

namespace serial {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> out, std::size_t m,
            std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) matmul_row(a.data() + i * k, b.data(), out.data() + i * n, k, n);
}

void matmul_at_b(std::span<const double> a, std::span<const double> g, std::span<double> out, std::size_t m,
                 std::size_t k, std::size_t n) {
    for (std::size_t p = 0; p < k; ++p) matmul_at_b_row(a.data(), g.data(), out.data() + p * n, p, m, k, n);
}

void matmul_a_bt(std::span<const double> g, std::span<const double> b, std::span<double> out, std::size_t m,
                 std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) matmul_a_bt_row(g.data() + i * n, b.data(), out.data() + i * k, k, n);
}

}  // namespace serial

namespace parallel {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> out, std::size_t m,
            std::size_t k, std::size_t n) {
    const auto rows = static_cast<std::int64_t>(m);
#pragma omp parallel for schedule(static) if (m * k * n >= kParallelThreshold)
    for (std::int64_t i = 0; i < rows; ++i) {
        const auto r = static_cast<std::size_t>(i);
        matmul_row(a.data() + r * k, b.data(), out.data() + r * n, k, n);
    }
}

void matmul_at_b(std::span<const double> a, std::span<const double> g, std::span<double> out, std::size_t m,
                 std::size_t k, std::size_t n) {
    const auto rows = static_cast<std::int64_t>(k);
#pragma omp parallel for schedule(static) if (m * k * n >= kParallelThreshold)
    for (std::int64_t p = 0; p < rows; ++p) {
        const auto r = static_cast<std::size_t>(p);
        matmul_at_b_row(a.data(), g.data(), out.data() + r * n, r, m, k, n);
    }
}

void matmul_a_bt(std::span<const double> g, std::span<const double> b, std::span<double> out, std::size_t m,
                 std::size_t k, std::size_t n) {
    const auto rows = static_cast<std::int64_t>(m);
#pragma omp parallel for schedule(static) if (m * k * n >= kParallelThreshold)
    for (std::int64_t i = 0; i < rows; ++i) {
        const auto r = static_cast<std::size_t>(i);
        matmul_a_bt_row(g.data() + r * n, b.data(), out.data() + r * k, k, n);
    }
}

}  // namespace parallel

}  // namespace bayesarch::kernels
