// Copyright (c) 2026 the lma authors
// SPDX-License-Identifier: Apache-2.0
//
// AVX2+FMA kernel variant. Compiled with -mavx2 -mfma (see CMakeLists);
// nothing here may run unless the runtime CPU check passes. Results are
// bit-identical to the scalar backend: per output element the operation
// chain is the same, only independent elements are packed into lanes.

#include "lma/kernels.hpp"

#if defined(__AVX2__) && defined(__FMA__)

#include <cmath>
#include <immintrin.h>

namespace lma::kernels {

namespace {

void matmul_nn_avx2(const double* a, const double* b, double* c, int m, int k, int n,
                    bool accumulate) {
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<long>(i) * k;
        double* crow = c + static_cast<long>(i) * n;
        int j = 0;
        for (; j + 16 <= n; j += 16) {
            __m256d c0, c1, c2, c3;
            if (accumulate) {
                c0 = _mm256_loadu_pd(crow + j);
                c1 = _mm256_loadu_pd(crow + j + 4);
                c2 = _mm256_loadu_pd(crow + j + 8);
                c3 = _mm256_loadu_pd(crow + j + 12);
            } else {
                c0 = c1 = c2 = c3 = _mm256_setzero_pd();
            }
            for (int p = 0; p < k; ++p) {
                const __m256d av = _mm256_set1_pd(arow[p]);
                const double* brow = b + static_cast<long>(p) * n + j;
                c0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(brow), c0);
                c1 = _mm256_fmadd_pd(av, _mm256_loadu_pd(brow + 4), c1);
                c2 = _mm256_fmadd_pd(av, _mm256_loadu_pd(brow + 8), c2);
                c3 = _mm256_fmadd_pd(av, _mm256_loadu_pd(brow + 12), c3);
            }
            _mm256_storeu_pd(crow + j, c0);
            _mm256_storeu_pd(crow + j + 4, c1);
            _mm256_storeu_pd(crow + j + 8, c2);
            _mm256_storeu_pd(crow + j + 12, c3);
        }
        for (; j + 4 <= n; j += 4) {
            __m256d c0 = accumulate ? _mm256_loadu_pd(crow + j) : _mm256_setzero_pd();
            for (int p = 0; p < k; ++p) {
                const __m256d av = _mm256_set1_pd(arow[p]);
                c0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b + static_cast<long>(p) * n + j), c0);
            }
            _mm256_storeu_pd(crow + j, c0);
        }
        for (; j < n; ++j) {
            double acc = accumulate ? crow[j] : 0.0;
            for (int p = 0; p < k; ++p)
                acc = std::fma(arow[p], b[static_cast<long>(p) * n + j], acc);
            crow[j] = acc;
        }
    }
}

void add_avx2(const double* a, const double* b, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i)
        out[i] = a[i] + b[i];
}

void mul_avx2(const double* a, const double* b, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i)
        out[i] = a[i] * b[i];
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
    const __m256d av = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(y + i, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    for (; i < n; ++i)
        y[i] = std::fma(alpha, x[i], y[i]);
}

void scale_avx2(const double* x, double s, double* out, std::size_t n) {
    const __m256d sv = _mm256_set1_pd(s);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(x + i), sv));
    for (; i < n; ++i)
        out[i] = x[i] * s;
}

void relu_fwd_avx2(const double* x, double* y, std::size_t n) {
    // max(x, +0.0) with the zero as second operand matches the scalar
    // "x > 0 ? x : 0" on -0.0 and NaN inputs.
    const __m256d zero = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(y + i, _mm256_max_pd(_mm256_loadu_pd(x + i), zero));
    for (; i < n; ++i)
        y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_bwd_avx2(const double* x, const double* dy, double* dx, std::size_t n) {
    const __m256d zero = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d mask = _mm256_cmp_pd(_mm256_loadu_pd(x + i), zero, _CMP_GT_OQ);
        const __m256d gated = _mm256_and_pd(mask, _mm256_loadu_pd(dy + i));
        _mm256_storeu_pd(dx + i, _mm256_add_pd(_mm256_loadu_pd(dx + i), gated));
    }
    for (; i < n; ++i)
        dx[i] += x[i] > 0.0 ? dy[i] : 0.0;
}

const Backend kAvx2 = {
    "avx2",    matmul_nn_avx2, add_avx2,      mul_avx2,
    axpy_avx2, scale_avx2,     relu_fwd_avx2, relu_bwd_avx2,
};

} // namespace

bool avx2_available() {
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
}

const Backend* avx2_backend() { return avx2_available() ? &kAvx2 : nullptr; }

} // namespace lma::kernels

#else // no AVX2 target support in this TU

namespace lma::kernels {

bool avx2_available() { return false; }
const Backend* avx2_backend() { return nullptr; }

} // namespace lma::kernels

#endif
