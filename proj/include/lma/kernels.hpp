// Copyright (c) 2026 the lma authors
// SPDX-License-Identifier: Apache-2.0
//
// Arithmetic inner loops behind the tensor engine. Every kernel is defined
// by the scalar reference implementation; SIMD variants must produce
// bit-identical results. This is possible because each output element
// accumulates its fma chain in the same (ascending-k) order in every
// variant; vectorization happens across independent output elements only.
#pragma once

#include <cstddef>
#include <string>

namespace lma::kernels {

struct Backend {
    const char* name;

    /// c[m,n] = a[m,k] * b[k,n], row-major. With accumulate, adds into c.
    /// Contract: c_ij is a chain of fma(a_ik, b_kj, .) over ascending k.
    void (*matmul_nn)(const double* a, const double* b, double* c, int m, int k, int n,
                      bool accumulate);
    void (*add)(const double* a, const double* b, double* out, std::size_t n);
    void (*mul)(const double* a, const double* b, double* out, std::size_t n);
    /// y[i] = fma(alpha, x[i], y[i])
    void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
    void (*scale)(const double* x, double s, double* out, std::size_t n);
    void (*relu_fwd)(const double* x, double* y, std::size_t n);
    /// dx[i] += (x[i] > 0) ? dy[i] : 0
    void (*relu_bwd)(const double* x, const double* dy, double* dx, std::size_t n);
};

const Backend& scalar_backend();

/// Null when this build/CPU cannot run AVX2+FMA.
const Backend* avx2_backend();
bool avx2_available();

/// Active backend. Defaults to the best available; the LMA_KERNEL
/// environment variable ("scalar", "avx2", "auto") or select() override it.
const Backend& active();
void select(const std::string& name);

/// at[n,m] = a[m,n] transposed. Plain data movement, identical on all
/// backends, so it lives outside the dispatch table.
void transpose(const double* a, double* at, int m, int n);

} // namespace lma::kernels
