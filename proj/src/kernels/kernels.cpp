// Copyright (c) 2026 the lma authors
// SPDX-License-Identifier: Apache-2.0

#include "lma/kernels.hpp"

#include <cmath>
#include <cstdlib>
#include <stdexcept>

namespace lma::kernels {

namespace {

void matmul_nn_scalar(const double* a, const double* b, double* c, int m, int k, int n,
                      bool accumulate) {
    if (!accumulate) {
        for (long i = 0; i < static_cast<long>(m) * n; ++i)
            c[i] = 0.0;
    }
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<long>(i) * k;
        double* crow = c + static_cast<long>(i) * n;
        for (int p = 0; p < k; ++p) {
            const double aval = arow[p];
            const double* brow = b + static_cast<long>(p) * n;
            for (int j = 0; j < n; ++j)
                crow[j] = std::fma(aval, brow[j], crow[j]);
        }
    }
}

void add_scalar(const double* a, const double* b, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i)
        out[i] = a[i] + b[i];
}

void mul_scalar(const double* a, const double* b, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i)
        out[i] = a[i] * b[i];
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i)
        y[i] = std::fma(alpha, x[i], y[i]);
}

void scale_scalar(const double* x, double s, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i)
        out[i] = x[i] * s;
}

void relu_fwd_scalar(const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i)
        y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_bwd_scalar(const double* x, const double* dy, double* dx, std::size_t n) {
    // Unconditional add keeps -0.0 handling identical to the masked SIMD form.
    for (std::size_t i = 0; i < n; ++i)
        dx[i] += x[i] > 0.0 ? dy[i] : 0.0;
}

const Backend kScalar = {
    "scalar",        matmul_nn_scalar, add_scalar,      mul_scalar,
    axpy_scalar,     scale_scalar,     relu_fwd_scalar, relu_bwd_scalar,
};

const Backend* pick_default() {
    if (const char* env = std::getenv("LMA_KERNEL")) {
        std::string want(env);
        if (want == "scalar")
            return &kScalar;
        if (want == "avx2") {
            const Backend* b = avx2_backend();
            if (!b)
                throw std::runtime_error("LMA_KERNEL=avx2 but AVX2+FMA is not available");
            return b;
        }
        // anything else, including "auto", falls through to detection
    }
    if (const Backend* b = avx2_backend())
        return b;
    return &kScalar;
}

const Backend*& active_slot() {
    static const Backend* slot = pick_default();
    return slot;
}

} // namespace

const Backend& scalar_backend() { return kScalar; }

const Backend& active() { return *active_slot(); }

void select(const std::string& name) {
    if (name == "scalar") {
        active_slot() = &kScalar;
        return;
    }
    if (name == "avx2") {
        const Backend* b = avx2_backend();
        if (!b)
            throw std::runtime_error("kernel backend avx2 is not available on this CPU/build");
        active_slot() = b;
        return;
    }
    if (name == "auto") {
        const Backend* b = avx2_backend();
        active_slot() = b ? b : &kScalar;
        return;
    }
    throw std::invalid_argument("unknown kernel backend: " + name);
}

void transpose(const double* a, double* at, int m, int n) {
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            at[static_cast<long>(j) * m + i] = a[static_cast<long>(i) * n + j];
}

} // namespace lma::kernels
