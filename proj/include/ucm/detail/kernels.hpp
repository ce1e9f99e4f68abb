#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>

// Internal CPU kernels shared by the op implementations. Every kernel keeps a
// fixed reduction order per output element: loop-order choices below only
// trade memory traffic, never results.

namespace ucm::detail {

using std::int64_t;

// c[m x n] += a[m x k] * b[k x n]; per output element k runs ascending
template <typename Real>
void mm_accum(const Real* a, const Real* b, Real* c, int64_t m, int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        Real* crow = c + i * n;
        const Real* arow = a + i * k;
        for (int64_t kk = 0; kk < k; ++kk) {
            const Real av = arow[kk];
            const Real* brow = b + kk * n;
            for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// 8-lane dot product; the lane split is fixed, so results are deterministic
// (and SIMD-friendly without reassociation license)
template <typename Real>
inline Real dot_n(const Real* a, const Real* b, int64_t n) {
    Real acc[8] = {};
    int64_t i = 0;
    for (; i + 8 <= n; i += 8)
        for (int l = 0; l < 8; ++l) acc[l] += a[i + l] * b[i + l];
    Real tail = 0;
    for (; i < n; ++i) tail += a[i] * b[i];
    return (((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]))) +
           tail;
}

// c[m x k] += a[m x n] * b[k x n]^T; each output is one dot_n reduction
template <typename Real>
void mm_abT(const Real* a, const Real* b, Real* c, int64_t m, int64_t n, int64_t k) {
    if (m >= k) {
        for (int64_t i = 0; i < m; ++i) {
            const Real* arow = a + i * n;
            Real* crow = c + i * k;
            for (int64_t j = 0; j < k; ++j) crow[j] += dot_n(arow, b + j * n, n);
        }
    } else {
        for (int64_t j = 0; j < k; ++j) {
            const Real* brow = b + j * n;
            for (int64_t i = 0; i < m; ++i) c[i * k + j] += dot_n(a + i * n, brow, n);
        }
    }
}

// c[k x n] += a[m x k]^T * b[m x n]; per output element m runs ascending
template <typename Real>
void mm_aTb(const Real* a, const Real* b, Real* c, int64_t m, int64_t k, int64_t n) {
    if (k <= m) {
        for (int64_t i = 0; i < m; ++i) {
            const Real* arow = a + i * k;
            const Real* brow = b + i * n;
            for (int64_t kk = 0; kk < k; ++kk) {
                const Real av = arow[kk];
                Real* crow = c + kk * n;
                for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
    } else {
        for (int64_t kk = 0; kk < k; ++kk) {
            Real* crow = c + kk * n;
            for (int64_t i = 0; i < m; ++i) {
                const Real av = a[i * k + kk];
                const Real* brow = b + i * n;
                for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
    }
}

// Branch-free exp for the float softmax path (the N^2 attention maps make
// libm expf the bottleneck). Max relative error ~1.2e-7; exp_core(0) == 1
// exactly. Arguments are clamped below at -87.
inline float exp_core(float x) {
    x = std::max(x, -87.0f);
    const float z = x * 1.442695041f;
    const float kf = std::floor(z + 0.5f);
    // two-part ln2 keeps the reduced argument accurate
    const float r = (x - kf * 0.693359375f) + kf * 2.12194440e-4f;
    // degree-6 Taylor on |r| <= 0.347
    float p = 1.0f / 720.0f;
    p = p * r + 1.0f / 120.0f;
    p = p * r + 1.0f / 24.0f;
    p = p * r + 1.0f / 6.0f;
    p = p * r + 0.5f;
    p = p * r + 1.0f;
    p = p * r + 1.0f;
    const std::uint32_t bits = static_cast<std::uint32_t>(static_cast<int>(kf) + 127) << 23;
    return p * std::bit_cast<float>(bits);
}

// shadow precision stays on libm for the tight-tolerance checks
inline float softmax_exp(float x) { return exp_core(x); }
inline double softmax_exp(double x) { return std::exp(x); }

}  // namespace ucm::detail
