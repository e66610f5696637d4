#pragma once

#include <cstdint>

namespace east {

// Row-major accumulating matrix kernels (C += A * B). Plain loops ordered so
// the inner dimension is contiguous for both operands; the compiler
// vectorizes them well enough for desk-scale training. All single-threaded.

/// C[M,N] += A[M,K] * B[K,N]
template <class Real>
void gemm_nn(int64_t M, int64_t K, int64_t N, const Real* A, const Real* B, Real* C) {
    for (int64_t i = 0; i < M; ++i) {
        const Real* a = A + i * K;
        Real* c = C + i * N;
        for (int64_t k = 0; k < K; ++k) {
            const Real aik = a[k];
            const Real* b = B + k * N;
            for (int64_t j = 0; j < N; ++j) c[j] += aik * b[j];
        }
    }
}

/// C[M,N] += A[M,K] * B[N,K]^T  (B stored row-major as N x K)
template <class Real>
void gemm_nt(int64_t M, int64_t K, int64_t N, const Real* A, const Real* B, Real* C) {
    for (int64_t i = 0; i < M; ++i) {
        const Real* a = A + i * K;
        Real* c = C + i * N;
        for (int64_t j = 0; j < N; ++j) {
            const Real* b = B + j * K;
            Real acc(0);
            for (int64_t k = 0; k < K; ++k) acc += a[k] * b[k];
            c[j] += acc;
        }
    }
}

/// C[M,N] += A[K,M]^T * B[K,N]  (A stored row-major as K x M)
template <class Real>
void gemm_tn(int64_t M, int64_t K, int64_t N, const Real* A, const Real* B, Real* C) {
    for (int64_t k = 0; k < K; ++k) {
        const Real* a = A + k * M;
        const Real* b = B + k * N;
        for (int64_t i = 0; i < M; ++i) {
            const Real aki = a[i];
            Real* c = C + i * N;
            for (int64_t j = 0; j < N; ++j) c[j] += aki * b[j];
        }
    }
}

}  // namespace east
