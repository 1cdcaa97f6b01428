#pragma once

namespace fetalpose::nn {

// Small dense kernels for the convolution layers. All loops keep a fixed
// accumulation order (independent output elements, sequential k), so results
// are bit-identical regardless of the OpenMP thread count.

// C[M x N] += A[M x K] * B[K x N], row-major. Four-row register blocking; the
// inner loop is an axpy over contiguous rows, which vectorizes without
// reassociation.
template <class T>
void gemm_nn_accum(T* __restrict c, const T* __restrict a, const T* __restrict b, int M, int K,
                   int N) {
    int m = 0;
    for (; m + 4 <= M; m += 4) {
        T* c0 = c + static_cast<size_t>(m) * N;
        T* c1 = c0 + N;
        T* c2 = c1 + N;
        T* c3 = c2 + N;
        for (int k = 0; k < K; ++k) {
            const T a0 = a[static_cast<size_t>(m) * K + k];
            const T a1 = a[static_cast<size_t>(m + 1) * K + k];
            const T a2 = a[static_cast<size_t>(m + 2) * K + k];
            const T a3 = a[static_cast<size_t>(m + 3) * K + k];
            const T* bk = b + static_cast<size_t>(k) * N;
            for (int n = 0; n < N; ++n) {
                c0[n] += a0 * bk[n];
                c1[n] += a1 * bk[n];
                c2[n] += a2 * bk[n];
                c3[n] += a3 * bk[n];
            }
        }
    }
    for (; m < M; ++m) {
        T* cm = c + static_cast<size_t>(m) * N;
        for (int k = 0; k < K; ++k) {
            const T am = a[static_cast<size_t>(m) * K + k];
            const T* bk = b + static_cast<size_t>(k) * N;
            for (int n = 0; n < N; ++n) cm[n] += am * bk[n];
        }
    }
}

// Dot product with eight independent accumulators combined in a fixed order.
template <class T>
T dot_fixed(const T* __restrict a, const T* __restrict b, int n) {
    T acc[8] = {T(0), T(0), T(0), T(0), T(0), T(0), T(0), T(0)};
    int i = 0;
    for (; i + 8 <= n; i += 8) {
        for (int j = 0; j < 8; ++j) acc[j] += a[i + j] * b[i + j];
    }
    T tail = T(0);
    for (; i < n; ++i) tail += a[i] * b[i];
    return (((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]))) +
           tail;
}

// C[M x N] += A[M x P] * B[N x P]^T  (row-row dot products).
template <class T>
void gemm_abt_accum_row(T* __restrict c, const T* __restrict a, const T* __restrict b, int m,
                        int N, int P) {
    const T* am = a + static_cast<size_t>(m) * P;
    T* cm = c + static_cast<size_t>(m) * N;
    for (int n = 0; n < N; ++n) {
        cm[n] += dot_fixed(am, b + static_cast<size_t>(n) * P, P);
    }
}

// Row k of C[K x P] += A[M x K]^T * B[M x P]  (axpy over the M rows of B).
template <class T>
void gemm_atb_accum_row(T* __restrict c, const T* __restrict a, const T* __restrict b, int k,
                        int M, int K, int P) {
    T* ck = c + static_cast<size_t>(k) * P;
    for (int mm = 0; mm < M; ++mm) {
        const T w = a[static_cast<size_t>(mm) * K + k];
        const T* bm = b + static_cast<size_t>(mm) * P;
        for (int p = 0; p < P; ++p) ck[p] += w * bm[p];
    }
}

}  // namespace fetalpose::nn
