#pragma once

#include <concepts>

#if defined(LFNET_USE_BLAS)
#include <cblas.h>
#endif

namespace lfnet {

#if defined(LFNET_USE_BLAS) && defined(LFNET_BLAS_IS_OPENBLAS)
/// Pins the BLAS backend to one thread. Results are deterministic either way
/// for a fixed thread count; this removes the one environment-dependent knob.
inline void pin_blas_threads() { openblas_set_num_threads(1); }
#else
inline void pin_blas_threads() {}
#endif

/// Row-major C = alpha * op(A) * op(B) + beta * C where op is optional
/// transposition. Backed by CBLAS when available, otherwise by a plain
/// triple loop with the same (i, j, k-ascending) accumulation order.
template <std::floating_point T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k, T alpha, const T* a,
          int lda, const T* b, int ldb, T beta, T* c, int ldc);

#if defined(LFNET_USE_BLAS)

template <>
inline void gemm<float>(bool trans_a, bool trans_b, int m, int n, int k, float alpha,
                        const float* a, int lda, const float* b, int ldb, float beta,
                        float* c, int ldc) {
    cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
                trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b, ldb,
                beta, c, ldc);
}

template <>
inline void gemm<double>(bool trans_a, bool trans_b, int m, int n, int k, double alpha,
                         const double* a, int lda, const double* b, int ldb, double beta,
                         double* c, int ldc) {
    cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
                trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b, ldb,
                beta, c, ldc);
}

#else

template <std::floating_point T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k, T alpha, const T* a,
          int lda, const T* b, int ldb, T beta, T* c, int ldc) {
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            T acc = 0;
            for (int p = 0; p < k; ++p) {
                const T av = trans_a ? a[static_cast<std::size_t>(p) * lda + i]
                                     : a[static_cast<std::size_t>(i) * lda + p];
                const T bv = trans_b ? b[static_cast<std::size_t>(j) * ldb + p]
                                     : b[static_cast<std::size_t>(p) * ldb + j];
                acc += av * bv;
            }
            T& dst = c[static_cast<std::size_t>(i) * ldc + j];
            dst = alpha * acc + (beta == T(0) ? T(0) : beta * dst);
        }
    }
}

#endif

} // namespace lfnet
