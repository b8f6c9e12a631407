#pragma once

#include <cblas.h>

namespace radnet {

/// Number of OpenBLAS threads used inside GEMM calls. 1 (the default) keeps
/// every computation bit-reproducible run to run.
inline void set_blas_threads(int n) { openblas_set_num_threads(n > 0 ? n : 1); }

namespace detail {

/// C[m,n] = alpha * op(A) * op(B) + beta * C, row-major.
inline void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha, const float* a,
                 int lda, const float* b, int ldb, float beta, float* c, int ldc) {
  cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

inline void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha, const double* a,
                 int lda, const double* b, int ldb, double beta, double* c, int ldc) {
  cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

}  // namespace detail
}  // namespace radnet
