// Copyright Contributors to the gaussworld Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cblas.h>

#include "gaussworld/core/common.hpp"
#include "gaussworld/core/threading.hpp"

namespace gw {

// GEMM with deterministic threading: OpenBLAS itself is pinned to one
// thread (see threading.hpp); large outputs are split over rows with a
// static OpenMP partition so results do not depend on scheduling.
//
// C[M,N] (+)= A op(A)[M,K] * op(B)[K,N]
template <class T>
void gemm(bool trans_a, bool trans_b, i64 m, i64 n, i64 k, T alpha, const T* a,
          i64 lda, const T* b, i64 ldb, T beta, T* c, i64 ldc);

namespace detail {

template <class T, class F>
void gemm_split_rows(F&& call_rows, i64 m) {
  init_threading();
  const int nt = thread_count();
  // Callers may already sit inside an OpenMP region (e.g. per-batch conv
  // loops); a nested region would run single-threaded and must not split.
  if (nt <= 1 || m < 64 || omp_in_parallel()) {
    call_rows(0, m);
    return;
  }
#pragma omp parallel num_threads(nt)
  {
    const int tid = omp_get_thread_num();
    const i64 chunk = (m + nt - 1) / nt;
    const i64 r0 = tid * chunk;
    const i64 r1 = std::min<i64>(m, r0 + chunk);
    if (r0 < r1) call_rows(r0, r1 - r0);
  }
}

}  // namespace detail

template <>
inline void gemm<float>(bool trans_a, bool trans_b, i64 m, i64 n, i64 k,
                        float alpha, const float* a, i64 lda, const float* b,
                        i64 ldb, float beta, float* c, i64 ldc) {
  const auto ta = trans_a ? CblasTrans : CblasNoTrans;
  const auto tb = trans_b ? CblasTrans : CblasNoTrans;
  detail::gemm_split_rows<float>(
      [&](i64 r0, i64 rows) {
        const float* ablk = trans_a ? a + r0 : a + r0 * lda;
        cblas_sgemm(CblasRowMajor, ta, tb, static_cast<int>(rows),
                    static_cast<int>(n), static_cast<int>(k), alpha, ablk,
                    static_cast<int>(lda), b, static_cast<int>(ldb), beta,
                    c + r0 * ldc, static_cast<int>(ldc));
      },
      m);
}

template <>
inline void gemm<double>(bool trans_a, bool trans_b, i64 m, i64 n, i64 k,
                         double alpha, const double* a, i64 lda,
                         const double* b, i64 ldb, double beta, double* c,
                         i64 ldc) {
  const auto ta = trans_a ? CblasTrans : CblasNoTrans;
  const auto tb = trans_b ? CblasTrans : CblasNoTrans;
  detail::gemm_split_rows<double>(
      [&](i64 r0, i64 rows) {
        const double* ablk = trans_a ? a + r0 : a + r0 * lda;
        cblas_dgemm(CblasRowMajor, ta, tb, static_cast<int>(rows),
                    static_cast<int>(n), static_cast<int>(k), alpha, ablk,
                    static_cast<int>(lda), b, static_cast<int>(ldb), beta,
                    c + r0 * ldc, static_cast<int>(ldc));
      },
      m);
}

/// C[M,N] = op(A) * op(B) with natural leading dimensions.
template <class T>
void matmul_raw(bool trans_a, bool trans_b, i64 m, i64 n, i64 k, const T* a,
                const T* b, T* c, T beta = T(0)) {
  const i64 lda = trans_a ? m : k;
  const i64 ldb = trans_b ? k : n;
  gemm<T>(trans_a, trans_b, m, n, k, T(1), a, lda, b, ldb, beta, c, n);
}

}  // namespace gw
