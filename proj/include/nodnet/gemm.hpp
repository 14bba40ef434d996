#pragma once

// Blocked GEMM with float or double operands and double accumulation.
// C[MxN] = opA[MxK] * opB[KxN] (optionally += into C), row-major.
//
// Determinism contract: for a fixed build, the reduction order per output
// element is fixed by the blocking constants alone. Threads split the N
// dimension into statically numbered column blocks, so every output element
// is produced by exactly one thread with the same order of partial sums
// regardless of pool size.

#include <cstddef>
#include <cstring>
#include <stdexcept>
#include <vector>

#if defined(__AVX512F__) || defined(__AVX2__)
#include <immintrin.h>
#endif

#include "nodnet/parallel.hpp"

namespace nodnet::detail {

constexpr std::size_t kKC = 256; // K-dimension block
constexpr std::size_t kNC = 512; // N-dimension block (parallel chunk width)

#if defined(__AVX512F__)

constexpr std::size_t kMR = 8;
constexpr std::size_t kNR = 16;

inline void micro_kernel(std::size_t kc, const double* __restrict ap, const double* __restrict bp,
                         double* __restrict cb, std::size_t ldc) {
  __m512d acc0[kMR], acc1[kMR];
  for (std::size_t i = 0; i < kMR; ++i) {
    acc0[i] = _mm512_setzero_pd();
    acc1[i] = _mm512_setzero_pd();
  }
  for (std::size_t p = 0; p < kc; ++p) {
    const __m512d b0 = _mm512_loadu_pd(bp + p * kNR);
    const __m512d b1 = _mm512_loadu_pd(bp + p * kNR + 8);
    const double* a = ap + p * kMR;
    for (std::size_t i = 0; i < kMR; ++i) {
      const __m512d av = _mm512_set1_pd(a[i]);
      acc0[i] = _mm512_fmadd_pd(av, b0, acc0[i]);
      acc1[i] = _mm512_fmadd_pd(av, b1, acc1[i]);
    }
  }
  for (std::size_t i = 0; i < kMR; ++i) {
    double* crow = cb + i * ldc;
    _mm512_storeu_pd(crow, _mm512_add_pd(_mm512_loadu_pd(crow), acc0[i]));
    _mm512_storeu_pd(crow + 8, _mm512_add_pd(_mm512_loadu_pd(crow + 8), acc1[i]));
  }
}

#elif defined(__AVX2__) && defined(__FMA__)

constexpr std::size_t kMR = 6;
constexpr std::size_t kNR = 8;

inline void micro_kernel(std::size_t kc, const double* __restrict ap, const double* __restrict bp,
                         double* __restrict cb, std::size_t ldc) {
  __m256d acc0[kMR], acc1[kMR];
  for (std::size_t i = 0; i < kMR; ++i) {
    acc0[i] = _mm256_setzero_pd();
    acc1[i] = _mm256_setzero_pd();
  }
  for (std::size_t p = 0; p < kc; ++p) {
    const __m256d b0 = _mm256_loadu_pd(bp + p * kNR);
    const __m256d b1 = _mm256_loadu_pd(bp + p * kNR + 4);
    const double* a = ap + p * kMR;
    for (std::size_t i = 0; i < kMR; ++i) {
      const __m256d av = _mm256_set1_pd(a[i]);
      acc0[i] = _mm256_fmadd_pd(av, b0, acc0[i]);
      acc1[i] = _mm256_fmadd_pd(av, b1, acc1[i]);
    }
  }
  for (std::size_t i = 0; i < kMR; ++i) {
    double* crow = cb + i * ldc;
    _mm256_storeu_pd(crow, _mm256_add_pd(_mm256_loadu_pd(crow), acc0[i]));
    _mm256_storeu_pd(crow + 4, _mm256_add_pd(_mm256_loadu_pd(crow + 4), acc1[i]));
  }
}

#else

constexpr std::size_t kMR = 4;
constexpr std::size_t kNR = 8;

inline void micro_kernel(std::size_t kc, const double* __restrict ap, const double* __restrict bp,
                         double* __restrict cb, std::size_t ldc) {
  double acc[kMR][kNR] = {};
  for (std::size_t p = 0; p < kc; ++p) {
    const double* __restrict a = ap + p * kMR;
    const double* __restrict b = bp + p * kNR;
    for (std::size_t i = 0; i < kMR; ++i)
      for (std::size_t j = 0; j < kNR; ++j) acc[i][j] += a[i] * b[j];
  }
  for (std::size_t i = 0; i < kMR; ++i)
    for (std::size_t j = 0; j < kNR; ++j) cb[i * ldc + j] += acc[i][j];
}

#endif

struct GemmScratch {
  std::vector<double> a_pack, b_pack, c_buf;
};

inline GemmScratch& gemm_scratch() {
  thread_local GemmScratch s;
  return s;
}

// Packs A(i0..i0+mc, k0..k0+kc) into mr-sliced column-major panels, zero-padded
// to a multiple of kMR rows.
template <typename T>
void pack_a(const T* a, std::size_t lda, bool trans_a, std::size_t i0, std::size_t mc,
            std::size_t k0, std::size_t kc, double* ap) {
  const std::size_t mtiles = (mc + kMR - 1) / kMR;
  for (std::size_t t = 0; t < mtiles; ++t) {
    double* dst = ap + t * kMR * kc;
    for (std::size_t p = 0; p < kc; ++p) {
      for (std::size_t r = 0; r < kMR; ++r) {
        const std::size_t i = i0 + t * kMR + r;
        double v = 0.0;
        if (i < i0 + mc) {
          v = trans_a ? static_cast<double>(a[(k0 + p) * lda + i])
                      : static_cast<double>(a[i * lda + (k0 + p)]);
        }
        dst[p * kMR + r] = v;
      }
    }
  }
}

// Packs B(k0..k0+kc, j0..j0+nc) into nr-sliced row panels, zero-padded to a
// multiple of kNR columns.
template <typename T>
void pack_b(const T* b, std::size_t ldb, bool trans_b, std::size_t k0, std::size_t kc,
            std::size_t j0, std::size_t nc, double* bp) {
  const std::size_t ntiles = (nc + kNR - 1) / kNR;
  for (std::size_t t = 0; t < ntiles; ++t) {
    double* dst = bp + t * kNR * kc;
    for (std::size_t p = 0; p < kc; ++p) {
      for (std::size_t q = 0; q < kNR; ++q) {
        const std::size_t j = j0 + t * kNR + q;
        double v = 0.0;
        if (j < j0 + nc) {
          v = trans_b ? static_cast<double>(b[j * ldb + (k0 + p)])
                      : static_cast<double>(b[(k0 + p) * ldb + j]);
        }
        dst[p * kNR + q] = v;
      }
    }
  }
}

template <typename T>
void gemm_block(bool trans_a, bool trans_b, std::size_t M, std::size_t K, const T* a,
                std::size_t lda, const T* b, std::size_t ldb, T* c, std::size_t ldc,
                bool accumulate, std::size_t j0, std::size_t nc) {
  GemmScratch& s = gemm_scratch();
  const std::size_t m_pad = (M + kMR - 1) / kMR * kMR;
  const std::size_t n_pad = (nc + kNR - 1) / kNR * kNR;
  s.c_buf.assign(m_pad * n_pad, 0.0);
  s.a_pack.resize(m_pad * kKC);
  s.b_pack.resize(n_pad * kKC);

  for (std::size_t k0 = 0; k0 < K; k0 += kKC) {
    const std::size_t kc = std::min(kKC, K - k0);
    pack_b(b, ldb, trans_b, k0, kc, j0, nc, s.b_pack.data());
    pack_a(a, lda, trans_a, 0, M, k0, kc, s.a_pack.data());
    for (std::size_t it = 0; it < m_pad / kMR; ++it) {
      const double* ap = s.a_pack.data() + it * kMR * kc;
      for (std::size_t jt = 0; jt < n_pad / kNR; ++jt) {
        micro_kernel(kc, ap, s.b_pack.data() + jt * kNR * kc,
                     s.c_buf.data() + it * kMR * n_pad + jt * kNR, n_pad);
      }
    }
  }

  for (std::size_t i = 0; i < M; ++i) {
    T* crow = c + i * ldc + j0;
    const double* brow = s.c_buf.data() + i * n_pad;
    if (accumulate) {
      for (std::size_t j = 0; j < nc; ++j) crow[j] = static_cast<T>(static_cast<double>(crow[j]) + brow[j]);
    } else {
      for (std::size_t j = 0; j < nc; ++j) crow[j] = static_cast<T>(brow[j]);
    }
  }
}

template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t M, std::size_t N, std::size_t K, const T* a,
          std::size_t lda, const T* b, std::size_t ldb, T* c, std::size_t ldc, bool accumulate) {
  if (M == 0 || N == 0) return;
  if (K == 0) {
    if (!accumulate)
      for (std::size_t i = 0; i < M; ++i) std::memset(c + i * ldc, 0, N * sizeof(T));
    return;
  }
  const std::size_t njblocks = (N + kNC - 1) / kNC;
  parallel_for_chunks(njblocks, [&](std::size_t blk) {
    const std::size_t j0 = blk * kNC;
    const std::size_t nc = std::min(kNC, N - j0);
    gemm_block(trans_a, trans_b, M, K, a, lda, b, ldb, c, ldc, accumulate, j0, nc);
  });
}

}  // namespace nodnet::detail
