#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

namespace kdyn {

// Dense row-major kernels built on register-tiled micro-kernels. Every output
// element accumulates its contraction in a fixed order through explicit fma,
// so results are bit-identical no matter which tile shape a row lands in or
// how callers chunk rows across workers.

#if defined(__GNUC__)
#define KDYN_NOINLINE __attribute__((noinline))
#else
#define KDYN_NOINLINE
#endif

namespace detail {

// panel widths in elements: two tiers, a wide one and half of it
template <class Real>
inline constexpr int kNr1 = int(128 / sizeof(Real));
template <class Real>
inline constexpr int kNr2 = int(64 / sizeof(Real));
inline constexpr int kMr = 4;

// C_tile (MR x NR) = alpha * A_tile (MR x k) * B (k x NR, row stride ldb)
//                    + beta * C_tile
// The accumulator tile lives in registers; k runs sequentially. Kept out of
// line so the surrounding loop nest cannot disturb its register allocation.
// The tile is always full width: a runtime column count anywhere in the
// function forces the accumulator onto the stack for its whole lifetime.
template <class Real, int MR, int NR>
KDYN_NOINLINE void tile_nn(std::size_t k, Real alpha, const Real* __restrict A,
                    std::size_t lda, const Real* __restrict B, std::size_t ldb,
                    Real beta, Real* __restrict C, std::size_t ldc) {
  Real acc[MR][NR];
  for (int r = 0; r < MR; ++r)
    for (int j = 0; j < NR; ++j) acc[r][j] = Real(0);
  for (std::size_t p = 0; p < k; ++p) {
    const Real* __restrict b = B + p * ldb;
    for (int r = 0; r < MR; ++r) {
      const Real a = A[std::size_t(r) * lda + p];
      for (int j = 0; j < NR; ++j) acc[r][j] = std::fma(a, b[j], acc[r][j]);
    }
  }
  for (int r = 0; r < MR; ++r) {
    Real* __restrict c = C + std::size_t(r) * ldc;
    if (beta == Real(0)) {
      for (int j = 0; j < NR; ++j) c[j] = alpha * acc[r][j];
    } else {
      for (int j = 0; j < NR; ++j)
        c[j] = std::fma(beta, c[j], alpha * acc[r][j]);
    }
  }
}

template <class Real, int NR>
inline void tile_rows_nn(std::size_t mi, std::size_t k, Real alpha,
                         const Real* A, std::size_t lda, const Real* B,
                         std::size_t ldb, Real beta, Real* C, std::size_t ldc) {
  std::size_t i = 0;
  for (; i + kMr <= mi; i += kMr)
    tile_nn<Real, kMr, NR>(k, alpha, A + i * lda, lda, B, ldb, beta,
                           C + i * ldc, ldc);
  for (; i < mi; ++i)
    tile_nn<Real, 1, NR>(k, alpha, A + i * lda, lda, B, ldb, beta, C + i * ldc,
                         ldc);
}

// Same tile with the column count fixed at compile time and B read in place,
// either k x n (BT false) or n x k (BT true, column j walks row j of B).
// Serves every width below the narrow panel tier; dispatch happens once per
// gemm call in narrow_cols.
template <class Real, int MR, int NR, bool BT>
KDYN_NOINLINE void tile_narrow(std::size_t k, Real alpha,
                               const Real* __restrict A, std::size_t lda,
                               const Real* __restrict B, std::size_t ldb,
                               Real beta, Real* __restrict C,
                               std::size_t ldc) {
  Real acc[MR][NR];
  for (int r = 0; r < MR; ++r)
    for (int j = 0; j < NR; ++j) acc[r][j] = Real(0);
  for (std::size_t p = 0; p < k; ++p) {
    Real bv[NR];
    for (int j = 0; j < NR; ++j)
      bv[j] = BT ? B[std::size_t(j) * ldb + p] : B[p * ldb + j];
    for (int r = 0; r < MR; ++r) {
      const Real a = A[std::size_t(r) * lda + p];
      for (int j = 0; j < NR; ++j) acc[r][j] = std::fma(a, bv[j], acc[r][j]);
    }
  }
  for (int r = 0; r < MR; ++r) {
    Real* __restrict c = C + std::size_t(r) * ldc;
    if (beta == Real(0)) {
      for (int j = 0; j < NR; ++j) c[j] = alpha * acc[r][j];
    } else {
      for (int j = 0; j < NR; ++j)
        c[j] = std::fma(beta, c[j], alpha * acc[r][j]);
    }
  }
}

template <class Real, int NR, bool BT>
inline void tile_rows_narrow(std::size_t mi, std::size_t k, Real alpha,
                             const Real* A, std::size_t lda, const Real* B,
                             std::size_t ldb, Real beta, Real* C,
                             std::size_t ldc) {
  std::size_t i = 0;
  for (; i + kMr <= mi; i += kMr)
    tile_narrow<Real, kMr, NR, BT>(k, alpha, A + i * lda, lda, B, ldb, beta,
                                   C + i * ldc, ldc);
  for (; i < mi; ++i)
    tile_narrow<Real, 1, NR, BT>(k, alpha, A + i * lda, lda, B, ldb, beta,
                                 C + i * ldc, ldc);
}

// Picks the fixed-width kernel matching a runtime column count in
// [1, kNr2). The chain is walked once per call, not per tile.
template <class Real, bool BT, int W = kNr2<Real> - 1>
inline void narrow_cols(std::size_t nr, std::size_t m, std::size_t k,
                        Real alpha, const Real* A, std::size_t lda,
                        const Real* B, std::size_t ldb, Real beta, Real* C,
                        std::size_t ldc) {
  if constexpr (W >= 1) {
    if (nr == std::size_t(W)) {
      tile_rows_narrow<Real, W, BT>(m, k, alpha, A, lda, B, ldb, beta, C, ldc);
      return;
    }
    narrow_cols<Real, BT, W - 1>(nr, m, k, alpha, A, lda, B, ldb, beta, C,
                                 ldc);
  }
}

// k x NR panel holding rows [j0, j0+NR) of a transposed source (B stored
// n x k; panel row p gathers B[j0+j][p]).
template <class Real, int NR>
inline void pack_panel_t(std::size_t k, const Real* B, std::size_t ldb,
                         std::size_t j0, Real* panel) {
  for (std::size_t p = 0; p < k; ++p) {
    Real* row = panel + p * NR;
    for (std::size_t j = 0; j < std::size_t(NR); ++j)
      row[j] = B[(j0 + j) * ldb + p];
  }
}

template <class Real>
inline std::vector<Real>& panel_scratch() {
  thread_local std::vector<Real> buf;
  return buf;
}

// Shared driver for the nn and nt layouts; nt packs transposed panels.
template <class Real>
void gemm_panels(std::size_t m, std::size_t n, std::size_t k, Real alpha,
                 const Real* A, std::size_t lda, const Real* B,
                 std::size_t ldb, Real beta, Real* C, std::size_t ldc,
                 bool b_transposed) {
  constexpr int NR1 = kNr1<Real>;
  constexpr int NR2 = kNr2<Real>;
  std::size_t j0 = 0;
  while (j0 < n) {
    const std::size_t rem = n - j0;
    if (rem >= std::size_t(NR1)) {
      if (!b_transposed) {
        tile_rows_nn<Real, NR1>(m, k, alpha, A, lda, B + j0, ldb, beta, C + j0,
                                ldc);
      } else {
        auto& panel = panel_scratch<Real>();
        panel.resize(k * NR1);
        pack_panel_t<Real, NR1>(k, B, ldb, j0, panel.data());
        tile_rows_nn<Real, NR1>(m, k, alpha, A, lda, panel.data(), NR1, beta,
                                C + j0, ldc);
      }
      j0 += NR1;
    } else if (rem >= std::size_t(NR2)) {
      if (!b_transposed) {
        tile_rows_nn<Real, NR2>(m, k, alpha, A, lda, B + j0, ldb, beta, C + j0,
                                ldc);
      } else {
        auto& panel = panel_scratch<Real>();
        panel.resize(k * NR2);
        pack_panel_t<Real, NR2>(k, B, ldb, j0, panel.data());
        tile_rows_nn<Real, NR2>(m, k, alpha, A, lda, panel.data(), NR2, beta,
                                C + j0, ldc);
      }
      j0 += NR2;
    } else {
      if (b_transposed) {
        narrow_cols<Real, true>(rem, m, k, alpha, A, lda, B + j0 * ldb, ldb,
                                beta, C + j0, ldc);
      } else {
        narrow_cols<Real, false>(rem, m, k, alpha, A, lda, B + j0, ldb, beta,
                                 C + j0, ldc);
      }
      j0 = n;
    }
  }
}

}  // namespace detail

// C (m x n) = alpha * A (m x k) * B (k x n) + beta * C
template <class Real>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, Real alpha,
             const Real* A, std::size_t lda, const Real* B, std::size_t ldb,
             Real beta, Real* C, std::size_t ldc) {
  detail::gemm_panels(m, n, k, alpha, A, lda, B, ldb, beta, C, ldc, false);
}

// C (m x n) = alpha * A (m x k) * B^T + beta * C, with B stored (n x k).
template <class Real>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, Real alpha,
             const Real* A, std::size_t lda, const Real* B, std::size_t ldb,
             Real beta, Real* C, std::size_t ldc) {
  detail::gemm_panels(m, n, k, alpha, A, lda, B, ldb, beta, C, ldc, true);
}

namespace detail {

template <class Real>
inline std::vector<Real>& tn_scratch() {
  thread_local std::vector<Real> buf;
  return buf;
}

}  // namespace detail

// C (m x n) = alpha * A^T * B + beta * C, with A stored (r x m), B (r x n).
// Row blocks of the contraction are transposed into scratch and pushed
// through the register-tiled driver; per-element order follows the fixed
// block grid, not the caller's partitioning.
template <class Real>
void gemm_tn(std::size_t m, std::size_t n, std::size_t r, Real alpha,
             const Real* A, std::size_t lda, const Real* B, std::size_t ldb,
             Real beta, Real* C, std::size_t ldc) {
  constexpr std::size_t KB = 512;
  if (r == 0) {
    for (std::size_t i = 0; i < m; ++i) {
      Real* c = C + i * ldc;
      for (std::size_t j = 0; j < n; ++j)
        c[j] = (beta == Real(0)) ? Real(0) : beta * c[j];
    }
    return;
  }
  // leading dimension padded off the power-of-two stride; a 2^k row pitch
  // makes the strided transpose writes collide in a handful of cache sets
  const std::size_t lat = KB + 64 / sizeof(Real);
  auto& at = detail::tn_scratch<Real>();
  at.resize(m * lat);
  Real eff_beta = beta;
  for (std::size_t b0 = 0; b0 < r; b0 += KB) {
    const std::size_t kb = std::min(KB, r - b0);
    for (std::size_t b = 0; b < kb; ++b) {
      const Real* src = A + (b0 + b) * lda;
      for (std::size_t i = 0; i < m; ++i) at[i * lat + b] = src[i];
    }
    detail::gemm_panels<Real>(m, n, kb, alpha, at.data(), lat, B + b0 * ldb,
                              ldb, eff_beta, C, ldc, false);
    eff_beta = Real(1);
  }
}

template <class Real>
Real dot_strided8(const Real* a, const Real* b, std::size_t k) {
  Real acc[8] = {Real(0), Real(0), Real(0), Real(0),
                 Real(0), Real(0), Real(0), Real(0)};
  std::size_t p = 0;
  for (; p + 8 <= k; p += 8)
    for (std::size_t w = 0; w < 8; ++w) acc[w] += a[p + w] * b[p + w];
  for (; p < k; ++p) acc[p & 7] += a[p] * b[p];
  // fixed combine order
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) +
         ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

template <class Real>
void add_row_broadcast(std::size_t n_rows, std::size_t n_cols, Real* Y,
                       std::size_t ldy, const Real* bias) {
  for (std::size_t i = 0; i < n_rows; ++i) {
    Real* y = Y + i * ldy;
    for (std::size_t j = 0; j < n_cols; ++j) y[j] += bias[j];
  }
}

// column sums: out[j] += sum_i A[i, j]
template <class Real>
void col_sums(std::size_t n_rows, std::size_t n_cols, const Real* A,
              std::size_t lda, Real* out) {
  for (std::size_t i = 0; i < n_rows; ++i) {
    const Real* a = A + i * lda;
    for (std::size_t j = 0; j < n_cols; ++j) out[j] += a[j];
  }
}

}  // namespace kdyn
