#include "emucal/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>

namespace emucal::kernels {

namespace {

std::atomic<bool> g_parallel{true};

// Minimum multiply-accumulate count before a kernel forks threads.
constexpr long long kMinParallelWork = 1 << 15;

// Every accumulation below goes through std::fma. Implicit contraction is at
// the compiler's discretion per expression, which would let two loop shapes
// of the same reduction round differently; the explicit fma pins one
// semantics for all kernel variants, which is what makes the simple
// reference, the blocked serial path and the OpenMP path bitwise-identical.

// Canonical reduction: 8-lane strided partial sums over the contraction
// index, lanes combined pairwise.
inline double combine8(const double acc[8]) {
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

inline double dot8(const double* a, const double* b, int n) {
  double acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  int k = 0;
  for (; k + 8 <= n; k += 8) {
    for (int l = 0; l < 8; ++l) acc[l] = std::fma(a[k + l], b[k + l], acc[l]);
  }
  for (int l = 0; k < n; ++k, ++l) acc[l] = std::fma(a[k], b[k], acc[l]);
  return combine8(acc);
}

inline bool should_fork(long long work) {
  return g_parallel.load(std::memory_order_relaxed) && !omp_in_parallel() &&
         work >= kMinParallelWork && omp_get_max_threads() > 1;
}

// ---- register-blocked serial bodies --------------------------------------

constexpr int kTileRows = 4;   // output rows per affine tile
constexpr int kTileBatch = 4;  // batch elements per affine/grad tile

// One full 4x4 tile of Y[b, r] = bias[r] + dot(W[r], X[b]).
inline void affine_tile(const double* w, const double* bias, const double* x, double* y,
                        int rows, int cols, int r0, int b0) {
  double acc[kTileRows][kTileBatch][8] = {};
  int k = 0;
  for (; k + 8 <= cols; k += 8) {
    for (int i = 0; i < kTileRows; ++i) {
      const double* wr = w + static_cast<std::size_t>(r0 + i) * cols + k;
      for (int j = 0; j < kTileBatch; ++j) {
        const double* xb = x + static_cast<std::size_t>(b0 + j) * cols + k;
        for (int l = 0; l < 8; ++l) acc[i][j][l] = std::fma(wr[l], xb[l], acc[i][j][l]);
      }
    }
  }
  for (int l = 0; k < cols; ++k, ++l)
    for (int i = 0; i < kTileRows; ++i)
      for (int j = 0; j < kTileBatch; ++j)
        acc[i][j][l] = std::fma(w[static_cast<std::size_t>(r0 + i) * cols + k],
                                x[static_cast<std::size_t>(b0 + j) * cols + k], acc[i][j][l]);
  for (int i = 0; i < kTileRows; ++i)
    for (int j = 0; j < kTileBatch; ++j)
      y[static_cast<std::size_t>(b0 + j) * rows + r0 + i] = bias[r0 + i] + combine8(acc[i][j]);
}

// Rows [r0, r1) of the batched affine, blocked where full tiles fit.
void affine_rows(const double* w, const double* bias, const double* x, double* y, int n, int rows,
                 int cols, int r0, int r1) {
  const int rb_end = r0 + (r1 - r0) / kTileRows * kTileRows;
  const int bb_end = n / kTileBatch * kTileBatch;
  for (int r = r0; r < rb_end; r += kTileRows) {
    for (int b = 0; b < bb_end; b += kTileBatch) affine_tile(w, bias, x, y, rows, cols, r, b);
    for (int b = bb_end; b < n; ++b)
      for (int i = 0; i < kTileRows; ++i)
        y[static_cast<std::size_t>(b) * rows + r + i] =
            bias[r + i] + dot8(w + static_cast<std::size_t>(r + i) * cols,
                               x + static_cast<std::size_t>(b) * cols, cols);
  }
  for (int r = rb_end; r < r1; ++r)
    for (int b = 0; b < n; ++b)
      y[static_cast<std::size_t>(b) * rows + r] =
          bias[r] + dot8(w + static_cast<std::size_t>(r) * cols,
                         x + static_cast<std::size_t>(b) * cols, cols);
}

// dX rows for batch elements [b0, b1): dX[b, j] = sum_r dY[b, r] W[r, j],
// r ascending per element. Blocks of 4 batch rows share each streamed W row,
// and the r loop is paneled so one W panel serves every batch block before
// the stream moves on. The panel split does not reorder any element's adds.
void grad_input_rows(const double* w, const double* dy, double* dx, int rows, int cols, int b0,
                     int b1) {
  constexpr int kPanelRows = 64;
  for (int b = b0; b < b1; ++b) {
    double* dxb = dx + static_cast<std::size_t>(b) * cols;
    for (int j = 0; j < cols; ++j) dxb[j] = 0.0;
  }
  for (int p0 = 0; p0 < rows; p0 += kPanelRows) {
    const int p1 = std::min(rows, p0 + kPanelRows);
    int b = b0;
    for (; b + kTileBatch <= b1; b += kTileBatch) {
      const double* dyb[kTileBatch];
      double* dxb[kTileBatch];
      for (int i = 0; i < kTileBatch; ++i) {
        dyb[i] = dy + static_cast<std::size_t>(b + i) * rows;
        dxb[i] = dx + static_cast<std::size_t>(b + i) * cols;
      }
      for (int r = p0; r < p1; ++r) {
        const double* wr = w + static_cast<std::size_t>(r) * cols;
        double g[kTileBatch];
        for (int i = 0; i < kTileBatch; ++i) g[i] = dyb[i][r];
        for (int j = 0; j < cols; ++j) {
          const double wv = wr[j];
          for (int i = 0; i < kTileBatch; ++i) dxb[i][j] = std::fma(g[i], wv, dxb[i][j]);
        }
      }
    }
    for (; b < b1; ++b) {
      const double* dyb = dy + static_cast<std::size_t>(b) * rows;
      double* dxb = dx + static_cast<std::size_t>(b) * cols;
      for (int r = p0; r < p1; ++r) {
        const double g = dyb[r];
        const double* wr = w + static_cast<std::size_t>(r) * cols;
        for (int j = 0; j < cols; ++j) dxb[j] = std::fma(g, wr[j], dxb[j]);
      }
    }
  }
}

// dW rows [r0, r1): dW[r, j] (+)= sum_b dY[b, r] X[b, j], b ascending per
// element. Blocks of 4 weight rows share each streamed X row. When
// `accumulate` is false the rows are overwritten, saving the pre-zero pass.
template <bool Accumulate>
void grad_weights_rows(const double* x, const double* dy, double* dw, double* db, int n, int rows,
                       int cols, int r0, int r1) {
  int r = r0;
  for (; r + kTileRows <= r1; r += kTileRows) {
    double acc[kTileRows] = {};
    double* dwr[kTileRows];
    for (int i = 0; i < kTileRows; ++i) {
      dwr[i] = dw + static_cast<std::size_t>(r + i) * cols;
      if (!Accumulate)
        for (int j = 0; j < cols; ++j) dwr[i][j] = 0.0;
    }
    for (int b = 0; b < n; ++b) {
      const double* xb = x + static_cast<std::size_t>(b) * cols;
      const double* gyb = dy + static_cast<std::size_t>(b) * rows + r;
      double g[kTileRows];
      for (int i = 0; i < kTileRows; ++i) {
        g[i] = gyb[i];
        acc[i] += g[i];
      }
      for (int j = 0; j < cols; ++j) {
        const double xv = xb[j];
        for (int i = 0; i < kTileRows; ++i) dwr[i][j] = std::fma(g[i], xv, dwr[i][j]);
      }
    }
    for (int i = 0; i < kTileRows; ++i) {
      if (Accumulate)
        db[r + i] += acc[i];
      else
        db[r + i] = acc[i];
    }
  }
  for (; r < r1; ++r) {
    double* dwr = dw + static_cast<std::size_t>(r) * cols;
    if (!Accumulate)
      for (int j = 0; j < cols; ++j) dwr[j] = 0.0;
    double acc = 0.0;
    for (int b = 0; b < n; ++b) {
      const double g = dy[static_cast<std::size_t>(b) * rows + r];
      acc += g;
      const double* xb = x + static_cast<std::size_t>(b) * cols;
      for (int j = 0; j < cols; ++j) dwr[j] = std::fma(g, xb[j], dwr[j]);
    }
    if (Accumulate)
      db[r] += acc;
    else
      db[r] = acc;
  }
}

}  // namespace

namespace ref {

// Plain canonical loops; the oracle the blocked paths must match bitwise.

void affine(const double* w, const double* b, const double* x, double* y, int rows, int cols) {
  for (int r = 0; r < rows; ++r)
    y[r] = b[r] + dot8(w + static_cast<std::size_t>(r) * cols, x, cols);
}

void affine_batch(const double* w, const double* b, const double* x, double* y, int n, int rows,
                  int cols) {
  for (int i = 0; i < n; ++i)
    affine(w, b, x + static_cast<std::size_t>(i) * cols, y + static_cast<std::size_t>(i) * rows,
           rows, cols);
}

void grad_input(const double* w, const double* dy, double* dx, int n, int rows, int cols) {
  for (int i = 0; i < n; ++i) {
    double* dxi = dx + static_cast<std::size_t>(i) * cols;
    const double* dyi = dy + static_cast<std::size_t>(i) * rows;
    for (int j = 0; j < cols; ++j) dxi[j] = 0.0;
    for (int r = 0; r < rows; ++r) {
      const double g = dyi[r];
      const double* wr = w + static_cast<std::size_t>(r) * cols;
      for (int j = 0; j < cols; ++j) dxi[j] = std::fma(g, wr[j], dxi[j]);
    }
  }
}

void grad_weights(const double* x, const double* dy, double* dw, double* db, int n, int rows,
                  int cols) {
  for (int r = 0; r < rows; ++r) {
    double* dwr = dw + static_cast<std::size_t>(r) * cols;
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
      const double g = dy[static_cast<std::size_t>(i) * rows + r];
      acc += g;
      const double* xi = x + static_cast<std::size_t>(i) * cols;
      for (int j = 0; j < cols; ++j) dwr[j] = std::fma(g, xi[j], dwr[j]);
    }
    db[r] += acc;
  }
}

void grad_weights_set(const double* x, const double* dy, double* dw, double* db, int n, int rows,
                      int cols) {
  for (int r = 0; r < rows; ++r) {
    double* dwr = dw + static_cast<std::size_t>(r) * cols;
    for (int j = 0; j < cols; ++j) dwr[j] = 0.0;
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
      const double g = dy[static_cast<std::size_t>(i) * rows + r];
      acc += g;
      const double* xi = x + static_cast<std::size_t>(i) * cols;
      for (int j = 0; j < cols; ++j) dwr[j] = std::fma(g, xi[j], dwr[j]);
    }
    db[r] = acc;
  }
}

}  // namespace ref

namespace par {

void affine(const double* w, const double* b, const double* x, double* y, int rows, int cols) {
#pragma omp parallel
  {
    const int tid = omp_get_thread_num();
    const int nt = omp_get_num_threads();
    const int r0 = static_cast<int>(static_cast<long long>(rows) * tid / nt);
    const int r1 = static_cast<int>(static_cast<long long>(rows) * (tid + 1) / nt);
    affine_rows(w, b, x, y, 1, rows, cols, r0, r1);
  }
}

void affine_batch(const double* w, const double* b, const double* x, double* y, int n, int rows,
                  int cols) {
#pragma omp parallel
  {
    const int tid = omp_get_thread_num();
    const int nt = omp_get_num_threads();
    const int r0 = static_cast<int>(static_cast<long long>(rows) * tid / nt);
    const int r1 = static_cast<int>(static_cast<long long>(rows) * (tid + 1) / nt);
    affine_rows(w, b, x, y, n, rows, cols, r0, r1);
  }
}

void grad_input(const double* w, const double* dy, double* dx, int n, int rows, int cols) {
#pragma omp parallel
  {
    const int tid = omp_get_thread_num();
    const int nt = omp_get_num_threads();
    const int b0 = static_cast<int>(static_cast<long long>(n) * tid / nt);
    const int b1 = static_cast<int>(static_cast<long long>(n) * (tid + 1) / nt);
    grad_input_rows(w, dy, dx, rows, cols, b0, b1);
  }
}

void grad_weights(const double* x, const double* dy, double* dw, double* db, int n, int rows,
                  int cols) {
#pragma omp parallel
  {
    const int tid = omp_get_thread_num();
    const int nt = omp_get_num_threads();
    const int r0 = static_cast<int>(static_cast<long long>(rows) * tid / nt);
    const int r1 = static_cast<int>(static_cast<long long>(rows) * (tid + 1) / nt);
    grad_weights_rows<true>(x, dy, dw, db, n, rows, cols, r0, r1);
  }
}

void grad_weights_set(const double* x, const double* dy, double* dw, double* db, int n, int rows,
                      int cols) {
#pragma omp parallel
  {
    const int tid = omp_get_thread_num();
    const int nt = omp_get_num_threads();
    const int r0 = static_cast<int>(static_cast<long long>(rows) * tid / nt);
    const int r1 = static_cast<int>(static_cast<long long>(rows) * (tid + 1) / nt);
    grad_weights_rows<false>(x, dy, dw, db, n, rows, cols, r0, r1);
  }
}

}  // namespace par

void affine(const double* w, const double* b, const double* x, double* y, int rows, int cols) {
  if (should_fork(static_cast<long long>(rows) * cols))
    par::affine(w, b, x, y, rows, cols);
  else
    affine_rows(w, b, x, y, 1, rows, cols, 0, rows);
}

void affine_batch(const double* w, const double* b, const double* x, double* y, int n, int rows,
                  int cols) {
  if (should_fork(static_cast<long long>(n) * rows * cols))
    par::affine_batch(w, b, x, y, n, rows, cols);
  else
    affine_rows(w, b, x, y, n, rows, cols, 0, rows);
}

void grad_input(const double* w, const double* dy, double* dx, int n, int rows, int cols) {
  if (should_fork(static_cast<long long>(n) * rows * cols))
    par::grad_input(w, dy, dx, n, rows, cols);
  else
    grad_input_rows(w, dy, dx, rows, cols, 0, n);
}

void grad_weights(const double* x, const double* dy, double* dw, double* db, int n, int rows,
                  int cols) {
  if (should_fork(static_cast<long long>(n) * rows * cols))
    par::grad_weights(x, dy, dw, db, n, rows, cols);
  else
    grad_weights_rows<true>(x, dy, dw, db, n, rows, cols, 0, rows);
}

void grad_weights_set(const double* x, const double* dy, double* dw, double* db, int n, int rows,
                      int cols) {
  if (should_fork(static_cast<long long>(n) * rows * cols))
    par::grad_weights_set(x, dy, dw, db, n, rows, cols);
  else
    grad_weights_rows<false>(x, dy, dw, db, n, rows, cols, 0, rows);
}

bool parallel_enabled() { return g_parallel.load(std::memory_order_relaxed); }

void set_parallel(bool on) { g_parallel.store(on, std::memory_order_relaxed); }

int max_threads() { return omp_get_max_threads(); }

void set_max_threads(int n) {
  if (n >= 1) omp_set_num_threads(n);
}

void parallel_for(int n, const std::function<void(int)>& fn) {
  if (g_parallel.load(std::memory_order_relaxed) && !omp_in_parallel() && n > 1 &&
      omp_get_max_threads() > 1) {
#pragma omp parallel for schedule(dynamic, 1)
    for (int i = 0; i < n; ++i) fn(i);
  } else {
    for (int i = 0; i < n; ++i) fn(i);
  }
}

}  // namespace emucal::kernels
