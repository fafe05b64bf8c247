#pragma once

#include <cstddef>
#include <functional>

namespace emucal::kernels {

// Dense kernels behind the network engine. Every kernel computes each output
// element with a fixed 8-lane summation order, and the OpenMP variants only
// distribute independent output elements across threads, so the serial
// reference (ref::) and parallel (par::) paths produce bitwise-identical
// results for any thread count. tests/ assert that equivalence and
// tools/bench_kernels compares their throughput.

// y[r] = b[r] + sum_j W[r,j] x[j]            (W is rows x cols, row-major)
// Y[i,r] = b[r] + sum_j W[r,j] X[i,j]        (X is n x cols, Y is n x rows)
// dX[i,j] = sum_r dY[i,r] W[r,j]             (accumulated in ascending r)
// dW[r,j] += sum_i dY[i,r] X[i,j], db[r] += sum_i dY[i,r]   (ascending i)
// grad_weights_set overwrites instead of accumulating (same element order).

namespace ref {
void affine(const double* w, const double* b, const double* x, double* y, int rows, int cols);
void affine_batch(const double* w, const double* b, const double* x, double* y, int n, int rows,
                  int cols);
void grad_input(const double* w, const double* dy, double* dx, int n, int rows, int cols);
void grad_weights(const double* x, const double* dy, double* dw, double* db, int n, int rows,
                  int cols);
void grad_weights_set(const double* x, const double* dy, double* dw, double* db, int n, int rows,
                      int cols);
}  // namespace ref

namespace par {
void affine(const double* w, const double* b, const double* x, double* y, int rows, int cols);
void affine_batch(const double* w, const double* b, const double* x, double* y, int n, int rows,
                  int cols);
void grad_input(const double* w, const double* dy, double* dx, int n, int rows, int cols);
void grad_weights(const double* x, const double* dy, double* dw, double* db, int n, int rows,
                  int cols);
void grad_weights_set(const double* x, const double* dy, double* dw, double* db, int n, int rows,
                      int cols);
}  // namespace par

// Dispatching entry points: use the parallel path when it is enabled, the
// caller is not already inside a parallel region, and the operation is large
// enough to amortize the fork.
void affine(const double* w, const double* b, const double* x, double* y, int rows, int cols);
void affine_batch(const double* w, const double* b, const double* x, double* y, int n, int rows,
                  int cols);
void grad_input(const double* w, const double* dy, double* dx, int n, int rows, int cols);
void grad_weights(const double* x, const double* dy, double* dw, double* db, int n, int rows,
                  int cols);
// Overwriting variant: dW[r,j] = sum_i dY[i,r] X[i,j], db[r] = sum_i dY[i,r].
void grad_weights_set(const double* x, const double* dy, double* dw, double* db, int n, int rows,
                      int cols);

bool parallel_enabled();
void set_parallel(bool on);
int max_threads();
void set_max_threads(int n);

// Runs fn(i) for i in [0, n) on the worker pool; each index must write only
// its own slots. Falls back to a serial loop inside nested contexts.
void parallel_for(int n, const std::function<void(int)>& fn);

}  // namespace emucal::kernels
