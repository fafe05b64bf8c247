// Compares the serial reference kernels against the OpenMP variants on the
// shapes the trainer actually runs, and times one full training epoch both
// ways. The two paths must agree bitwise; this tool reports throughput.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <vector>

#include "emucal/kernels.hpp"
#include "emucal/nn.hpp"
#include "emucal/rng.hpp"

using namespace emucal;
namespace chrono = std::chrono;

namespace {

double time_of(const std::function<void()>& fn, int reps) {
  // One warmup, then best of reps.
  fn();
  double best = 1e100;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = chrono::steady_clock::now();
    fn();
    const auto t1 = chrono::steady_clock::now();
    best = std::min(best, chrono::duration<double>(t1 - t0).count());
  }
  return best;
}

void bench_shape(int batch, int rows, int cols, Rng& rng) {
  std::vector<double> w(static_cast<std::size_t>(rows) * cols), b(rows);
  std::vector<double> x(static_cast<std::size_t>(batch) * cols);
  std::vector<double> y(static_cast<std::size_t>(batch) * rows);
  std::vector<double> dy(y.size()), dx(x.size());
  std::vector<double> dw(w.size(), 0.0), db(b.size(), 0.0);
  for (auto& v : w) v = rng.uniform(-1, 1);
  for (auto& v : b) v = rng.uniform(-1, 1);
  for (auto& v : x) v = rng.uniform(-1, 1);
  for (auto& v : dy) v = rng.uniform(-1, 1);

  const double macs = static_cast<double>(batch) * rows * cols;
  const int reps = macs > 4e6 ? 20 : 200;

  struct Row {
    const char* name;
    std::function<void()> ref_fn, par_fn;
  };
  const Row rows_to_run[] = {
      {"affine_batch",
       [&] { kernels::ref::affine_batch(w.data(), b.data(), x.data(), y.data(), batch, rows, cols); },
       [&] { kernels::par::affine_batch(w.data(), b.data(), x.data(), y.data(), batch, rows, cols); }},
      {"grad_input",
       [&] { kernels::ref::grad_input(w.data(), dy.data(), dx.data(), batch, rows, cols); },
       [&] { kernels::par::grad_input(w.data(), dy.data(), dx.data(), batch, rows, cols); }},
      {"grad_weights",
       [&] { kernels::ref::grad_weights(x.data(), dy.data(), dw.data(), db.data(), batch, rows, cols); },
       [&] { kernels::par::grad_weights(x.data(), dy.data(), dw.data(), db.data(), batch, rows, cols); }},
  };

  for (const auto& row : rows_to_run) {
    const double t_ref = time_of(row.ref_fn, reps);
    const double t_par = time_of(row.par_fn, reps);
    std::printf("%-13s B=%-3d %4dx%-4d  ref %8.1f Mflop/s  omp %8.1f Mflop/s  speedup %.2fx\n",
                row.name, batch, rows, cols, 2e-6 * macs / t_ref, 2e-6 * macs / t_par,
                t_ref / t_par);
  }
}

void bench_training_epoch(int j_dim, int m_feat, int eta, int n, const char* label) {
  Rng rng(7);
  nn::ComponentNet net = nn::build_component_net(j_dim, m_feat, eta, rng);
  std::vector<double> x(static_cast<std::size_t>(n) * net.input_width());
  std::vector<double> y(static_cast<std::size_t>(n) * net.output_width());
  for (auto& v : x) v = rng.uniform(-1, 1);
  for (auto& v : y) v = rng.uniform(-1, 1);

  double macs_per_sample = 0.0;
  for (const auto& l : net.layers) macs_per_sample += static_cast<double>(l.in) * l.out;
  const double flops = 3.0 * 2.0 * macs_per_sample * n;  // fwd + both grad passes

  for (bool parallel : {false, true}) {
    kernels::set_parallel(parallel);
    nn::ComponentNet copy = net;
    Rng fit_rng(11);
    const auto t0 = chrono::steady_clock::now();
    nn::fit_net(copy, x, y, n, 1, 20, fit_rng);
    const double secs = chrono::duration<double>(chrono::steady_clock::now() - t0).count();
    std::printf("epoch %-22s n=%-5d %s  %7.3f s  (~%.1f Gflop/s)\n", label, n,
                parallel ? "omp" : "ref", secs, 1e-9 * flops / secs);
  }
  kernels::set_parallel(true);
}

}  // namespace

int main(int argc, char** argv) {
  int threads = 0;
  if (argc > 1) threads = std::atoi(argv[1]);
  if (threads > 0) kernels::set_max_threads(threads);
  std::printf("threads: %d\n", kernels::max_threads());

  Rng rng(123);
  bench_shape(20, 140, 14, rng);
  bench_shape(20, 560, 140, rng);
  bench_shape(20, 560, 560, rng);
  bench_shape(20, 60, 560, rng);
  bench_shape(20, 180, 180, rng);
  std::printf("\n");
  bench_training_epoch(2, 1, 15, 1800, "toy component (eta=15)");
  bench_training_epoch(8, 6, 10, 1350, "standin component (eta=10)");
  return 0;
}
