#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <cstring>
#include <vector>

#include "emucal/kernels.hpp"
#include "emucal/rng.hpp"

using namespace emucal;

namespace {

struct Problem {
  int n, rows, cols;
  std::vector<double> w, b, x, dy;
};

Problem make_problem(int n, int rows, int cols, std::uint64_t seed) {
  Problem p{n, rows, cols, {}, {}, {}, {}};
  Rng rng(seed);
  p.w.resize(static_cast<std::size_t>(rows) * cols);
  p.b.resize(rows);
  p.x.resize(static_cast<std::size_t>(n) * cols);
  p.dy.resize(static_cast<std::size_t>(n) * rows);
  for (auto& v : p.w) v = rng.uniform(-1, 1);
  for (auto& v : p.b) v = rng.uniform(-1, 1);
  for (auto& v : p.x) v = rng.uniform(-1, 1);
  for (auto& v : p.dy) v = rng.uniform(-1, 1);
  return p;
}

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("serial and parallel kernels agree bitwise") {
  // Shapes include tiny, odd, and trainer-sized cases.
  const int shapes[][3] = {{1, 3, 5},  {2, 7, 1},   {20, 140, 14}, {20, 560, 560},
                           {1, 1, 1},  {20, 60, 560}, {3, 33, 17},  {20, 180, 180}};
  for (const auto& s : shapes) {
    const Problem p = make_problem(s[0], s[1], s[2], 1000 + s[0] + s[1] + s[2]);

    std::vector<double> y_ref(static_cast<std::size_t>(p.n) * p.rows);
    std::vector<double> y_par = y_ref;
    kernels::ref::affine_batch(p.w.data(), p.b.data(), p.x.data(), y_ref.data(), p.n, p.rows, p.cols);
    kernels::par::affine_batch(p.w.data(), p.b.data(), p.x.data(), y_par.data(), p.n, p.rows, p.cols);
    CHECK(bitwise_equal(y_ref, y_par));

    std::vector<double> dx_ref(p.x.size()), dx_par(p.x.size());
    kernels::ref::grad_input(p.w.data(), p.dy.data(), dx_ref.data(), p.n, p.rows, p.cols);
    kernels::par::grad_input(p.w.data(), p.dy.data(), dx_par.data(), p.n, p.rows, p.cols);
    CHECK(bitwise_equal(dx_ref, dx_par));

    std::vector<double> dw_ref(p.w.size(), 0.5), db_ref(p.b.size(), -0.25);
    std::vector<double> dw_par = dw_ref, db_par = db_ref;
    kernels::ref::grad_weights(p.x.data(), p.dy.data(), dw_ref.data(), db_ref.data(), p.n, p.rows, p.cols);
    kernels::par::grad_weights(p.x.data(), p.dy.data(), dw_par.data(), db_par.data(), p.n, p.rows, p.cols);
    CHECK(bitwise_equal(dw_ref, dw_par));
    CHECK(bitwise_equal(db_ref, db_par));
  }
}

TEST_CASE("single-sample affine matches batch row") {
  const Problem p = make_problem(4, 23, 11, 77);
  std::vector<double> y_batch(static_cast<std::size_t>(p.n) * p.rows);
  kernels::ref::affine_batch(p.w.data(), p.b.data(), p.x.data(), y_batch.data(), p.n, p.rows, p.cols);
  for (int i = 0; i < p.n; ++i) {
    std::vector<double> y(p.rows);
    kernels::affine(p.w.data(), p.b.data(), p.x.data() + static_cast<std::size_t>(i) * p.cols,
                    y.data(), p.rows, p.cols);
    CHECK(std::memcmp(y.data(), y_batch.data() + static_cast<std::size_t>(i) * p.rows,
                      sizeof(double) * p.rows) == 0);
  }
}

TEST_CASE("dispatching entry point matches reference regardless of setting") {
  const Problem p = make_problem(20, 560, 140, 42);
  std::vector<double> y_ref(static_cast<std::size_t>(p.n) * p.rows), y_disp = y_ref;
  kernels::ref::affine_batch(p.w.data(), p.b.data(), p.x.data(), y_ref.data(), p.n, p.rows, p.cols);

  for (bool on : {true, false}) {
    kernels::set_parallel(on);
    kernels::affine_batch(p.w.data(), p.b.data(), p.x.data(), y_disp.data(), p.n, p.rows, p.cols);
    CHECK(bitwise_equal(y_ref, y_disp));
  }
  kernels::set_parallel(true);
}

TEST_CASE("grad_weights accumulates rather than overwrites") {
  const Problem p = make_problem(3, 4, 5, 9);
  std::vector<double> dw1(p.w.size(), 0.0), db1(p.b.size(), 0.0);
  kernels::ref::grad_weights(p.x.data(), p.dy.data(), dw1.data(), db1.data(), p.n, p.rows, p.cols);
  std::vector<double> dw2 = dw1, db2 = db1;
  kernels::ref::grad_weights(p.x.data(), p.dy.data(), dw2.data(), db2.data(), p.n, p.rows, p.cols);
  for (std::size_t i = 0; i < dw1.size(); ++i)
    CHECK(dw2[i] == doctest::Approx(2.0 * dw1[i]).epsilon(1e-12));
}

TEST_CASE("parallel_for covers every index exactly once") {
  std::vector<std::atomic<int>> hits(1000);
  for (auto& h : hits) h = 0;
  kernels::parallel_for(1000, [&](int i) { hits[i]++; });
  for (auto& h : hits) CHECK(h == 1);
}
