#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace emucal {

// Deterministic random stream. All draws are implemented on top of the raw
// mt19937_64 output so that sequences are reproducible bit-for-bit across
// standard library implementations (std::*_distribution makes no such
// guarantee).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  // Uniform on [0, 1).
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via the inverse CDF of a uniform draw.
  double normal();

  // Uniform integer in [0, n). Unbiased (rejection on the top band).
  std::uint64_t uniform_int(std::uint64_t n);

  // Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_int(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  std::uint64_t raw() { return gen_(); }

 private:
  std::mt19937_64 gen_;
};

// Standard normal quantile function. Acklam's rational approximation polished
// with one Halley step through erfc; accurate to ~1e-14 over (0, 1).
double inverse_normal_cdf(double p);

// Standard normal CDF.
double normal_cdf(double x);

// Derives a named sub-seed from a master seed, so that independent phases of
// a run own independent streams regardless of execution order.
std::uint64_t seed_for(std::uint64_t master, std::string_view label);

}  // namespace emucal
