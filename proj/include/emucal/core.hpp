#pragma once

#include <span>
#include <vector>

#include "emucal/errors.hpp"

namespace emucal {

// A point theta in the J-dimensional hidden-parameter space.
using ParamVector = std::vector<double>;

// T x M output matrix of a simulator or surrogate, time-major.
struct OutputSeries {
  std::vector<double> values;  // values[t * features + m]
  int time_steps = 0;
  int features = 0;

  OutputSeries() = default;
  OutputSeries(int t_steps, int n_features)
      : values(static_cast<std::size_t>(t_steps) * n_features, 0.0),
        time_steps(t_steps),
        features(n_features) {}

  double& at(int t, int m) { return values[static_cast<std::size_t>(t) * features + m]; }
  double at(int t, int m) const { return values[static_cast<std::size_t>(t) * features + m]; }

  bool same_shape(const OutputSeries& other) const {
    return time_steps == other.time_steps && features == other.features;
  }

  bool all_finite() const;
};

// Observed data d plus the per-cell Gaussian noise scale sigma (both T x M).
struct ObservedData {
  OutputSeries data;
  OutputSeries noise_sigma;
};

struct PriorSpec {
  enum class Kind { UniformBox, Gaussian };

  Kind kind = Kind::UniformBox;
  // uniform-box
  std::vector<double> lower, upper;
  // gaussian (diagonal covariance). Sampling support is truncated at
  // +/- kGaussianTruncationSigmas per dimension.
  std::vector<double> mean, sigma;

  static constexpr double kGaussianTruncationSigmas = 6.0;

  static PriorSpec uniform_box(std::vector<double> lo, std::vector<double> hi);
  static PriorSpec gaussian(std::vector<double> mu, std::vector<double> sd);

  int dim() const {
    return static_cast<int>(kind == Kind::UniformBox ? lower.size() : mean.size());
  }

  // Bounds of the (possibly truncated) sampling support.
  double support_lower(int j) const;
  double support_upper(int j) const;
  bool contains(const ParamVector& theta) const;

  void validate() const;
};

struct GroundTruth {
  ParamVector theta_star;
};

struct MetricPair {
  double rmse = 0.0;
  double pearson = 0.0;
};

// sqrt(mean((a_i - b_i)^2)). Throws DimensionError on length mismatch / empty.
double rmse(std::span<const double> a, std::span<const double> b);

// Sample Pearson correlation, clamped to [-1, 1] against roundoff.
// Throws DimensionError on mismatch, ValueError on zero variance.
double pearson(std::span<const double> a, std::span<const double> b);

// Gaussian log-likelihood of the observation under prediction z:
//   sum_{t,m} [ -0.5 ln(2 pi sigma^2) - (d - z)^2 / (2 sigma^2) ]
// Entirely in log domain.
double log_likelihood(const OutputSeries& z, const ObservedData& obs);

}  // namespace emucal
