#pragma once

#include <functional>
#include <vector>

#include "emucal/core.hpp"
#include "emucal/rng.hpp"

namespace emucal {

struct LiveSet {
  std::vector<ParamVector> points;
  std::vector<double> log_likes;
};

struct WeightedSample {
  ParamVector theta;
  double log_like = 0.0;
  double log_weight = 0.0;      // ln w_i
  double log_importance = 0.0;  // ln p_i = ln(L_i w_i / Z)
};

struct NestedRunResult {
  // Dead samples in replacement order, followed by the final live set (whose
  // weights carry the closing evidence increment X_I / N_live each).
  std::vector<WeightedSample> samples;
  double log_evidence = 0.0;
  int iterations = 0;  // dead samples recorded
  long n_like_evals = 0;
  double wall_time = 0.0;
  double information_nats = 0.0;  // H, KL(posterior || prior) estimated from the run
  bool converged = true;
};

struct NsConfig {
  enum class Termination {
    Paper,      // stop when max{L} X_i < exp(tol) Z
    Remaining,  // stop when max{L} X_i < (exp(tol) - 1) Z
  };

  int n_live = 300;
  double tol = 0.5;
  double erf = 0.8;  // sampling efficiency; ellipsoid volume is enlarged by 1/erf
  long max_iter = 200000;
  std::uint64_t seed = 0;
  Termination termination = Termination::Paper;
  long max_draw_tries = 10000;

  void validate() const;
};

struct NsProgress {
  int iteration;
  double log_like;      // ln L_i
  double log_volume;    // ln X_i
  double log_evidence;  // ln Z so far
};
using NsObserver = std::function<void(const NsProgress&)>;

using LogLikeFn = std::function<double(const ParamVector&)>;

// Latin hypercube design over a uniform-box prior: per dimension the n
// samples occupy the n equal-width strata exactly once.
std::vector<ParamVector> lhc_sample(int n, const PriorSpec& prior, Rng& rng);

// Maps a unit-cube point to parameter space: affine for boxes, the normal
// quantile (truncated at +/- 6 sigma) for Gaussian priors.
ParamVector prior_transform(const std::vector<double>& u, const PriorSpec& prior);

// {x : (x - c)^T A^{-1} (x - c) <= 1} with A = shape (row-major).
struct Ellipsoid {
  ParamVector center;
  std::vector<double> shape;
  std::vector<double> chol;  // lower Cholesky factor of shape
  int dim = 0;

  double mahalanobis_sq(const ParamVector& x) const;
  bool contains(const ParamVector& x, double tol = 1e-9) const;
  ParamVector sample(Rng& rng) const;
};

// Center = sample mean; shape = sample covariance scaled so every point has
// Mahalanobis distance <= 1, then enlarged in volume by 1/erf.
Ellipsoid fit_bounding_ellipsoid(const std::vector<ParamVector>& points, double erf);
inline Ellipsoid fit_bounding_ellipsoid(const LiveSet& live, double erf) {
  return fit_bounding_ellipsoid(live.points, erf);
}

struct ConstrainedDraw {
  ParamVector theta;
  std::vector<double> u;  // unit-cube coordinates of theta
  double log_like = 0.0;
  long n_evals = 0;
};

// Uniform draws inside the (unit-cube-space) ellipsoid, rejecting points
// outside [0,1]^J, until the transformed point beats the likelihood
// threshold. Throws SamplingError after max_tries candidates.
ConstrainedDraw draw_constrained(const Ellipsoid& ellipsoid, const PriorSpec& prior,
                                 const LogLikeFn& loglike, double threshold, Rng& rng,
                                 long max_tries);

// The full nested-sampling loop: deterministic shrinkage X_i = exp(-i/N),
// weights w_i = (X_{i-1} - X_{i+1})/2, log-sum-exp evidence accumulation,
// single-ellipsoid constrained replacement, closing live-set increment, and
// importance weights normalized by the final evidence.
NestedRunResult nested_sampling(const LogLikeFn& loglike, const PriorSpec& prior,
                                const NsConfig& cfg, const NsObserver& observer = {});

// Equal-weight posterior draws by multinomial resampling on the importance
// weights.
std::vector<ParamVector> posterior_resample(const NestedRunResult& result, int n, Rng& rng);

constexpr int kHistBins = 50;

struct Hist1D {
  int param = 0;
  double lo = 0.0, hi = 0.0;
  std::vector<double> weights;  // kHistBins
};

struct Hist2D {
  int param_i = 0, param_j = 0;
  double lo_i = 0.0, hi_i = 0.0, lo_j = 0.0, hi_j = 0.0;
  std::vector<double> weights;  // kHistBins x kHistBins, i-major
};

struct PosteriorSummary {
  ParamVector mean;       // importance-weighted mean
  ParamVector map_point;  // sample with the highest log-likelihood
  std::vector<Hist1D> hist1d;
  std::vector<Hist2D> hist2d;
};

// Histogram ranges are the prior's (possibly truncated) support.
PosteriorSummary posterior_summary(const NestedRunResult& result, const PriorSpec& prior);

}  // namespace emucal
