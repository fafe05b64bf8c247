#include "emucal/sampler.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

namespace emucal {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double logsumexp(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double hi = std::max(a, b), lo = std::min(a, b);
  return hi + std::log1p(std::exp(lo - hi));
}

// Lower-triangular Cholesky factor; returns false if the matrix is not
// positive definite.
bool cholesky(const std::vector<double>& a, int n, std::vector<double>& l) {
  l.assign(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= i; ++j) {
      double s = a[static_cast<std::size_t>(i) * n + j];
      for (int k = 0; k < j; ++k)
        s -= l[static_cast<std::size_t>(i) * n + k] * l[static_cast<std::size_t>(j) * n + k];
      if (i == j) {
        if (!(s > 0.0)) return false;
        l[static_cast<std::size_t>(i) * n + i] = std::sqrt(s);
      } else {
        l[static_cast<std::size_t>(i) * n + j] = s / l[static_cast<std::size_t>(j) * n + j];
      }
    }
  }
  return true;
}

}  // namespace

void NsConfig::validate() const {
  if (n_live < 2) throw ConfigError("ns: n_live must be >= 2");
  if (!(tol > 0.0)) throw ConfigError("ns: tol must be positive");
  if (!(erf > 0.0 && erf <= 1.0)) throw ConfigError("ns: erf must be in (0, 1]");
  if (max_iter < 1) throw ConfigError("ns: max_iter must be >= 1");
  if (max_draw_tries < 1) throw ConfigError("ns: max_draw_tries must be >= 1");
}

std::vector<ParamVector> lhc_sample(int n, const PriorSpec& prior, Rng& rng) {
  if (n < 1) throw ValueError("lhc_sample: n must be >= 1");
  if (prior.kind != PriorSpec::Kind::UniformBox)
    throw UnsupportedError("lhc_sample: defined for uniform-box priors only");
  const int dim = prior.dim();
  std::vector<ParamVector> out(n, ParamVector(dim));
  std::vector<int> strata(n);
  for (int j = 0; j < dim; ++j) {
    std::iota(strata.begin(), strata.end(), 0);
    rng.shuffle(strata);
    const double lo = prior.lower[j], width = prior.upper[j] - prior.lower[j];
    for (int i = 0; i < n; ++i)
      out[i][j] = lo + (strata[i] + rng.uniform()) / n * width;
  }
  return out;
}

ParamVector prior_transform(const std::vector<double>& u, const PriorSpec& prior) {
  if (static_cast<int>(u.size()) != prior.dim())
    throw DimensionError("prior_transform: dimension mismatch");
  ParamVector theta(u.size());
  for (std::size_t j = 0; j < u.size(); ++j) {
    if (!(u[j] >= 0.0 && u[j] <= 1.0))
      throw ValueError("prior_transform: point outside the unit cube");
    if (prior.kind == PriorSpec::Kind::UniformBox) {
      theta[j] = prior.lower[j] + u[j] * (prior.upper[j] - prior.lower[j]);
    } else {
      const double p_lo = normal_cdf(-PriorSpec::kGaussianTruncationSigmas);
      const double p_hi = normal_cdf(PriorSpec::kGaussianTruncationSigmas);
      const double p = std::clamp(u[j], p_lo, p_hi);
      theta[j] = prior.mean[j] + prior.sigma[j] * inverse_normal_cdf(p);
    }
  }
  return theta;
}

double Ellipsoid::mahalanobis_sq(const ParamVector& x) const {
  // Solve L y = (x - c) by forward substitution; the squared distance is |y|^2.
  std::vector<double> y(dim);
  double acc = 0.0;
  for (int i = 0; i < dim; ++i) {
    double s = x[i] - center[i];
    for (int k = 0; k < i; ++k) s -= chol[static_cast<std::size_t>(i) * dim + k] * y[k];
    y[i] = s / chol[static_cast<std::size_t>(i) * dim + i];
    acc += y[i] * y[i];
  }
  return acc;
}

bool Ellipsoid::contains(const ParamVector& x, double tol) const {
  return mahalanobis_sq(x) <= 1.0 + tol;
}

ParamVector Ellipsoid::sample(Rng& rng) const {
  // Uniform in the unit ball: normal direction, radius U^(1/J).
  std::vector<double> z(dim);
  double norm_sq = 0.0;
  for (int j = 0; j < dim; ++j) {
    z[j] = rng.normal();
    norm_sq += z[j] * z[j];
  }
  const double norm = std::sqrt(norm_sq);
  const double radius = std::pow(rng.uniform(), 1.0 / dim);
  ParamVector x(center);
  for (int i = 0; i < dim; ++i) {
    double s = 0.0;
    for (int k = 0; k <= i; ++k)
      s += chol[static_cast<std::size_t>(i) * dim + k] * (z[k] / norm * radius);
    x[i] += s;
  }
  return x;
}

Ellipsoid fit_bounding_ellipsoid(const std::vector<ParamVector>& points, double erf) {
  const int n = static_cast<int>(points.size());
  if (n == 0) throw SamplingError("fit_bounding_ellipsoid: empty live set");
  const int dim = static_cast<int>(points[0].size());
  if (n <= dim) throw SamplingError("fit_bounding_ellipsoid: need more points than dimensions");

  Ellipsoid e;
  e.dim = dim;
  e.center.assign(dim, 0.0);
  for (const auto& p : points)
    for (int j = 0; j < dim; ++j) e.center[j] += p[j];
  for (int j = 0; j < dim; ++j) e.center[j] /= n;

  std::vector<double> cov(static_cast<std::size_t>(dim) * dim, 0.0);
  for (const auto& p : points)
    for (int i = 0; i < dim; ++i)
      for (int j = 0; j <= i; ++j)
        cov[static_cast<std::size_t>(i) * dim + j] += (p[i] - e.center[i]) * (p[j] - e.center[j]);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j <= i; ++j) {
      cov[static_cast<std::size_t>(i) * dim + j] /= (n - 1);
      cov[static_cast<std::size_t>(j) * dim + i] = cov[static_cast<std::size_t>(i) * dim + j];
    }

  std::vector<double> chol_cov;
  if (!cholesky(cov, dim, chol_cov)) {
    double trace = 0.0;
    for (int i = 0; i < dim; ++i) trace += cov[static_cast<std::size_t>(i) * dim + i];
    const double jitter = 1e-10 * (trace > 0.0 ? trace : 1.0) / dim;
    for (int i = 0; i < dim; ++i) cov[static_cast<std::size_t>(i) * dim + i] += jitter;
    if (!cholesky(cov, dim, chol_cov))
      throw SamplingError("fit_bounding_ellipsoid: degenerate live set (singular covariance)");
  }

  // Scale so the farthest point sits on the boundary, then enlarge the volume
  // by 1/erf (linear factor (1/erf)^(1/J)).
  e.shape = cov;
  e.chol = chol_cov;
  double max_d2 = 0.0;
  for (const auto& p : points) max_d2 = std::max(max_d2, e.mahalanobis_sq(p));
  if (max_d2 <= 0.0) max_d2 = 1.0;
  const double scale = max_d2 * std::pow(1.0 / erf, 2.0 / dim);
  for (auto& v : e.shape) v *= scale;
  const double lin = std::sqrt(scale);
  for (auto& v : e.chol) v *= lin;
  return e;
}

ConstrainedDraw draw_constrained(const Ellipsoid& ellipsoid, const PriorSpec& prior,
                                 const LogLikeFn& loglike, double threshold, Rng& rng,
                                 long max_tries) {
  if (max_tries < 1) throw ValueError("draw_constrained: max_tries must be >= 1");
  ConstrainedDraw d;
  for (long attempt = 0; attempt < max_tries; ++attempt) {
    std::vector<double> u = ellipsoid.sample(rng);
    bool inside = true;
    for (double uj : u)
      if (!(uj >= 0.0 && uj <= 1.0)) {
        inside = false;
        break;
      }
    if (!inside) continue;
    ParamVector theta = prior_transform(u, prior);
    const double ll = loglike(theta);
    if (!std::isfinite(ll)) throw ValueError("draw_constrained: non-finite log-likelihood");
    ++d.n_evals;
    if (ll > threshold) {
      d.theta = std::move(theta);
      d.u = std::move(u);
      d.log_like = ll;
      return d;
    }
  }
  throw SamplingError("draw_constrained: exhausted max_tries without beating the threshold");
}

NestedRunResult nested_sampling(const LogLikeFn& loglike, const PriorSpec& prior,
                                const NsConfig& cfg, const NsObserver& observer) {
  cfg.validate();
  prior.validate();
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(cfg.seed);
  const int n_live = cfg.n_live;
  const int dim = prior.dim();

  std::vector<std::vector<double>> live_u(n_live, std::vector<double>(dim));
  std::vector<ParamVector> live_theta(n_live);
  std::vector<double> live_ll(n_live);
  NestedRunResult result;
  result.log_evidence = kNegInf;

  for (int i = 0; i < n_live; ++i) {
    for (int j = 0; j < dim; ++j) live_u[i][j] = rng.uniform();
    live_theta[i] = prior_transform(live_u[i], prior);
    live_ll[i] = loglike(live_theta[i]);
    if (!std::isfinite(live_ll[i]))
      throw ValueError("nested_sampling: non-finite log-likelihood at initialization");
    ++result.n_like_evals;
  }

  const double inv_n = 1.0 / n_live;
  // ln w_i = ln[ (X_{i-1} - X_{i+1}) / 2 ] = -(i-1)/N + ln[(1 - e^{-2/N})/2]
  const double log_w_base = std::log(0.5) + std::log1p(-std::exp(-2.0 * inv_n));
  const double log_term =
      cfg.termination == NsConfig::Termination::Paper
          ? cfg.tol
          : std::log(std::expm1(cfg.tol));

  long iter = 0;
  bool stopped = false;
  while (iter < cfg.max_iter) {
    ++iter;
    const auto worst_it = std::min_element(live_ll.begin(), live_ll.end());
    const int worst = static_cast<int>(worst_it - live_ll.begin());
    const double log_li = live_ll[worst];
    const double log_wi = -(static_cast<double>(iter) - 1.0) * inv_n + log_w_base;
    result.log_evidence = logsumexp(result.log_evidence, log_li + log_wi);

    WeightedSample dead;
    dead.theta = live_theta[worst];
    dead.log_like = log_li;
    dead.log_weight = log_wi;
    result.samples.push_back(std::move(dead));

    Ellipsoid ell = fit_bounding_ellipsoid(live_u, cfg.erf);
    ConstrainedDraw draw =
        draw_constrained(ell, prior, loglike, log_li, rng, cfg.max_draw_tries);
    result.n_like_evals += draw.n_evals;
    live_u[worst] = std::move(draw.u);
    live_theta[worst] = std::move(draw.theta);
    live_ll[worst] = draw.log_like;

    const double log_xi = -static_cast<double>(iter) * inv_n;
    if (observer) observer({static_cast<int>(iter), log_li, log_xi, result.log_evidence});

    const double max_ll = *std::max_element(live_ll.begin(), live_ll.end());
    if (max_ll + log_xi < log_term + result.log_evidence) {
      stopped = true;
      break;
    }
  }
  result.iterations = static_cast<int>(iter);
  result.converged = stopped;

  // Closing increment: sum_n L(theta_n) X_I / N_live, spread over the live
  // points so the weighted sample set integrates to Z.
  const double log_x_final = -static_cast<double>(iter) * inv_n;
  const double log_w_live = log_x_final - std::log(static_cast<double>(n_live));
  for (int i = 0; i < n_live; ++i) {
    result.log_evidence = logsumexp(result.log_evidence, live_ll[i] + log_w_live);
    WeightedSample s;
    s.theta = live_theta[i];
    s.log_like = live_ll[i];
    s.log_weight = log_w_live;
    result.samples.push_back(std::move(s));
  }

  double information = 0.0;
  for (auto& s : result.samples) {
    s.log_importance = s.log_like + s.log_weight - result.log_evidence;
    information += std::exp(s.log_importance) * s.log_like;
  }
  result.information_nats = information - result.log_evidence;

  result.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

std::vector<ParamVector> posterior_resample(const NestedRunResult& result, int n, Rng& rng) {
  if (result.samples.empty()) throw ValueError("posterior_resample: empty sample list");
  if (n < 1) throw ValueError("posterior_resample: n must be >= 1");
  std::vector<double> cdf(result.samples.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < result.samples.size(); ++i) {
    acc += std::exp(result.samples[i].log_importance);
    cdf[i] = acc;
  }
  std::vector<ParamVector> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform() * acc;
    const auto it = std::lower_bound(cdf.begin(), cdf.end(), u);
    const std::size_t idx = std::min<std::size_t>(it - cdf.begin(), cdf.size() - 1);
    out.push_back(result.samples[idx].theta);
  }
  return out;
}

PosteriorSummary posterior_summary(const NestedRunResult& result, const PriorSpec& prior) {
  if (result.samples.empty()) throw ValueError("posterior_summary: empty sample list");
  const int dim = prior.dim();
  PosteriorSummary s;
  s.mean.assign(dim, 0.0);
  double w_sum = 0.0;
  double best_ll = kNegInf;
  for (const auto& smp : result.samples) {
    const double w = std::exp(smp.log_importance);
    w_sum += w;
    for (int j = 0; j < dim; ++j) s.mean[j] += w * smp.theta[j];
    if (smp.log_like > best_ll) {
      best_ll = smp.log_like;
      s.map_point = smp.theta;
    }
  }
  for (int j = 0; j < dim; ++j) s.mean[j] /= w_sum;

  auto bin_of = [](double x, double lo, double hi) {
    const int b = static_cast<int>((x - lo) / (hi - lo) * kHistBins);
    return std::clamp(b, 0, kHistBins - 1);
  };

  for (int j = 0; j < dim; ++j) {
    Hist1D h;
    h.param = j;
    h.lo = prior.support_lower(j);
    h.hi = prior.support_upper(j);
    h.weights.assign(kHistBins, 0.0);
    for (const auto& smp : result.samples)
      h.weights[bin_of(smp.theta[j], h.lo, h.hi)] += std::exp(smp.log_importance);
    s.hist1d.push_back(std::move(h));
  }
  for (int i = 0; i < dim; ++i) {
    for (int j = i + 1; j < dim; ++j) {
      Hist2D h;
      h.param_i = i;
      h.param_j = j;
      h.lo_i = prior.support_lower(i);
      h.hi_i = prior.support_upper(i);
      h.lo_j = prior.support_lower(j);
      h.hi_j = prior.support_upper(j);
      h.weights.assign(static_cast<std::size_t>(kHistBins) * kHistBins, 0.0);
      for (const auto& smp : result.samples) {
        const int bi = bin_of(smp.theta[i], h.lo_i, h.hi_i);
        const int bj = bin_of(smp.theta[j], h.lo_j, h.hi_j);
        h.weights[static_cast<std::size_t>(bi) * kHistBins + bj] += std::exp(smp.log_importance);
      }
      s.hist2d.push_back(std::move(h));
    }
  }
  return s;
}

}  // namespace emucal
