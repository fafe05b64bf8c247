#include "emucal/core.hpp"

#include <algorithm>
#include <cmath>

namespace emucal {

bool OutputSeries::all_finite() const {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

PriorSpec PriorSpec::uniform_box(std::vector<double> lo, std::vector<double> hi) {
  PriorSpec p;
  p.kind = Kind::UniformBox;
  p.lower = std::move(lo);
  p.upper = std::move(hi);
  p.validate();
  return p;
}

PriorSpec PriorSpec::gaussian(std::vector<double> mu, std::vector<double> sd) {
  PriorSpec p;
  p.kind = Kind::Gaussian;
  p.mean = std::move(mu);
  p.sigma = std::move(sd);
  p.validate();
  return p;
}

void PriorSpec::validate() const {
  if (kind == Kind::UniformBox) {
    if (lower.empty() || lower.size() != upper.size())
      throw DimensionError("prior: lower/upper bound lengths disagree or empty");
    for (std::size_t j = 0; j < lower.size(); ++j)
      if (!(lower[j] < upper[j])) throw ValueError("prior: lower bound must be < upper bound");
  } else {
    if (mean.empty() || mean.size() != sigma.size())
      throw DimensionError("prior: mean/sigma lengths disagree or empty");
    for (std::size_t j = 0; j < sigma.size(); ++j)
      if (!(sigma[j] > 0.0)) throw ValueError("prior: all variances must be positive");
  }
}

double PriorSpec::support_lower(int j) const {
  return kind == Kind::UniformBox ? lower[j] : mean[j] - kGaussianTruncationSigmas * sigma[j];
}

double PriorSpec::support_upper(int j) const {
  return kind == Kind::UniformBox ? upper[j] : mean[j] + kGaussianTruncationSigmas * sigma[j];
}

bool PriorSpec::contains(const ParamVector& theta) const {
  if (static_cast<int>(theta.size()) != dim()) return false;
  for (int j = 0; j < dim(); ++j)
    if (theta[j] < support_lower(j) || theta[j] > support_upper(j)) return false;
  return true;
}

double rmse(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || a.size() != b.size())
    throw DimensionError("rmse: inputs must be nonempty and of equal length");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(a.size()));
}

double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2)
    throw DimensionError("pearson: inputs must have equal length >= 2");
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double saa = 0.0, sbb = 0.0, sab = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    saa += da * da;
    sbb += db * db;
    sab += da * db;
  }
  if (saa == 0.0 || sbb == 0.0) throw ValueError("pearson: zero variance input");
  const double r = sab / std::sqrt(saa * sbb);
  return std::clamp(r, -1.0, 1.0);
}

double log_likelihood(const OutputSeries& z, const ObservedData& obs) {
  if (!z.same_shape(obs.data) || !z.same_shape(obs.noise_sigma))
    throw DimensionError("log_likelihood: prediction and observation shapes disagree");
  constexpr double kLogTwoPi = 1.8378770664093454836;  // ln(2*pi)
  double acc = 0.0;
  const std::size_t n = z.values.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double s = obs.noise_sigma.values[i];
    if (!(s > 0.0)) throw ValueError("log_likelihood: noise sigma must be positive");
    const double r = obs.data.values[i] - z.values[i];
    acc += -0.5 * (kLogTwoPi + 2.0 * std::log(s)) - (r * r) / (2.0 * s * s);
  }
  return acc;
}

}  // namespace emucal
