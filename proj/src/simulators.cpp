#include "emucal/simulators.hpp"

#include <chrono>
#include <cmath>
#include <thread>

namespace emucal {

OutputSeries simulate_bivariate(const ParamVector& theta, const ToyConstants& constants,
                                int t_steps) {
  if (theta.size() != 2) throw DimensionError("simulate_bivariate: expected 2 parameters");
  if (t_steps < 1) throw ValueError("simulate_bivariate: T must be >= 1");
  OutputSeries z(t_steps, 1);
  for (int t = 1; t <= t_steps; ++t) {
    const double a = std::cos(constants.phi * (theta[0] - t - constants.eta_c));
    const double b = std::cos(constants.phi * (theta[1] - t - constants.eta_c));
    z.at(t - 1, 0) = a * b;
  }
  return z;
}

OutputSeries simulate_multifeature(const ParamVector& theta, int t_steps) {
  if (theta.size() != 8) throw DimensionError("simulate_multifeature: expected 8 parameters");
  if (t_steps < 1) throw ValueError("simulate_multifeature: T must be >= 1");
  constexpr int kFeatures = 6;
  constexpr double kGamma = 0.3;
  OutputSeries z(t_steps, kFeatures);
  for (int t = 1; t <= t_steps; ++t) {
    for (int m = 1; m <= kFeatures; ++m) {
      const double lambda = 0.1 * m;
      const double omega = 0.2 + 0.05 * m;
      z.at(t - 1, m - 1) =
          theta[m - 1] * std::exp(-lambda * t) + kGamma * theta[7] * std::cos(omega * t + theta[6]);
    }
  }
  return z;
}

ObservedData make_observation(const OutputSeries& z, double noise_frac, Rng& rng) {
  if (!(noise_frac > 0.0)) throw ValueError("make_observation: noise_frac must be positive");
  const int t_steps = z.time_steps, m_feat = z.features;
  ObservedData obs;
  obs.data = OutputSeries(t_steps, m_feat);
  obs.noise_sigma = OutputSeries(t_steps, m_feat);
  std::vector<double> sigma(m_feat, 0.0);
  for (int m = 0; m < m_feat; ++m) {
    double acc = 0.0;
    for (int t = 0; t < t_steps; ++t) acc += std::abs(z.at(t, m));
    sigma[m] = noise_frac * acc / t_steps;
    if (!(sigma[m] > 0.0))
      throw ValueError("make_observation: feature column is all zero, noise scale degenerate");
  }
  for (int t = 0; t < t_steps; ++t) {
    for (int m = 0; m < m_feat; ++m) {
      obs.noise_sigma.at(t, m) = sigma[m];
      obs.data.at(t, m) = z.at(t, m) + sigma[m] * rng.normal();
    }
  }
  return obs;
}

std::pair<OutputSeries, double> timed_call(const Simulator& sim, const ParamVector& theta) {
  const auto t0 = std::chrono::steady_clock::now();
  if (sim.spec().delay_per_call > 0.0)
    std::this_thread::sleep_for(std::chrono::duration<double>(sim.spec().delay_per_call));
  OutputSeries out = sim.run(theta);
  const auto t1 = std::chrono::steady_clock::now();
  return {std::move(out), std::chrono::duration<double>(t1 - t0).count()};
}

Simulator make_simulator(const std::string& name, int t_steps, double delay_per_call,
                         const ToyConstants& constants) {
  if (name == "toy") {
    SimulatorSpec spec{name, 2, 1, t_steps, delay_per_call};
    return Simulator(spec, [constants, t_steps](const ParamVector& theta) {
      return simulate_bivariate(theta, constants, t_steps);
    });
  }
  if (name == "standin") {
    SimulatorSpec spec{name, 8, 6, t_steps, delay_per_call};
    return Simulator(spec,
                     [t_steps](const ParamVector& theta) { return simulate_multifeature(theta, t_steps); });
  }
  throw UnsupportedError("unknown simulator: " + name);
}

}  // namespace emucal
