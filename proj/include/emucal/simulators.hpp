#pragma once

#include <functional>
#include <string>
#include <utility>

#include "emucal/core.hpp"
#include "emucal/rng.hpp"

namespace emucal {

struct SimulatorSpec {
  std::string name;
  int inputs = 0;           // J
  int features = 0;         // M per time step
  int time_steps = 0;       // T
  double delay_per_call = 0.0;  // seconds of artificial slowdown, applied by timed_call
};

// Known constants of the bivariate toy model.
struct ToyConstants {
  double phi = 0.1;
  double eta_c = 5.0;
};

// Deterministic forward model theta -> Z. Stateless; safe to call concurrently.
class Simulator {
 public:
  Simulator(SimulatorSpec spec, std::function<OutputSeries(const ParamVector&)> fn)
      : spec_(std::move(spec)), fn_(std::move(fn)) {}

  const SimulatorSpec& spec() const { return spec_; }

  OutputSeries run(const ParamVector& theta) const { return fn_(theta); }

 private:
  SimulatorSpec spec_;
  std::function<OutputSeries(const ParamVector&)> fn_;
};

// z_t = cos(phi (theta1 - t - eta_c)) * cos(phi (theta2 - t - eta_c)), t = 1..T.
OutputSeries simulate_bivariate(const ParamVector& theta, const ToyConstants& constants, int t_steps);

// Deterministic 8-parameter, 6-feature stand-in:
//   z_{t,m} = theta_m exp(-lambda_m t) + gamma theta_8 cos(omega_m t + theta_7)
// with lambda_m = 0.1 m, omega_m = 0.2 + 0.05 m, gamma = 0.3, t = 1..T.
OutputSeries simulate_multifeature(const ParamVector& theta, int t_steps = 10);

// Manufactures observed data: per-feature sigma_m = noise_frac * mean_t |z_{t,m}|,
// data = z + N(0, sigma_m^2). Deterministic given the rng state.
ObservedData make_observation(const OutputSeries& z, double noise_frac, Rng& rng);

// Sleeps spec().delay_per_call, runs the simulator, returns output and total
// wall seconds.
std::pair<OutputSeries, double> timed_call(const Simulator& sim, const ParamVector& theta);

// Factory for the simulators named in config files ("toy", "standin").
Simulator make_simulator(const std::string& name, int t_steps, double delay_per_call,
                         const ToyConstants& constants = {});

}  // namespace emucal
