#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "emucal/core.hpp"
#include "emucal/rng.hpp"

namespace emucal::nn {

enum class Activation { Linear, PRelu, Tanh };

constexpr double kDropoutKeep = 0.5;
constexpr double kPReluInitSlope = 0.25;

struct DenseLayer {
  int in = 0, out = 0;
  Activation act = Activation::Linear;
  bool dropout_after = false;
  std::vector<double> w;      // out x in, row-major
  std::vector<double> b;      // out
  std::vector<double> slope;  // out; learnable PReLU slopes (empty unless act == PRelu)
};

struct ComponentNet {
  std::vector<DenseLayer> layers;
  int complexity_eta = 0;

  int input_width() const { return layers.front().in; }
  int output_width() const { return layers.back().out; }
  std::vector<int> widths() const;

  std::size_t param_count() const;
  // Flat parameter view in (layer: w, b, slope) order; used by the
  // finite-difference oracle.
  double get_param(std::size_t idx) const;
  void set_param(std::size_t idx, double value);
};

// Widths [J+M, eta(J+M), 4 eta(J+M), 4 eta(J+M), eta M, M].
std::vector<int> component_widths(int param_inputs, int features, int complexity_eta);

// Generic stack builder. Weights uniform in +/- sqrt(6/(fan_in+fan_out)),
// biases zero, PReLU slopes 0.25.
ComponentNet build_net(const std::vector<int>& widths, const std::vector<Activation>& acts,
                       const std::vector<bool>& dropout_after, int complexity_eta, Rng& rng);

// The per-timestep component: activation schedule linear, PReLU, PReLU
// (dropout after), tanh (dropout after), linear.
ComponentNet build_component_net(int param_inputs, int features, int complexity_eta, Rng& rng);

enum class Mode { Train, Infer };

// Activations recorded by a training-mode forward pass, consumed by backward.
struct BatchCache {
  int batch = 0;
  bool train = false;
  std::vector<std::vector<double>> level;       // level[0] = input, level[l+1] = layer l output
  std::vector<std::vector<double>> pre;         // pre[l] = pre-activation of layer l
  std::vector<std::vector<std::uint8_t>> mask;  // mask[l]: dropout keep flags, empty if none
};

// x: batch x input_width, y: batch x output_width. In Train mode dropout
// masks are drawn from rng in fixed (layer, sample, unit) order, or copied
// from fixed_masks when given (finite-difference support).
void forward_batch(const ComponentNet& net, const double* x, int batch, Mode mode, Rng* rng,
                   double* y, BatchCache* cache, const BatchCache* fixed_masks = nullptr);

// Single-sample convenience wrapper.
std::vector<double> forward(const ComponentNet& net, std::span<const double> x, Mode mode,
                            Rng* rng, BatchCache* cache = nullptr);

// Inference over many rows; parallelized across rows.
void infer_batch(const ComponentNet& net, const double* x, int rows, double* y);

struct NetGrads {
  std::vector<std::vector<double>> w, b, slope;
  static NetGrads for_net(const ComponentNet& net);
  void zero();
};

// Exact gradients of the scalar loss whose output gradient is dy
// (batch x output_width), respecting the dropout masks in cache.
void backward_batch(const ComponentNet& net, const BatchCache& cache, const double* dy,
                    NetGrads& grads);

double mse_loss(std::span<const double> pred, std::span<const double> target);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  long step_count = 0;
  AdamConfig hp;
  NetGrads m, v;
  static AdamState for_net(const ComponentNet& net, AdamConfig hp = {});
};

// Flat bias-corrected Adam update, shared by every parameter block.
void adam_update(std::span<double> p, std::span<const double> g, std::span<double> m,
                 std::span<double> v, long step, const AdamConfig& hp);

void adam_step(ComponentNet& net, const NetGrads& grads, AdamState& state);

// Central finite difference of the MSE loss w.r.t. one flat parameter.
// Dropout must be frozen: pass the masks of the cache being checked, or null
// for a no-dropout probe.
double finite_diff_grad(ComponentNet& net, std::span<const double> x,
                        std::span<const double> target, std::size_t param_index, double step,
                        const BatchCache* masks = nullptr);

// Per-column (x - mean) / std scaler; degenerate columns keep scale 1.
struct Scaler {
  std::vector<double> mean, scale;
  int cols() const { return static_cast<int>(mean.size()); }
  void apply_row(const double* in, double* out) const;
  void invert_row(const double* in, double* out) const;
};

Scaler standardize_fit(const double* data, int rows, int cols);
void standardize_apply(const Scaler& s, const double* in, double* out, int rows);
void standardize_invert(const Scaler& s, const double* in, double* out, int rows);

struct FitStats {
  std::vector<double> epoch_mse;
  double first_epoch_mse() const { return epoch_mse.front(); }
  double last_epoch_mse() const { return epoch_mse.back(); }
};

// Shuffled mini-batch MSE training with Adam. x: rows x input_width,
// y: rows x output_width.
FitStats fit_net(ComponentNet& net, const std::vector<double>& x, const std::vector<double>& y,
                 int rows, int epochs, int minibatch, Rng& rng, const AdamConfig& adam = {});

nlohmann::json net_to_json(const ComponentNet& net);
ComponentNet net_from_json(const nlohmann::json& j);
nlohmann::json scaler_to_json(const Scaler& s);
Scaler scaler_from_json(const nlohmann::json& j);

}  // namespace emucal::nn
