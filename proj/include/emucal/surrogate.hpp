#pragma once

#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "emucal/core.hpp"
#include "emucal/nn.hpp"
#include "emucal/rng.hpp"

namespace emucal {

enum class SampleSource { Lhc, Posterior };

struct TrainingSet {
  std::vector<ParamVector> inputs;
  std::vector<OutputSeries> outputs;
  std::vector<SampleSource> tags;

  int size() const { return static_cast<int>(inputs.size()); }
  int param_inputs() const { return inputs.empty() ? 0 : static_cast<int>(inputs[0].size()); }
  int time_steps() const { return outputs.empty() ? 0 : outputs[0].time_steps; }
  int features() const { return outputs.empty() ? 0 : outputs[0].features; }

  void validate() const;
  TrainingSet subset(const std::vector<int>& indices) const;
};

struct TrainConfig {
  int epochs = 300;
  int minibatch = 20;
  int complexity_eta = 15;
  std::uint64_t seed = 0;
  nn::AdamConfig adam;

  void validate() const;
};

// Cascade of T per-timestep component networks. Component t takes the
// standardized theta together with the previous component's (standardized-
// space) prediction; component 1 takes a zero vector in the prediction slot.
struct DrnSurrogate {
  std::vector<nn::ComponentNet> components;
  nn::Scaler input_scaler;
  std::vector<nn::Scaler> output_scalers;  // one per time step
  int param_inputs = 0, features = 0, time_steps = 0;
  TrainConfig train_config;
  std::vector<nn::FitStats> train_stats;  // per component; not serialized

  std::size_t param_count() const;
};

// Components are trained strictly in time order, each consuming the frozen
// inference predictions of its predecessor (never the ground-truth series).
DrnSurrogate drn_train(const TrainingSet& data, const TrainConfig& cfg, Rng& rng);
OutputSeries drn_predict(const DrnSurrogate& model, const ParamVector& theta);

// Non-cascading baseline: one component-style stack mapping theta directly to
// the flattened T*M output. Hidden widths follow the per-step sizing rule.
struct NcDnnModel {
  nn::ComponentNet net;
  nn::Scaler input_scaler;
  nn::Scaler output_scaler;  // over the T*M flattened columns
  int param_inputs = 0, features = 0, time_steps = 0;
  TrainConfig train_config;
  std::vector<nn::FitStats> train_stats;
};

NcDnnModel ncdnn_train(const TrainingSet& data, const TrainConfig& cfg, Rng& rng);
OutputSeries ncdnn_predict(const NcDnnModel& model, const ParamVector& theta);

// Prediction-feedback RNN baseline: a single shared tanh hidden layer of
// width eta*(J+M), trained through the unrolled sequence (BPTT), feeding its
// own standardized predictions forward.
struct StdRnnModel {
  int param_inputs = 0, features = 0, time_steps = 0, hidden = 0;
  std::vector<double> w_in;   // hidden x (J+M)
  std::vector<double> b_h;    // hidden
  std::vector<double> w_out;  // M x hidden
  std::vector<double> b_out;  // M
  nn::Scaler input_scaler;
  nn::Scaler output_scaler;  // per feature, pooled over time
  TrainConfig train_config;
  std::vector<nn::FitStats> train_stats;

  std::size_t param_count() const {
    return w_in.size() + b_h.size() + w_out.size() + b_out.size();
  }
};

StdRnnModel stdrnn_train(const TrainingSet& data, const TrainConfig& cfg, Rng& rng);
OutputSeries stdrnn_predict(const StdRnnModel& model, const ParamVector& theta);

// Plugs the surrogate prediction into the Gaussian data likelihood; the fast
// likelihood used by Phase-3 sampling.
double surrogate_loglike(const DrnSurrogate& model, const ParamVector& theta,
                         const ObservedData& obs);

nlohmann::json drn_to_json(const DrnSurrogate& model);
DrnSurrogate drn_from_json(const nlohmann::json& j);
void save_surrogate(const DrnSurrogate& model, const std::string& path);
DrnSurrogate load_surrogate(const std::string& path);

}  // namespace emucal
