#include "emucal/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "emucal/kernels.hpp"

namespace emucal {

namespace {

// Gathers theta rows into a dense standardized matrix.
std::vector<double> standardized_inputs(const TrainingSet& data, const nn::Scaler& scaler) {
  const int n = data.size(), j_dim = data.param_inputs();
  std::vector<double> out(static_cast<std::size_t>(n) * j_dim);
  for (int i = 0; i < n; ++i)
    scaler.apply_row(data.inputs[i].data(), out.data() + static_cast<std::size_t>(i) * j_dim);
  return out;
}

std::vector<double> theta_matrix(const TrainingSet& data) {
  const int n = data.size(), j_dim = data.param_inputs();
  std::vector<double> out(static_cast<std::size_t>(n) * j_dim);
  for (int i = 0; i < n; ++i)
    std::copy(data.inputs[i].begin(), data.inputs[i].end(),
              out.begin() + static_cast<std::size_t>(i) * j_dim);
  return out;
}

}  // namespace

void TrainingSet::validate() const {
  if (inputs.empty()) throw ValueError("training set: empty");
  if (inputs.size() != outputs.size() || inputs.size() != tags.size())
    throw DimensionError("training set: inputs/outputs/tags lengths disagree");
  const std::size_t j_dim = inputs[0].size();
  for (const auto& in : inputs)
    if (in.size() != j_dim) throw DimensionError("training set: inconsistent input dimension");
  for (const auto& out : outputs)
    if (!out.same_shape(outputs[0]))
      throw DimensionError("training set: inconsistent output shapes");
}

TrainingSet TrainingSet::subset(const std::vector<int>& indices) const {
  TrainingSet s;
  s.inputs.reserve(indices.size());
  s.outputs.reserve(indices.size());
  s.tags.reserve(indices.size());
  for (int i : indices) {
    s.inputs.push_back(inputs[i]);
    s.outputs.push_back(outputs[i]);
    s.tags.push_back(tags[i]);
  }
  return s;
}

void TrainConfig::validate() const {
  if (epochs < 1 || minibatch < 1) throw ConfigError("train: epochs and minibatch must be >= 1");
  if (complexity_eta < 1) throw ConfigError("train: complexity_eta must be >= 1");
}

std::size_t DrnSurrogate::param_count() const {
  std::size_t n = 0;
  for (const auto& c : components) n += c.param_count();
  return n;
}

DrnSurrogate drn_train(const TrainingSet& data, const TrainConfig& cfg, Rng& rng) {
  data.validate();
  cfg.validate();
  const int n = data.size();
  const int j_dim = data.param_inputs();
  const int m_feat = data.features();
  const int t_steps = data.time_steps();

  DrnSurrogate model;
  model.param_inputs = j_dim;
  model.features = m_feat;
  model.time_steps = t_steps;
  model.train_config = cfg;

  const std::vector<double> theta_raw = theta_matrix(data);
  model.input_scaler = nn::standardize_fit(theta_raw.data(), n, j_dim);
  const std::vector<double> theta_std = standardized_inputs(data, model.input_scaler);

  const int in_w = j_dim + m_feat;
  std::vector<double> x(static_cast<std::size_t>(n) * in_w, 0.0);
  for (int i = 0; i < n; ++i)
    std::copy_n(theta_std.data() + static_cast<std::size_t>(i) * j_dim, j_dim,
                x.data() + static_cast<std::size_t>(i) * in_w);

  std::vector<double> targets(static_cast<std::size_t>(n) * m_feat);
  std::vector<double> targets_std(targets.size());
  std::vector<double> pred_std(targets.size());

  for (int t = 0; t < t_steps; ++t) {
    for (int i = 0; i < n; ++i)
      for (int m = 0; m < m_feat; ++m)
        targets[static_cast<std::size_t>(i) * m_feat + m] = data.outputs[i].at(t, m);
    nn::Scaler out_scaler = nn::standardize_fit(targets.data(), n, m_feat);
    nn::standardize_apply(out_scaler, targets.data(), targets_std.data(), n);

    nn::ComponentNet net = nn::build_component_net(j_dim, m_feat, cfg.complexity_eta, rng);
    model.train_stats.push_back(
        nn::fit_net(net, x, targets_std, n, cfg.epochs, cfg.minibatch, rng, cfg.adam));

    // The frozen predictions (standardized space) feed the next component.
    if (t + 1 < t_steps) {
      nn::infer_batch(net, x.data(), n, pred_std.data());
      for (int i = 0; i < n; ++i)
        std::copy_n(pred_std.data() + static_cast<std::size_t>(i) * m_feat, m_feat,
                    x.data() + static_cast<std::size_t>(i) * in_w + j_dim);
    }
    model.components.push_back(std::move(net));
    model.output_scalers.push_back(std::move(out_scaler));
  }
  return model;
}

OutputSeries drn_predict(const DrnSurrogate& model, const ParamVector& theta) {
  if (static_cast<int>(theta.size()) != model.param_inputs)
    throw DimensionError("drn_predict: parameter dimension mismatch");
  const int j_dim = model.param_inputs, m_feat = model.features;
  std::vector<double> x(j_dim + m_feat, 0.0);
  model.input_scaler.apply_row(theta.data(), x.data());

  OutputSeries z(model.time_steps, m_feat);
  std::vector<double> out_std(m_feat);
  for (int t = 0; t < model.time_steps; ++t) {
    nn::forward_batch(model.components[t], x.data(), 1, nn::Mode::Infer, nullptr, out_std.data(),
                      nullptr);
    model.output_scalers[t].invert_row(out_std.data(), &z.at(t, 0));
    std::copy(out_std.begin(), out_std.end(), x.begin() + j_dim);
  }
  return z;
}

NcDnnModel ncdnn_train(const TrainingSet& data, const TrainConfig& cfg, Rng& rng) {
  data.validate();
  cfg.validate();
  const int n = data.size();
  const int j_dim = data.param_inputs();
  const int m_feat = data.features();
  const int t_steps = data.time_steps();
  const int out_w = t_steps * m_feat;

  NcDnnModel model;
  model.param_inputs = j_dim;
  model.features = m_feat;
  model.time_steps = t_steps;
  model.train_config = cfg;

  const std::vector<double> theta_raw = theta_matrix(data);
  model.input_scaler = nn::standardize_fit(theta_raw.data(), n, j_dim);
  const std::vector<double> x = standardized_inputs(data, model.input_scaler);

  std::vector<double> flat(static_cast<std::size_t>(n) * out_w);
  for (int i = 0; i < n; ++i)
    std::copy(data.outputs[i].values.begin(), data.outputs[i].values.end(),
              flat.begin() + static_cast<std::size_t>(i) * out_w);
  model.output_scaler = nn::standardize_fit(flat.data(), n, out_w);
  std::vector<double> y(flat.size());
  nn::standardize_apply(model.output_scaler, flat.data(), y.data(), n);

  // Hidden widths follow the per-step sizing rule; only input/output widths
  // change relative to a cascade component.
  const int jm = j_dim + m_feat;
  const std::vector<int> widths = {j_dim, cfg.complexity_eta * jm, 4 * cfg.complexity_eta * jm,
                                   4 * cfg.complexity_eta * jm, cfg.complexity_eta * m_feat,
                                   out_w};
  model.net = nn::build_net(widths,
                            {nn::Activation::Linear, nn::Activation::PRelu, nn::Activation::PRelu,
                             nn::Activation::Tanh, nn::Activation::Linear},
                            {false, false, true, true, false}, cfg.complexity_eta, rng);
  model.train_stats.push_back(nn::fit_net(model.net, x, y, n, cfg.epochs, cfg.minibatch, rng, cfg.adam));
  return model;
}

OutputSeries ncdnn_predict(const NcDnnModel& model, const ParamVector& theta) {
  if (static_cast<int>(theta.size()) != model.param_inputs)
    throw DimensionError("ncdnn_predict: parameter dimension mismatch");
  std::vector<double> x(model.param_inputs);
  model.input_scaler.apply_row(theta.data(), x.data());
  const int out_w = model.time_steps * model.features;
  std::vector<double> y_std(out_w);
  nn::forward_batch(model.net, x.data(), 1, nn::Mode::Infer, nullptr, y_std.data(), nullptr);
  OutputSeries z(model.time_steps, model.features);
  model.output_scaler.invert_row(y_std.data(), z.values.data());
  return z;
}

namespace {

struct RnnGrads {
  std::vector<double> w_in, b_h, w_out, b_out;
  void zero() {
    std::fill(w_in.begin(), w_in.end(), 0.0);
    std::fill(b_h.begin(), b_h.end(), 0.0);
    std::fill(w_out.begin(), w_out.end(), 0.0);
    std::fill(b_out.begin(), b_out.end(), 0.0);
  }
};

// Unrolled forward pass of the shared cell; returns per-step inputs, hidden
// activations and (standardized-space) predictions.
void rnn_forward(const StdRnnModel& m, const double* theta_std, std::vector<double>& xs,
                 std::vector<double>& hs, std::vector<double>& ys) {
  const int in_w = m.param_inputs + m.features;
  xs.assign(static_cast<std::size_t>(m.time_steps) * in_w, 0.0);
  hs.assign(static_cast<std::size_t>(m.time_steps) * m.hidden, 0.0);
  ys.assign(static_cast<std::size_t>(m.time_steps) * m.features, 0.0);
  std::vector<double> prev(m.features, 0.0);
  for (int t = 0; t < m.time_steps; ++t) {
    double* x = xs.data() + static_cast<std::size_t>(t) * in_w;
    std::copy_n(theta_std, m.param_inputs, x);
    std::copy(prev.begin(), prev.end(), x + m.param_inputs);
    double* h = hs.data() + static_cast<std::size_t>(t) * m.hidden;
    kernels::affine(m.w_in.data(), m.b_h.data(), x, h, m.hidden, in_w);
    for (int u = 0; u < m.hidden; ++u) h[u] = std::tanh(h[u]);
    double* y = ys.data() + static_cast<std::size_t>(t) * m.features;
    kernels::affine(m.w_out.data(), m.b_out.data(), h, y, m.features, m.hidden);
    std::copy_n(y, m.features, prev.begin());
  }
}

// Backpropagation through time for one sample. dy_direct holds the loss
// gradient at each step's prediction; feedback gradients are added on the way
// down.
void rnn_backward(const StdRnnModel& m, const std::vector<double>& xs,
                  const std::vector<double>& hs, const std::vector<double>& dy_direct,
                  RnnGrads& g) {
  const int in_w = m.param_inputs + m.features;
  std::vector<double> dy(m.features), dh(m.hidden), dz(m.hidden), dx(in_w);
  std::vector<double> dprev(m.features, 0.0);
  for (int t = m.time_steps - 1; t >= 0; --t) {
    const double* x = xs.data() + static_cast<std::size_t>(t) * in_w;
    const double* h = hs.data() + static_cast<std::size_t>(t) * m.hidden;
    for (int k = 0; k < m.features; ++k)
      dy[k] = dy_direct[static_cast<std::size_t>(t) * m.features + k] + dprev[k];

    kernels::ref::grad_weights(h, dy.data(), g.w_out.data(), g.b_out.data(), 1, m.features,
                               m.hidden);
    kernels::ref::grad_input(m.w_out.data(), dy.data(), dh.data(), 1, m.features, m.hidden);
    for (int u = 0; u < m.hidden; ++u) dz[u] = dh[u] * (1.0 - h[u] * h[u]);
    kernels::ref::grad_weights(x, dz.data(), g.w_in.data(), g.b_h.data(), 1, m.hidden, in_w);
    kernels::ref::grad_input(m.w_in.data(), dz.data(), dx.data(), 1, m.hidden, in_w);
    std::copy_n(dx.begin() + m.param_inputs, m.features, dprev.begin());
  }
}

}  // namespace

StdRnnModel stdrnn_train(const TrainingSet& data, const TrainConfig& cfg, Rng& rng) {
  data.validate();
  cfg.validate();
  const int n = data.size();
  const int j_dim = data.param_inputs();
  const int m_feat = data.features();
  const int t_steps = data.time_steps();
  const int in_w = j_dim + m_feat;

  StdRnnModel model;
  model.param_inputs = j_dim;
  model.features = m_feat;
  model.time_steps = t_steps;
  model.hidden = cfg.complexity_eta * in_w;
  model.train_config = cfg;

  const std::vector<double> theta_raw = theta_matrix(data);
  model.input_scaler = nn::standardize_fit(theta_raw.data(), n, j_dim);
  const std::vector<double> theta_std = standardized_inputs(data, model.input_scaler);

  // Output scaler is pooled over time (per feature): the shared cell sees one
  // consistent standardized space at every step.
  std::vector<double> pooled(static_cast<std::size_t>(n) * t_steps * m_feat);
  for (int i = 0; i < n; ++i)
    std::copy(data.outputs[i].values.begin(), data.outputs[i].values.end(),
              pooled.begin() + static_cast<std::size_t>(i) * t_steps * m_feat);
  model.output_scaler = nn::standardize_fit(pooled.data(), n * t_steps, m_feat);

  std::vector<double> targets_std(static_cast<std::size_t>(n) * t_steps * m_feat);
  nn::standardize_apply(model.output_scaler, pooled.data(), targets_std.data(), n * t_steps);

  const double bound_in = std::sqrt(6.0 / (in_w + model.hidden));
  model.w_in.resize(static_cast<std::size_t>(model.hidden) * in_w);
  for (double& w : model.w_in) w = rng.uniform(-bound_in, bound_in);
  model.b_h.assign(model.hidden, 0.0);
  const double bound_out = std::sqrt(6.0 / (model.hidden + m_feat));
  model.w_out.resize(static_cast<std::size_t>(m_feat) * model.hidden);
  for (double& w : model.w_out) w = rng.uniform(-bound_out, bound_out);
  model.b_out.assign(m_feat, 0.0);

  RnnGrads grads{std::vector<double>(model.w_in.size(), 0.0),
                 std::vector<double>(model.b_h.size(), 0.0),
                 std::vector<double>(model.w_out.size(), 0.0),
                 std::vector<double>(model.b_out.size(), 0.0)};
  RnnGrads m1 = grads, m2 = grads;
  long step_count = 0;

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> xs, hs, ys, dy_direct(static_cast<std::size_t>(t_steps) * m_feat);
  nn::FitStats stats;
  stats.epoch_mse.reserve(cfg.epochs);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double sq_sum = 0.0;
    for (int start = 0; start < n; start += cfg.minibatch) {
      const int bsz = std::min(cfg.minibatch, n - start);
      grads.zero();
      for (int bi = 0; bi < bsz; ++bi) {
        const int i = order[start + bi];
        rnn_forward(model, theta_std.data() + static_cast<std::size_t>(i) * j_dim, xs, hs, ys);
        const double* tgt = targets_std.data() + static_cast<std::size_t>(i) * t_steps * m_feat;
        // Loss per sample: sum over t of the per-step feature MSE.
        const double scale = 2.0 / (static_cast<double>(m_feat) * bsz);
        for (int k = 0; k < t_steps * m_feat; ++k) {
          const double d = ys[k] - tgt[k];
          sq_sum += d * d;
          dy_direct[k] = scale * d;
        }
        rnn_backward(model, xs, hs, dy_direct, grads);
      }
      ++step_count;
      nn::adam_update(model.w_in, grads.w_in, m1.w_in, m2.w_in, step_count, cfg.adam);
      nn::adam_update(model.b_h, grads.b_h, m1.b_h, m2.b_h, step_count, cfg.adam);
      nn::adam_update(model.w_out, grads.w_out, m1.w_out, m2.w_out, step_count, cfg.adam);
      nn::adam_update(model.b_out, grads.b_out, m1.b_out, m2.b_out, step_count, cfg.adam);
    }
    const double epoch_mse = sq_sum / (static_cast<double>(n) * t_steps * m_feat);
    if (!std::isfinite(epoch_mse)) throw ValueError("stdrnn_train: non-finite training loss");
    stats.epoch_mse.push_back(epoch_mse);
  }
  model.train_stats.push_back(std::move(stats));
  return model;
}

OutputSeries stdrnn_predict(const StdRnnModel& model, const ParamVector& theta) {
  if (static_cast<int>(theta.size()) != model.param_inputs)
    throw DimensionError("stdrnn_predict: parameter dimension mismatch");
  std::vector<double> theta_std(model.param_inputs);
  model.input_scaler.apply_row(theta.data(), theta_std.data());
  std::vector<double> xs, hs, ys;
  rnn_forward(model, theta_std.data(), xs, hs, ys);
  OutputSeries z(model.time_steps, model.features);
  for (int t = 0; t < model.time_steps; ++t)
    model.output_scaler.invert_row(ys.data() + static_cast<std::size_t>(t) * model.features,
                                   &z.at(t, 0));
  return z;
}

double surrogate_loglike(const DrnSurrogate& model, const ParamVector& theta,
                         const ObservedData& obs) {
  return log_likelihood(drn_predict(model, theta), obs);
}

nlohmann::json drn_to_json(const DrnSurrogate& model) {
  nlohmann::json j;
  j["kind"] = "drn";
  j["param_inputs"] = model.param_inputs;
  j["features"] = model.features;
  j["time_steps"] = model.time_steps;
  j["train_config"] = {{"epochs", model.train_config.epochs},
                       {"minibatch", model.train_config.minibatch},
                       {"complexity_eta", model.train_config.complexity_eta},
                       {"seed", model.train_config.seed}};
  j["input_scaler"] = nn::scaler_to_json(model.input_scaler);
  j["output_scalers"] = nlohmann::json::array();
  for (const auto& s : model.output_scalers) j["output_scalers"].push_back(nn::scaler_to_json(s));
  j["components"] = nlohmann::json::array();
  for (const auto& c : model.components) j["components"].push_back(nn::net_to_json(c));
  return j;
}

DrnSurrogate drn_from_json(const nlohmann::json& j) {
  if (j.at("kind").get<std::string>() != "drn")
    throw ValueError("drn_from_json: not a drn model file");
  DrnSurrogate model;
  model.param_inputs = j.at("param_inputs").get<int>();
  model.features = j.at("features").get<int>();
  model.time_steps = j.at("time_steps").get<int>();
  const auto& tc = j.at("train_config");
  model.train_config.epochs = tc.at("epochs").get<int>();
  model.train_config.minibatch = tc.at("minibatch").get<int>();
  model.train_config.complexity_eta = tc.at("complexity_eta").get<int>();
  model.train_config.seed = tc.at("seed").get<std::uint64_t>();
  model.input_scaler = nn::scaler_from_json(j.at("input_scaler"));
  for (const auto& js : j.at("output_scalers"))
    model.output_scalers.push_back(nn::scaler_from_json(js));
  for (const auto& jc : j.at("components")) model.components.push_back(nn::net_from_json(jc));
  if (model.components.size() != static_cast<std::size_t>(model.time_steps) ||
      model.output_scalers.size() != model.components.size())
    throw DimensionError("drn_from_json: component count disagrees with time steps");
  return model;
}

void save_surrogate(const DrnSurrogate& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("save_surrogate: cannot open " + path);
  out << drn_to_json(model).dump();
}

DrnSurrogate load_surrogate(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("load_surrogate: cannot open " + path);
  nlohmann::json j;
  in >> j;
  return drn_from_json(j);
}

}  // namespace emucal
