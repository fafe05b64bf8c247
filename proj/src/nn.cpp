#include "emucal/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "emucal/kernels.hpp"

namespace emucal::nn {

namespace {

const char* activation_tag(Activation a) {
  switch (a) {
    case Activation::Linear: return "linear";
    case Activation::PRelu: return "prelu";
    case Activation::Tanh: return "tanh";
  }
  return "linear";
}

Activation activation_from_tag(const std::string& tag) {
  if (tag == "linear") return Activation::Linear;
  if (tag == "prelu") return Activation::PRelu;
  if (tag == "tanh") return Activation::Tanh;
  throw ValueError("unknown activation tag: " + tag);
}

void apply_activation(const DenseLayer& layer, const double* pre, double* post, int n) {
  switch (layer.act) {
    case Activation::Linear:
      std::copy(pre, pre + n, post);
      break;
    case Activation::Tanh:
      for (int i = 0; i < n; ++i) post[i] = std::tanh(pre[i]);
      break;
    case Activation::PRelu: {
      const int out = layer.out;
      for (int i = 0; i < n; ++i) {
        const double z = pre[i];
        post[i] = z > 0.0 ? z : layer.slope[i % out] * z;
      }
      break;
    }
  }
}

}  // namespace

std::vector<int> ComponentNet::widths() const {
  std::vector<int> w;
  w.push_back(layers.front().in);
  for (const auto& l : layers) w.push_back(l.out);
  return w;
}

std::size_t ComponentNet::param_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.w.size() + l.b.size() + l.slope.size();
  return n;
}

double ComponentNet::get_param(std::size_t idx) const {
  for (const auto& l : layers) {
    if (idx < l.w.size()) return l.w[idx];
    idx -= l.w.size();
    if (idx < l.b.size()) return l.b[idx];
    idx -= l.b.size();
    if (idx < l.slope.size()) return l.slope[idx];
    idx -= l.slope.size();
  }
  throw ValueError("get_param: index out of range");
}

void ComponentNet::set_param(std::size_t idx, double value) {
  for (auto& l : layers) {
    if (idx < l.w.size()) {
      l.w[idx] = value;
      return;
    }
    idx -= l.w.size();
    if (idx < l.b.size()) {
      l.b[idx] = value;
      return;
    }
    idx -= l.b.size();
    if (idx < l.slope.size()) {
      l.slope[idx] = value;
      return;
    }
    idx -= l.slope.size();
  }
  throw ValueError("set_param: index out of range");
}

std::vector<int> component_widths(int param_inputs, int features, int complexity_eta) {
  const int jm = param_inputs + features;
  return {jm, complexity_eta * jm, 4 * complexity_eta * jm, 4 * complexity_eta * jm,
          complexity_eta * features, features};
}

ComponentNet build_net(const std::vector<int>& widths, const std::vector<Activation>& acts,
                       const std::vector<bool>& dropout_after, int complexity_eta, Rng& rng) {
  if (widths.size() < 2 || acts.size() != widths.size() - 1 ||
      dropout_after.size() != widths.size() - 1)
    throw DimensionError("build_net: widths/activations/dropout lists disagree");
  for (int w : widths)
    if (w < 1) throw ValueError("build_net: layer widths must be >= 1");
  ComponentNet net;
  net.complexity_eta = complexity_eta;
  net.layers.resize(widths.size() - 1);
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    DenseLayer& layer = net.layers[l];
    layer.in = widths[l];
    layer.out = widths[l + 1];
    layer.act = acts[l];
    layer.dropout_after = dropout_after[l];
    layer.w.resize(static_cast<std::size_t>(layer.out) * layer.in);
    layer.b.assign(layer.out, 0.0);
    const double bound = std::sqrt(6.0 / (layer.in + layer.out));
    for (double& w : layer.w) w = rng.uniform(-bound, bound);
    if (layer.act == Activation::PRelu) layer.slope.assign(layer.out, kPReluInitSlope);
  }
  return net;
}

ComponentNet build_component_net(int param_inputs, int features, int complexity_eta, Rng& rng) {
  if (param_inputs < 1 || features < 1 || complexity_eta < 1)
    throw ValueError("build_component_net: counts must be >= 1");
  return build_net(component_widths(param_inputs, features, complexity_eta),
                   {Activation::Linear, Activation::PRelu, Activation::PRelu, Activation::Tanh,
                    Activation::Linear},
                   {false, false, true, true, false}, complexity_eta, rng);
}

void forward_batch(const ComponentNet& net, const double* x, int batch, Mode mode, Rng* rng,
                   double* y, BatchCache* cache, const BatchCache* fixed_masks) {
  const std::size_t n_layers = net.layers.size();
  const bool train = mode == Mode::Train;
  if (train && rng == nullptr && fixed_masks == nullptr)
    throw ValueError("forward_batch: train mode needs an rng or fixed masks");

  // Inference without a cache runs on two pre-sized scratch buffers: `hold`
  // carries the current activations, `scratch` receives each pre-activation.
  std::vector<double> hold, scratch;
  if (cache) {
    cache->batch = batch;
    cache->train = train;
    cache->level.resize(n_layers + 1);
    cache->pre.resize(n_layers);
    cache->mask.assign(n_layers, {});
    cache->level[0].assign(x, x + static_cast<std::size_t>(batch) * net.input_width());
  } else {
    std::size_t max_w = net.input_width();
    for (const auto& l : net.layers) max_w = std::max<std::size_t>(max_w, l.out);
    hold.resize(static_cast<std::size_t>(batch) * max_w);
    scratch.resize(static_cast<std::size_t>(batch) * max_w);
  }

  const double* cur = x;
  for (std::size_t l = 0; l < n_layers; ++l) {
    const DenseLayer& layer = net.layers[l];
    const std::size_t out_elems = static_cast<std::size_t>(batch) * layer.out;
    double* pre_buf;
    double* post_buf;
    if (cache) {
      cache->pre[l].resize(out_elems);
      cache->level[l + 1].resize(out_elems);
      pre_buf = cache->pre[l].data();
      post_buf = cache->level[l + 1].data();
    } else {
      pre_buf = scratch.data();
      post_buf = (l + 1 == n_layers) ? y : hold.data();
    }

    kernels::affine_batch(layer.w.data(), layer.b.data(), cur, pre_buf, batch, layer.out,
                          layer.in);
    apply_activation(layer, pre_buf, post_buf, static_cast<int>(out_elems));

    if (layer.dropout_after && train) {
      std::vector<std::uint8_t>* mask_out = cache ? &cache->mask[l] : nullptr;
      std::vector<std::uint8_t> local;
      std::vector<std::uint8_t>& mask = mask_out ? *mask_out : local;
      if (fixed_masks) {
        mask = fixed_masks->mask[l];
        if (mask.size() != out_elems) throw DimensionError("forward_batch: fixed mask shape mismatch");
      } else {
        mask.resize(out_elems);
        for (std::size_t i = 0; i < out_elems; ++i)
          mask[i] = rng->uniform() < kDropoutKeep ? 1 : 0;
      }
      const double inv_keep = 1.0 / kDropoutKeep;
      for (std::size_t i = 0; i < out_elems; ++i)
        post_buf[i] = mask[i] ? post_buf[i] * inv_keep : 0.0;
    }

    cur = post_buf;
  }
  if (cache) {
    const auto& last = cache->level[n_layers];
    std::copy(last.begin(), last.end(), y);
  }
}

std::vector<double> forward(const ComponentNet& net, std::span<const double> x, Mode mode,
                            Rng* rng, BatchCache* cache) {
  if (static_cast<int>(x.size()) != net.input_width())
    throw DimensionError("forward: input width mismatch");
  std::vector<double> y(net.output_width());
  forward_batch(net, x.data(), 1, mode, rng, y.data(), cache);
  return y;
}

void infer_batch(const ComponentNet& net, const double* x, int rows, double* y) {
  forward_batch(net, x, rows, Mode::Infer, nullptr, y, nullptr);
}

NetGrads NetGrads::for_net(const ComponentNet& net) {
  NetGrads g;
  g.w.resize(net.layers.size());
  g.b.resize(net.layers.size());
  g.slope.resize(net.layers.size());
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    g.w[l].assign(net.layers[l].w.size(), 0.0);
    g.b[l].assign(net.layers[l].b.size(), 0.0);
    g.slope[l].assign(net.layers[l].slope.size(), 0.0);
  }
  return g;
}

void NetGrads::zero() {
  for (auto& v : w) std::fill(v.begin(), v.end(), 0.0);
  for (auto& v : b) std::fill(v.begin(), v.end(), 0.0);
  for (auto& v : slope) std::fill(v.begin(), v.end(), 0.0);
}

void backward_batch(const ComponentNet& net, const BatchCache& cache, const double* dy,
                    NetGrads& grads) {
  if (!cache.train) throw ValueError("backward_batch: cache must come from a train-mode forward");
  const int batch = cache.batch;
  const std::size_t n_layers = net.layers.size();
  if (cache.level.size() != n_layers + 1)
    throw DimensionError("backward_batch: cache does not match network");

  // Weight and bias gradients are overwritten per layer; only the PReLU slope
  // buffers accumulate and need clearing here.
  for (auto& s : grads.slope) std::fill(s.begin(), s.end(), 0.0);

  std::vector<double> da(dy, dy + static_cast<std::size_t>(batch) * net.output_width());
  std::vector<double> dz, da_prev;

  for (std::size_t li = n_layers; li-- > 0;) {
    const DenseLayer& layer = net.layers[li];
    const std::size_t out_elems = static_cast<std::size_t>(batch) * layer.out;
    if (cache.pre[li].size() != out_elems)
      throw DimensionError("backward_batch: cache shape mismatch");

    // Dropout backward (inverted scaling).
    if (layer.dropout_after && !cache.mask[li].empty()) {
      const double inv_keep = 1.0 / kDropoutKeep;
      const auto& mask = cache.mask[li];
      for (std::size_t i = 0; i < out_elems; ++i) da[i] = mask[i] ? da[i] * inv_keep : 0.0;
    }

    // Activation backward.
    dz.resize(out_elems);
    const double* pre = cache.pre[li].data();
    switch (layer.act) {
      case Activation::Linear:
        std::copy(da.begin(), da.begin() + out_elems, dz.begin());
        break;
      case Activation::Tanh:
        for (std::size_t i = 0; i < out_elems; ++i) {
          const double th = std::tanh(pre[i]);
          dz[i] = da[i] * (1.0 - th * th);
        }
        break;
      case Activation::PRelu: {
        for (std::size_t i = 0; i < out_elems; ++i) {
          const int u = static_cast<int>(i % layer.out);
          const double z = pre[i];
          if (z > 0.0) {
            dz[i] = da[i];
          } else {
            dz[i] = da[i] * layer.slope[u];
            grads.slope[li][u] += da[i] * z;
          }
        }
        break;
      }
    }

    kernels::grad_weights_set(cache.level[li].data(), dz.data(), grads.w[li].data(),
                              grads.b[li].data(), batch, layer.out, layer.in);
    if (li > 0) {
      da_prev.resize(static_cast<std::size_t>(batch) * layer.in);
      kernels::grad_input(layer.w.data(), dz.data(), da_prev.data(), batch, layer.out, layer.in);
      da.swap(da_prev);
    }
  }
}

double mse_loss(std::span<const double> pred, std::span<const double> target) {
  if (pred.empty() || pred.size() != target.size())
    throw DimensionError("mse_loss: inputs must be nonempty and of equal length");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    acc += d * d;
  }
  return acc / static_cast<double>(pred.size());
}

AdamState AdamState::for_net(const ComponentNet& net, AdamConfig hp) {
  AdamState s;
  s.hp = hp;
  s.m = NetGrads::for_net(net);
  s.v = NetGrads::for_net(net);
  return s;
}

void adam_update(std::span<double> p, std::span<const double> g, std::span<double> m,
                 std::span<double> v, long step, const AdamConfig& hp) {
  if (p.size() != g.size() || p.size() != m.size() || p.size() != v.size())
    throw DimensionError("adam_update: shape mismatch");
  // Bias correction folded into the step size:
  //   mhat/(sqrt(vhat)+eps) = sqrt(bc2)/bc1 * m / (sqrt(v) + eps*sqrt(bc2)),
  // which leaves one division per parameter.
  const double bc1 = 1.0 - std::pow(hp.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(hp.beta2, static_cast<double>(step));
  const double sqrt_bc2 = std::sqrt(bc2);
  const double lr_t = hp.lr * sqrt_bc2 / bc1;
  const double eps_t = hp.eps * sqrt_bc2;
  const double one_minus_b1 = 1.0 - hp.beta1;
  const double one_minus_b2 = 1.0 - hp.beta2;
  for (std::size_t i = 0; i < p.size(); ++i) {
    m[i] = hp.beta1 * m[i] + one_minus_b1 * g[i];
    v[i] = hp.beta2 * v[i] + one_minus_b2 * g[i] * g[i];
    p[i] -= lr_t * m[i] / (std::sqrt(v[i]) + eps_t);
  }
}

void adam_step(ComponentNet& net, const NetGrads& grads, AdamState& state) {
  ++state.step_count;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    DenseLayer& layer = net.layers[l];
    adam_update(layer.w, grads.w[l], state.m.w[l], state.v.w[l], state.step_count, state.hp);
    adam_update(layer.b, grads.b[l], state.m.b[l], state.v.b[l], state.step_count, state.hp);
    if (!layer.slope.empty())
      adam_update(layer.slope, grads.slope[l], state.m.slope[l], state.v.slope[l],
                  state.step_count, state.hp);
  }
}

double finite_diff_grad(ComponentNet& net, std::span<const double> x,
                        std::span<const double> target, std::size_t param_index, double step,
                        const BatchCache* masks) {
  const double saved = net.get_param(param_index);
  const Mode mode = masks ? Mode::Train : Mode::Infer;
  std::vector<double> y(net.output_width());

  net.set_param(param_index, saved + step);
  forward_batch(net, x.data(), 1, mode, nullptr, y.data(), nullptr, masks);
  const double up = mse_loss(y, target);

  net.set_param(param_index, saved - step);
  forward_batch(net, x.data(), 1, mode, nullptr, y.data(), nullptr, masks);
  const double down = mse_loss(y, target);

  net.set_param(param_index, saved);
  return (up - down) / (2.0 * step);
}

void Scaler::apply_row(const double* in, double* out) const {
  for (int j = 0; j < cols(); ++j) out[j] = (in[j] - mean[j]) / scale[j];
}

void Scaler::invert_row(const double* in, double* out) const {
  for (int j = 0; j < cols(); ++j) out[j] = in[j] * scale[j] + mean[j];
}

Scaler standardize_fit(const double* data, int rows, int cols) {
  if (rows < 2) throw DimensionError("standardize_fit: need >= 2 rows");
  Scaler s;
  s.mean.assign(cols, 0.0);
  s.scale.assign(cols, 1.0);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) s.mean[j] += data[static_cast<std::size_t>(i) * cols + j];
  for (int j = 0; j < cols; ++j) s.mean[j] /= rows;
  for (int j = 0; j < cols; ++j) {
    double acc = 0.0;
    for (int i = 0; i < rows; ++i) {
      const double d = data[static_cast<std::size_t>(i) * cols + j] - s.mean[j];
      acc += d * d;
    }
    const double sd = std::sqrt(acc / rows);
    s.scale[j] = sd > 0.0 ? sd : 1.0;
  }
  return s;
}

void standardize_apply(const Scaler& s, const double* in, double* out, int rows) {
  for (int i = 0; i < rows; ++i)
    s.apply_row(in + static_cast<std::size_t>(i) * s.cols(), out + static_cast<std::size_t>(i) * s.cols());
}

void standardize_invert(const Scaler& s, const double* in, double* out, int rows) {
  for (int i = 0; i < rows; ++i)
    s.invert_row(in + static_cast<std::size_t>(i) * s.cols(), out + static_cast<std::size_t>(i) * s.cols());
}

FitStats fit_net(ComponentNet& net, const std::vector<double>& x, const std::vector<double>& y,
                 int rows, int epochs, int minibatch, Rng& rng, const AdamConfig& adam) {
  const int in_w = net.input_width();
  const int out_w = net.output_width();
  if (x.size() != static_cast<std::size_t>(rows) * in_w ||
      y.size() != static_cast<std::size_t>(rows) * out_w)
    throw DimensionError("fit_net: data shapes disagree with network");
  if (rows < 1 || epochs < 1 || minibatch < 1)
    throw ValueError("fit_net: rows, epochs and minibatch must be >= 1");

  AdamState state = AdamState::for_net(net, adam);
  NetGrads grads = NetGrads::for_net(net);
  FitStats stats;
  stats.epoch_mse.reserve(epochs);

  std::vector<int> order(rows);
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> xb, yb, pred, dy;
  BatchCache cache;

  for (int epoch = 0; epoch < epochs; ++epoch) {
    rng.shuffle(order);
    double sq_sum = 0.0;
    for (int start = 0; start < rows; start += minibatch) {
      const int bsz = std::min(minibatch, rows - start);
      xb.resize(static_cast<std::size_t>(bsz) * in_w);
      yb.resize(static_cast<std::size_t>(bsz) * out_w);
      for (int i = 0; i < bsz; ++i) {
        const int src = order[start + i];
        std::copy_n(x.data() + static_cast<std::size_t>(src) * in_w, in_w,
                    xb.data() + static_cast<std::size_t>(i) * in_w);
        std::copy_n(y.data() + static_cast<std::size_t>(src) * out_w, out_w,
                    yb.data() + static_cast<std::size_t>(i) * out_w);
      }
      pred.resize(static_cast<std::size_t>(bsz) * out_w);
      forward_batch(net, xb.data(), bsz, Mode::Train, &rng, pred.data(), &cache);

      // Batch loss: mean over elements of per-output MSE.
      dy.resize(pred.size());
      const double inv = 2.0 / (static_cast<double>(out_w) * bsz);
      for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - yb[i];
        sq_sum += d * d;
        dy[i] = inv * d;
      }

      backward_batch(net, cache, dy.data(), grads);
      adam_step(net, grads, state);
    }
    const double epoch_mse = sq_sum / (static_cast<double>(rows) * out_w);
    if (!std::isfinite(epoch_mse)) throw ValueError("fit_net: non-finite training loss");
    stats.epoch_mse.push_back(epoch_mse);
  }
  return stats;
}

nlohmann::json net_to_json(const ComponentNet& net) {
  nlohmann::json j;
  j["complexity_eta"] = net.complexity_eta;
  j["layers"] = nlohmann::json::array();
  for (const auto& l : net.layers) {
    nlohmann::json jl;
    jl["in"] = l.in;
    jl["out"] = l.out;
    jl["activation"] = activation_tag(l.act);
    jl["dropout_after"] = l.dropout_after;
    jl["w"] = l.w;
    jl["b"] = l.b;
    if (!l.slope.empty()) jl["slope"] = l.slope;
    j["layers"].push_back(std::move(jl));
  }
  return j;
}

ComponentNet net_from_json(const nlohmann::json& j) {
  ComponentNet net;
  net.complexity_eta = j.at("complexity_eta").get<int>();
  for (const auto& jl : j.at("layers")) {
    DenseLayer l;
    l.in = jl.at("in").get<int>();
    l.out = jl.at("out").get<int>();
    l.act = activation_from_tag(jl.at("activation").get<std::string>());
    l.dropout_after = jl.at("dropout_after").get<bool>();
    l.w = jl.at("w").get<std::vector<double>>();
    l.b = jl.at("b").get<std::vector<double>>();
    if (jl.contains("slope")) l.slope = jl.at("slope").get<std::vector<double>>();
    if (l.w.size() != static_cast<std::size_t>(l.in) * l.out ||
        l.b.size() != static_cast<std::size_t>(l.out))
      throw DimensionError("net_from_json: parameter block shapes disagree");
    net.layers.push_back(std::move(l));
  }
  if (net.layers.empty()) throw DimensionError("net_from_json: no layers");
  return net;
}

nlohmann::json scaler_to_json(const Scaler& s) {
  return nlohmann::json{{"mean", s.mean}, {"scale", s.scale}};
}

Scaler scaler_from_json(const nlohmann::json& j) {
  Scaler s;
  s.mean = j.at("mean").get<std::vector<double>>();
  s.scale = j.at("scale").get<std::vector<double>>();
  if (s.mean.size() != s.scale.size()) throw DimensionError("scaler_from_json: shape mismatch");
  return s;
}

}  // namespace emucal::nn
