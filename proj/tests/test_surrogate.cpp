#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include <nlohmann/json.hpp>

#include "emucal/simulators.hpp"
#include "emucal/surrogate.hpp"

using namespace emucal;

namespace {

// Small toy training set: bivariate simulator on random inputs.
TrainingSet toy_data(int n, int t_steps, std::uint64_t seed) {
  TrainingSet data;
  Rng rng(seed);
  const ToyConstants c;
  for (int i = 0; i < n; ++i) {
    ParamVector theta{rng.uniform(0, 15), rng.uniform(0, 15)};
    data.outputs.push_back(simulate_bivariate(theta, c, t_steps));
    data.inputs.push_back(std::move(theta));
    data.tags.push_back(SampleSource::Lhc);
  }
  return data;
}

TrainConfig quick_cfg(int eta, int epochs) {
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.minibatch = 20;
  cfg.complexity_eta = eta;
  return cfg;
}

}  // namespace

TEST_CASE("drn structure and shape contract") {
  const TrainingSet data = toy_data(40, 4, 1);
  Rng rng(2);
  const DrnSurrogate model = drn_train(data, quick_cfg(2, 2), rng);
  CHECK(model.components.size() == 4);
  CHECK(model.output_scalers.size() == 4);
  for (const auto& c : model.components) {
    CHECK(c.input_width() == 3);  // J + M
    CHECK(c.output_width() == 1);
  }
  const OutputSeries z = drn_predict(model, {7.0, 8.0});
  CHECK(z.time_steps == 4);
  CHECK(z.features == 1);
  CHECK(z.all_finite());

  // parameter count is the sum over components
  std::size_t total = 0;
  for (const auto& c : model.components) total += c.param_count();
  CHECK(model.param_count() == total);

  CHECK_THROWS_AS(drn_predict(model, {1.0}), DimensionError);
}

TEST_CASE("T=1 cascade degenerates to a single regression net") {
  const TrainingSet data = toy_data(30, 1, 3);
  Rng rng(4);
  const DrnSurrogate model = drn_train(data, quick_cfg(2, 2), rng);
  CHECK(model.components.size() == 1);
  const OutputSeries z = drn_predict(model, {3.0, 4.0});
  CHECK(z.time_steps == 1);
}

TEST_CASE("constant-output simulator is reproduced within 1e-2") {
  TrainingSet data;
  Rng rng(5);
  for (int i = 0; i < 300; ++i) {
    data.inputs.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1)});
    OutputSeries z(3, 2);
    for (auto& v : z.values) v = 0.7;
    data.outputs.push_back(std::move(z));
    data.tags.push_back(SampleSource::Lhc);
  }
  Rng train_rng(6);
  const DrnSurrogate model = drn_train(data, quick_cfg(3, 30), train_rng);
  const OutputSeries pred = drn_predict(model, {0.25, -0.5});
  for (double v : pred.values) CHECK(v == doctest::Approx(0.7).epsilon(1e-2));
}

TEST_CASE("prediction is deterministic and matches the manual cascade") {
  const TrainingSet data = toy_data(60, 5, 7);
  Rng rng(8);
  const DrnSurrogate model = drn_train(data, quick_cfg(2, 3), rng);
  const ParamVector theta{4.0, 11.0};
  const OutputSeries a = drn_predict(model, theta);
  const OutputSeries b = drn_predict(model, theta);
  CHECK(a.values == b.values);

  // Manual step-by-step evaluation with the zero-vector seed input.
  const int j_dim = 2, m_feat = 1;
  std::vector<double> x(j_dim + m_feat, 0.0);
  model.input_scaler.apply_row(theta.data(), x.data());
  OutputSeries manual(5, 1);
  std::vector<double> out_std(m_feat);
  for (int t = 0; t < 5; ++t) {
    out_std = nn::forward(model.components[t], x, nn::Mode::Infer, nullptr);
    model.output_scalers[t].invert_row(out_std.data(), &manual.at(t, 0));
    std::copy(out_std.begin(), out_std.end(), x.begin() + j_dim);
  }
  CHECK(manual.values == a.values);
}

TEST_CASE("training is bitwise deterministic under a fixed seed") {
  const TrainingSet data = toy_data(50, 3, 9);
  Rng rng1(10), rng2(10);
  const DrnSurrogate m1 = drn_train(data, quick_cfg(2, 3), rng1);
  const DrnSurrogate m2 = drn_train(data, quick_cfg(2, 3), rng2);
  REQUIRE(m1.components.size() == m2.components.size());
  for (std::size_t t = 0; t < m1.components.size(); ++t)
    for (std::size_t l = 0; l < m1.components[t].layers.size(); ++l) {
      CHECK(m1.components[t].layers[l].w == m2.components[t].layers[l].w);
      CHECK(m1.components[t].layers[l].b == m2.components[t].layers[l].b);
    }
}

TEST_CASE("training loss is finite and ends below its start") {
  const TrainingSet data = toy_data(200, 4, 11);
  Rng rng(12);
  const DrnSurrogate model = drn_train(data, quick_cfg(3, 25), rng);
  for (const auto& st : model.train_stats) {
    for (double e : st.epoch_mse) CHECK(std::isfinite(e));
    CHECK(st.last_epoch_mse() < st.first_epoch_mse());
  }
}

TEST_CASE("serialization round-trip agrees to 1e-12 on 100 random inputs") {
  const TrainingSet data = toy_data(60, 3, 13);
  Rng rng(14);
  const DrnSurrogate model = drn_train(data, quick_cfg(2, 3), rng);

  const std::string path =
      (std::filesystem::temp_directory_path() / "emucal_model_roundtrip.json").string();
  save_surrogate(model, path);
  const DrnSurrogate back = load_surrogate(path);
  std::filesystem::remove(path);

  Rng probe(15);
  for (int i = 0; i < 100; ++i) {
    const ParamVector theta{probe.uniform(0, 15), probe.uniform(0, 15)};
    const OutputSeries a = drn_predict(model, theta);
    const OutputSeries b = drn_predict(back, theta);
    for (std::size_t k = 0; k < a.values.size(); ++k)
      CHECK(a.values[k] == doctest::Approx(b.values[k]).epsilon(1e-12));
  }
}

TEST_CASE("ncdnn shape and structure") {
  const TrainingSet data = toy_data(50, 4, 16);
  Rng rng(17);
  const NcDnnModel model = ncdnn_train(data, quick_cfg(2, 3), rng);
  CHECK(model.net.input_width() == 2);   // J only
  CHECK(model.net.output_width() == 4);  // T * M
  const OutputSeries z = ncdnn_predict(model, {5.0, 5.0});
  CHECK(z.time_steps == 4);
  CHECK(z.features == 1);
  const OutputSeries z2 = ncdnn_predict(model, {5.0, 5.0});
  CHECK(z.values == z2.values);

  // hidden widths follow the per-step sizing rule
  CHECK(model.net.widths() == std::vector<int>{2, 2 * 3, 4 * 2 * 3, 4 * 2 * 3, 2 * 1, 4});
}

TEST_CASE("ncdnn reproduces a constant target") {
  TrainingSet data;
  Rng rng(18);
  for (int i = 0; i < 300; ++i) {
    data.inputs.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1)});
    OutputSeries z(2, 1);
    z.values = {0.4, -0.2};
    data.outputs.push_back(std::move(z));
    data.tags.push_back(SampleSource::Lhc);
  }
  Rng train_rng(19);
  const NcDnnModel model = ncdnn_train(data, quick_cfg(3, 30), train_rng);
  const OutputSeries pred = ncdnn_predict(model, {0.1, 0.2});
  CHECK(pred.at(0, 0) == doctest::Approx(0.4).epsilon(1e-2));
  CHECK(pred.at(1, 0) == doctest::Approx(-0.2).epsilon(1e-2));
}

TEST_CASE("stdrnn weight sharing makes the parameter count independent of T") {
  Rng rng(20);
  const StdRnnModel short_model = stdrnn_train(toy_data(30, 2, 21), quick_cfg(2, 2), rng);
  Rng rng2(20);
  const StdRnnModel long_model = stdrnn_train(toy_data(30, 9, 21), quick_cfg(2, 2), rng2);
  CHECK(short_model.param_count() == long_model.param_count());
  CHECK(short_model.hidden == 2 * 3);

  const OutputSeries z = stdrnn_predict(long_model, {5.0, 6.0});
  CHECK(z.time_steps == 9);
  CHECK(z.features == 1);
  const OutputSeries z2 = stdrnn_predict(long_model, {5.0, 6.0});
  CHECK(z.values == z2.values);
}

TEST_CASE("stdrnn learns through the unrolled sequence") {
  TrainingSet data;
  Rng rng(22);
  for (int i = 0; i < 300; ++i) {
    data.inputs.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1)});
    OutputSeries z(1, 1);
    z.values = {0.3};
    data.outputs.push_back(std::move(z));
    data.tags.push_back(SampleSource::Lhc);
  }
  Rng train_rng(23);
  const StdRnnModel constant = stdrnn_train(data, quick_cfg(4, 60), train_rng);
  CHECK(stdrnn_predict(constant, {0.0, 0.0}).at(0, 0) == doctest::Approx(0.3).epsilon(2e-2));

  // BPTT on a 4-step toy sequence drives the loss down.
  Rng train_rng2(24);
  const StdRnnModel seq = stdrnn_train(toy_data(200, 4, 25), quick_cfg(4, 40), train_rng2);
  CHECK(seq.train_stats[0].last_epoch_mse() < seq.train_stats[0].first_epoch_mse());
  for (double e : seq.train_stats[0].epoch_mse) CHECK(std::isfinite(e));
}

TEST_CASE("surrogate_loglike plugs predictions into the Gaussian likelihood") {
  const TrainingSet data = toy_data(60, 4, 26);
  Rng rng(27);
  const DrnSurrogate model = drn_train(data, quick_cfg(2, 4), rng);

  const ParamVector theta{8.0, 9.0};
  const OutputSeries pred = drn_predict(model, theta);
  ObservedData obs;
  obs.data = pred;  // observation equals the surrogate's own prediction
  obs.noise_sigma = OutputSeries(4, 1);
  for (auto& v : obs.noise_sigma.values) v = 0.1;

  const double peak = 4 * (-0.5 * std::log(2 * M_PI * 0.01));
  CHECK(surrogate_loglike(model, theta, obs) == doctest::Approx(peak).epsilon(1e-12));

  // increasing a |residual| decreases the value
  obs.data.at(2, 0) += 0.05;
  const double worse = surrogate_loglike(model, theta, obs);
  CHECK(worse < peak);
  obs.data.at(2, 0) += 0.05;
  CHECK(surrogate_loglike(model, theta, obs) < worse);
}

TEST_CASE("empty or inconsistent training sets are rejected") {
  TrainingSet empty;
  Rng rng(1);
  CHECK_THROWS_AS(drn_train(empty, quick_cfg(2, 2), rng), ValueError);

  TrainingSet bad = toy_data(10, 3, 2);
  bad.outputs[3] = OutputSeries(2, 1);  // wrong shape
  CHECK_THROWS_AS(drn_train(bad, quick_cfg(2, 2), rng), DimensionError);
}
