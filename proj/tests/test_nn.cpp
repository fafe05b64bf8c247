#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include <nlohmann/json.hpp>

#include "emucal/nn.hpp"

using namespace emucal;
using nn::Activation;

TEST_CASE("component widths follow the sizing rule") {
  CHECK(nn::component_widths(8, 6, 10) == std::vector<int>{14, 140, 560, 560, 60, 6});
  CHECK(nn::component_widths(2, 1, 15) == std::vector<int>{3, 45, 180, 180, 15, 1});
}

TEST_CASE("parameter count matches the closed form") {
  Rng rng(1);
  nn::ComponentNet net = nn::build_component_net(8, 6, 10, rng);
  const std::vector<int> w = net.widths();
  std::size_t expected = 0;
  for (std::size_t l = 0; l + 1 < w.size(); ++l)
    expected += static_cast<std::size_t>(w[l]) * w[l + 1] + w[l + 1];
  expected += 560 + 560;  // PReLU slopes on the two PReLU layers
  CHECK(net.param_count() == expected);
  CHECK(net.param_count() == 430366u);

  // activation schedule: linear, prelu, prelu(+dropout), tanh(+dropout), linear
  CHECK(net.layers[0].act == Activation::Linear);
  CHECK(net.layers[1].act == Activation::PRelu);
  CHECK(net.layers[2].act == Activation::PRelu);
  CHECK(net.layers[2].dropout_after);
  CHECK(net.layers[3].act == Activation::Tanh);
  CHECK(net.layers[3].dropout_after);
  CHECK(net.layers[4].act == Activation::Linear);
  for (double s : net.layers[1].slope) CHECK(s == 0.25);
}

TEST_CASE("flat parameter view round-trips") {
  Rng rng(2);
  nn::ComponentNet net = nn::build_component_net(2, 1, 2, rng);
  const std::size_t n = net.param_count();
  const double before = net.get_param(n - 1);
  net.set_param(n - 1, before + 1.5);
  CHECK(net.get_param(n - 1) == before + 1.5);
  CHECK_THROWS(net.get_param(n));
}

TEST_CASE("forward basics") {
  Rng rng(3);
  nn::ComponentNet net = nn::build_component_net(2, 1, 2, rng);

  SUBCASE("all-zero parameters collapse to zero output") {
    for (auto& l : net.layers) {
      std::fill(l.w.begin(), l.w.end(), 0.0);
      std::fill(l.b.begin(), l.b.end(), 0.0);
    }
    const auto y = nn::forward(net, std::vector<double>{0.3, -0.7, 2.0}, nn::Mode::Infer, nullptr);
    CHECK(y.size() == 1);
    CHECK(y[0] == 0.0);
  }

  SUBCASE("inference is deterministic") {
    const std::vector<double> x{0.5, -1.0, 0.25};
    const auto y1 = nn::forward(net, x, nn::Mode::Infer, nullptr);
    const auto y2 = nn::forward(net, x, nn::Mode::Infer, nullptr);
    CHECK(y1 == y2);
  }

  SUBCASE("input width is checked") {
    CHECK_THROWS_AS(nn::forward(net, std::vector<double>{1.0}, nn::Mode::Infer, nullptr),
                    DimensionError);
  }
}

TEST_CASE("PReLU definition") {
  // Single prelu layer: 1 -> 1, weight 1, bias 0, slope 0.25.
  Rng rng(4);
  nn::ComponentNet net =
      nn::build_net({1, 1}, {Activation::PRelu}, {false}, 1, rng);
  net.layers[0].w[0] = 1.0;
  net.layers[0].b[0] = 0.0;
  net.layers[0].slope[0] = 0.25;
  CHECK(nn::forward(net, std::vector<double>{-2.0}, nn::Mode::Infer, nullptr)[0] ==
        doctest::Approx(-0.5));
  CHECK(nn::forward(net, std::vector<double>{2.0}, nn::Mode::Infer, nullptr)[0] ==
        doctest::Approx(2.0));
}

TEST_CASE("mse examples") {
  CHECK(nn::mse_loss(std::vector<double>{1, 2}, std::vector<double>{1, 2}) == 0.0);
  CHECK(nn::mse_loss(std::vector<double>{1, 1}, std::vector<double>{0, 0}) == doctest::Approx(1.0));
  CHECK(nn::mse_loss(std::vector<double>{3}, std::vector<double>{1}) == doctest::Approx(4.0));
  CHECK_THROWS_AS(nn::mse_loss(std::vector<double>{1}, std::vector<double>{1, 2}), DimensionError);
}

TEST_CASE("backward matches finite differences on the full stack") {
  Rng rng(5);
  nn::ComponentNet net = nn::build_component_net(3, 2, 2, rng);
  std::vector<double> x(net.input_width()), target(net.output_width());
  for (auto& v : x) v = rng.uniform(-1, 1);
  for (auto& v : target) v = rng.uniform(-1, 1);

  nn::BatchCache cache;
  std::vector<double> y(net.output_width());
  nn::forward_batch(net, x.data(), 1, nn::Mode::Train, &rng, y.data(), &cache);
  std::vector<double> dy(y.size());
  for (std::size_t i = 0; i < y.size(); ++i)
    dy[i] = 2.0 * (y[i] - target[i]) / static_cast<double>(y.size());
  nn::NetGrads grads = nn::NetGrads::for_net(net);
  nn::backward_batch(net, cache, dy.data(), grads);

  std::vector<double> flat;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    flat.insert(flat.end(), grads.w[l].begin(), grads.w[l].end());
    flat.insert(flat.end(), grads.b[l].begin(), grads.b[l].end());
    flat.insert(flat.end(), grads.slope[l].begin(), grads.slope[l].end());
  }
  CHECK(flat.size() == net.param_count());

  int checked = 0;
  for (int probe = 0; probe < 100; ++probe) {
    const std::size_t idx = rng.uniform_int(net.param_count());
    const double fd = nn::finite_diff_grad(net, x, target, idx, 1e-5, &cache);
    const double an = flat[idx];
    if (std::abs(an) < 1e-3) {
      CHECK(std::abs(fd - an) < 1e-7);
    } else {
      CHECK(fd == doctest::Approx(an).epsilon(1e-4));
    }
    ++checked;
  }
  CHECK(checked == 100);
}

TEST_CASE("zero output gradient gives zero parameter gradients") {
  Rng rng(6);
  nn::ComponentNet net = nn::build_component_net(2, 1, 2, rng);
  nn::BatchCache cache;
  std::vector<double> x{0.1, 0.2, -0.4}, y(1);
  nn::forward_batch(net, x.data(), 1, nn::Mode::Train, &rng, y.data(), &cache);
  std::vector<double> dy{0.0};
  nn::NetGrads grads = nn::NetGrads::for_net(net);
  nn::backward_batch(net, cache, dy.data(), grads);
  for (const auto& block : grads.w)
    for (double g : block) CHECK(g == 0.0);
}

TEST_CASE("single linear layer bias gradient equals residual") {
  Rng rng(7);
  nn::ComponentNet net = nn::build_net({2, 2}, {Activation::Linear}, {false}, 1, rng);
  std::vector<double> x{0.5, -1.5};
  nn::BatchCache cache;
  std::vector<double> y(2);
  nn::forward_batch(net, x.data(), 1, nn::Mode::Train, &rng, y.data(), &cache);
  const std::vector<double> target{0.25, 0.75};
  // loss = 0.5 |y - t|^2  ->  d/db = (y - t)
  std::vector<double> dy{y[0] - target[0], y[1] - target[1]};
  nn::NetGrads grads = nn::NetGrads::for_net(net);
  nn::backward_batch(net, cache, dy.data(), grads);
  CHECK(grads.b[0][0] == doctest::Approx(y[0] - target[0]).epsilon(1e-14));
  CHECK(grads.b[0][1] == doctest::Approx(y[1] - target[1]).epsilon(1e-14));
}

TEST_CASE("adam identities") {
  nn::AdamConfig hp;
  SUBCASE("first step moves by about lr against the gradient sign") {
    std::vector<double> p{1.0}, g{0.3}, m{0.0}, v{0.0};
    nn::adam_update(p, g, m, v, 1, hp);
    CHECK(p[0] == doctest::Approx(1.0 - hp.lr).epsilon(1e-4));
  }
  SUBCASE("zero gradient is the identity") {
    std::vector<double> p{1.0, -2.0}, g{0.0, 0.0}, m{0.0, 0.0}, v{0.0, 0.0};
    for (long t = 1; t <= 50; ++t) nn::adam_update(p, g, m, v, t, hp);
    CHECK(p[0] == 1.0);
    CHECK(p[1] == -2.0);
  }
  SUBCASE("repeated identical gradient converges to lr-sized steps") {
    std::vector<double> p{0.0}, g{-0.8}, m{0.0}, v{0.0};
    double prev = p[0];
    double step = 0.0;
    for (long t = 1; t <= 2000; ++t) {
      nn::adam_update(p, g, m, v, t, hp);
      step = p[0] - prev;
      prev = p[0];
    }
    CHECK(step == doctest::Approx(hp.lr).epsilon(1e-3));
  }
  SUBCASE("shape mismatch throws") {
    std::vector<double> p{1.0}, g{1.0, 2.0}, m{0.0}, v{0.0};
    CHECK_THROWS_AS(nn::adam_update(p, g, m, v, 1, hp), DimensionError);
  }
}

TEST_CASE("dropout expectation matches inference activations") {
  Rng rng(8);
  nn::ComponentNet net = nn::build_component_net(2, 1, 2, rng);
  const std::vector<double> x{0.4, -0.9, 0.1};
  const auto y_infer = nn::forward(net, x, nn::Mode::Infer, nullptr);

  const int n = 20000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const auto y = nn::forward(net, x, nn::Mode::Train, &rng);
    sum += y[0];
    sq += y[0] * y[0];
  }
  const double mean = sum / n;
  const double se = std::sqrt((sq / n - mean * mean) / n);
  CHECK(std::abs(mean - y_infer[0]) < 3.0 * se + 1e-12);
}

TEST_CASE("standardize examples") {
  const std::vector<double> col{0.0, 2.0};
  const nn::Scaler s = nn::standardize_fit(col.data(), 2, 1);
  CHECK(s.mean[0] == doctest::Approx(1.0));
  CHECK(s.scale[0] == doctest::Approx(1.0));
  std::vector<double> out(2);
  nn::standardize_apply(s, col.data(), out.data(), 2);
  CHECK(out[0] == doctest::Approx(-1.0));
  CHECK(out[1] == doctest::Approx(1.0));

  std::vector<double> back(2);
  nn::standardize_invert(s, out.data(), back.data(), 2);
  CHECK(back[0] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(back[1] == doctest::Approx(2.0).epsilon(1e-12));

  const std::vector<double> constant{3.0, 3.0, 3.0};
  const nn::Scaler sc = nn::standardize_fit(constant.data(), 3, 1);
  CHECK(sc.scale[0] == 1.0);
  std::vector<double> tc(3);
  nn::standardize_apply(sc, constant.data(), tc.data(), 3);
  for (double v : tc) CHECK(v == 0.0);

  CHECK_THROWS_AS(nn::standardize_fit(constant.data(), 1, 1), DimensionError);
}

TEST_CASE("apply then invert is the identity within 1e-12") {
  Rng rng(9);
  std::vector<double> data(60);
  for (auto& v : data) v = rng.uniform(-100, 100);
  const nn::Scaler s = nn::standardize_fit(data.data(), 20, 3);
  std::vector<double> std_out(60), back(60);
  nn::standardize_apply(s, data.data(), std_out.data(), 20);
  nn::standardize_invert(s, std_out.data(), back.data(), 20);
  for (std::size_t i = 0; i < data.size(); ++i)
    CHECK(back[i] == doctest::Approx(data[i]).epsilon(1e-12));
}

TEST_CASE("training drives a linear target below 1e-3") {
  Rng rng(10);
  nn::ComponentNet net = nn::build_component_net(2, 1, 15, rng);
  const int n = 1024;
  std::vector<double> x(static_cast<std::size_t>(n) * 3), y(n);
  for (int i = 0; i < n; ++i) {
    x[i * 3 + 0] = rng.uniform(-1, 1);
    x[i * 3 + 1] = rng.uniform(-1, 1);
    x[i * 3 + 2] = rng.uniform(-1, 1);
    y[i] = 0.7 * x[i * 3] - 0.3 * x[i * 3 + 1] + 0.1;
  }
  const nn::FitStats stats = nn::fit_net(net, x, y, n, 600, 20, rng);
  CHECK(stats.last_epoch_mse() < stats.first_epoch_mse());
  for (double e : stats.epoch_mse) CHECK(std::isfinite(e));

  // Expressivity gate on the frozen net (training-mode loss carries dropout
  // noise and cannot reach this level).
  std::vector<double> pred(n);
  nn::infer_batch(net, x.data(), n, pred.data());
  CHECK(nn::mse_loss(pred, y) < 1e-3);
}

TEST_CASE("serialization round-trips bitwise") {
  Rng rng(11);
  nn::ComponentNet net = nn::build_component_net(3, 2, 2, rng);
  const nlohmann::json j = nn::net_to_json(net);
  const std::string text = j.dump();
  const nn::ComponentNet back = nn::net_from_json(nlohmann::json::parse(text));
  REQUIRE(back.layers.size() == net.layers.size());
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    CHECK(back.layers[l].w == net.layers[l].w);
    CHECK(back.layers[l].b == net.layers[l].b);
    CHECK(back.layers[l].slope == net.layers[l].slope);
    CHECK(back.layers[l].act == net.layers[l].act);
    CHECK(back.layers[l].dropout_after == net.layers[l].dropout_after);
  }

  const nn::Scaler s{{1.0, -2.5}, {0.5, 3.25}};
  const nn::Scaler s2 = nn::scaler_from_json(nn::scaler_to_json(s));
  CHECK(s2.mean == s.mean);
  CHECK(s2.scale == s.scale);
}
