#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "emucal/config.hpp"
#include "emucal/kernels.hpp"
#include "emucal/nn.hpp"
#include "emucal/sampler.hpp"

namespace fs = std::filesystem;
using namespace emucal;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitConfigError = 2;

void print_error_record(const std::string& command, const std::string& message) {
  nlohmann::json j{{"error", message}, {"command", command}, {"tool_version", kToolVersion}};
  std::cerr << j.dump() << "\n";
}

std::vector<int> parse_int_list(const std::string& csv) {
  std::vector<int> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    out.push_back(std::stoi(item));
  }
  return out;
}

std::vector<SampleScheme> parse_scheme_list(const std::string& csv) {
  std::vector<SampleScheme> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    out.push_back(scheme_from_name(item));
  }
  return out;
}

struct CommonOpts {
  std::string config_path;
  std::string out_dir = "out";
  std::uint64_t seed = 0;
  bool seed_set = false;
  int jobs = 0;
  bool verbose = false;
};

void add_common(CLI::App* cmd, CommonOpts& opts, bool needs_config) {
  auto* cfg_opt = cmd->add_option("--config", opts.config_path, "Experiment config file (JSON)");
  if (needs_config) cfg_opt->required();
  cmd->add_option("--out", opts.out_dir, "Output directory");
  cmd->add_option("--seed", opts.seed, "Master seed override")->each([&](const std::string&) {
    opts.seed_set = true;
  });
  cmd->add_option("--jobs", opts.jobs, "Worker pool size (default: processor cores)");
  cmd->add_flag("--verbose", opts.verbose, "Per-iteration sampler progress on stderr");
}

ExperimentConfig resolve_config(const CommonOpts& opts) {
  ExperimentConfig cfg = load_config(opts.config_path);
  if (opts.seed_set) cfg.seed = opts.seed;
  if (opts.verbose) cfg.verbose = true;
  cfg.validate();
  return cfg;
}

RunManifest start_manifest(const CommonOpts& opts, const ExperimentConfig& cfg) {
  fs::create_directories(opts.out_dir);
  RunManifest manifest;
  manifest.config_path = opts.config_path;
  manifest.resolved_config = config_to_json(cfg);
  manifest.output_dir = opts.out_dir;
  manifest.started_at = now_iso8601();
  write_manifest(manifest, (fs::path(opts.out_dir) / "manifest.json").string());
  return manifest;
}

void finish_manifest(RunManifest& manifest, const CommonOpts& opts) {
  manifest.finished_at = now_iso8601();
  write_manifest(manifest, (fs::path(opts.out_dir) / "manifest.json").string());
}

int cmd_run(const CommonOpts& opts) {
  const ExperimentConfig cfg = resolve_config(opts);
  RunManifest manifest = start_manifest(opts, cfg);
  const fs::path out(opts.out_dir);

  const PipelineResult result = run_pipeline(cfg);
  write_report_json(result.report, manifest.resolved_config, (out / "report.json").string());
  if (result.report.incomplete) {
    print_error_record("run", result.report.error);
    finish_manifest(manifest, opts);
    return kExitCheckFailed;
  }

  write_metrics_csv(result.report.fold_metrics, (out / "metrics.csv").string());
  write_samples_csv(result.phase1 ? &*result.phase1 : nullptr, cfg.prior.dim(),
                    (out / "samples_phase1.csv").string());
  write_samples_csv(&result.phase3, cfg.prior.dim(), (out / "samples_phase3.csv").string());
  write_triangle_csv(result.summary1, result.summary3, (out / "triangle.csv").string());
  save_surrogate(result.model, (out / "model.json").string());
  finish_manifest(manifest, opts);

  std::printf("cv mean rmse %.6g, pearson %.6g; estimation rmse %.6g; lnZ(phase3) %.6g\n",
              result.report.cv_mean_rmse, result.report.cv_mean_pearson,
              result.report.estimation_rmse_mean, result.report.phase3.log_evidence);
  return kExitOk;
}

int cmd_sweep(const CommonOpts& opts, const std::string& etas_csv, const std::string& schemes_csv) {
  const std::vector<int> etas = parse_int_list(etas_csv);
  const std::vector<SampleScheme> schemes = parse_scheme_list(schemes_csv);
  if (etas.empty() || schemes.empty()) throw ConfigError("sweep: --etas and --schemes must be nonempty");
  const ExperimentConfig cfg = resolve_config(opts);
  RunManifest manifest = start_manifest(opts, cfg);

  const auto rows = eta_sweep(cfg, etas, schemes);
  write_sweep_csv(rows, (fs::path(opts.out_dir) / "sweep.csv").string());
  finish_manifest(manifest, opts);
  for (const auto& r : rows)
    if (!r.ok) {
      print_error_record("sweep", "cell (" + scheme_name(r.scheme) + ", eta=" +
                                      std::to_string(r.eta) + ") failed: " + r.error);
      return kExitCheckFailed;
    }
  std::printf("sweep: %zu cells written\n", rows.size());
  return kExitOk;
}

int cmd_curve(const CommonOpts& opts, const std::string& sizes_csv) {
  const std::vector<int> sizes = parse_int_list(sizes_csv);
  if (sizes.empty()) throw ConfigError("curve: --sizes must be nonempty");
  const ExperimentConfig cfg = resolve_config(opts);
  RunManifest manifest = start_manifest(opts, cfg);

  const auto rows = learning_curve(cfg, sizes);
  write_curve_csv(rows, (fs::path(opts.out_dir) / "learning_curve.csv").string());
  finish_manifest(manifest, opts);
  std::printf("learning curve: %zu sizes written\n", rows.size());
  return kExitOk;
}

// Fast oracle suite: analytic evidence, gradients, LHC stratification.
int cmd_validate(std::uint64_t seed, bool corrupt_gradient) {
  bool all_ok = true;
  auto report = [&](const char* name, bool ok, const std::string& detail) {
    std::printf("[%s] %s — %s\n", ok ? "PASS" : "FAIL", name, detail.c_str());
    if (!ok) all_ok = false;
  };

  {
    // 2-D Gaussian of scale 0.1 centered in the unit box; lnZ = ln(2 pi 0.01).
    const PriorSpec prior = PriorSpec::uniform_box({0.0, 0.0}, {1.0, 1.0});
    const double ln_z_true = std::log(2.0 * M_PI * 0.01);
    auto loglike = [](const ParamVector& t) {
      const double dx = t[0] - 0.5, dy = t[1] - 0.5;
      return -(dx * dx + dy * dy) / 0.02;
    };
    NsConfig ns;
    ns.n_live = 300;
    ns.seed = seed_for(seed, "validate/evidence");
    const NestedRunResult r = nested_sampling(loglike, prior, ns);
    const double err = std::abs(r.log_evidence - ln_z_true);
    const double bound = 3.0 * std::sqrt(r.information_nats / ns.n_live);
    char buf[160];
    std::snprintf(buf, sizeof(buf), "|lnZ_est - lnZ_true| = %.4f (bound %.4f, H = %.3f)", err,
                  bound, r.information_nats);
    report("analytic evidence", err < bound, buf);
  }

  {
    Rng rng(seed_for(seed, "validate/grad"));
    nn::ComponentNet net = nn::build_component_net(3, 2, 2, rng);
    std::vector<double> x(net.input_width()), target(net.output_width());
    for (auto& v : x) v = rng.uniform(-1.0, 1.0);
    for (auto& v : target) v = rng.uniform(-1.0, 1.0);

    nn::BatchCache cache;
    std::vector<double> y(net.output_width());
    nn::forward_batch(net, x.data(), 1, nn::Mode::Train, &rng, y.data(), &cache);
    std::vector<double> dy(y.size());
    for (std::size_t i = 0; i < y.size(); ++i)
      dy[i] = 2.0 * (y[i] - target[i]) / static_cast<double>(y.size());
    nn::NetGrads grads = nn::NetGrads::for_net(net);
    nn::backward_batch(net, cache, dy.data(), grads);
    if (corrupt_gradient)  // negative-control hook
      for (auto& block : grads.w)
        for (double& g : block) g += 0.5;

    // Flatten the analytic gradients in the same parameter order.
    std::vector<double> flat;
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
      flat.insert(flat.end(), grads.w[l].begin(), grads.w[l].end());
      flat.insert(flat.end(), grads.b[l].begin(), grads.b[l].end());
      flat.insert(flat.end(), grads.slope[l].begin(), grads.slope[l].end());
    }
    double worst = 0.0;
    const std::size_t n_params = net.param_count();
    for (int probe = 0; probe < 100; ++probe) {
      const std::size_t idx = rng.uniform_int(n_params);
      const double fd = nn::finite_diff_grad(net, x, target, idx, 1e-5, &cache);
      const double an = flat[idx];
      const double scale = std::max({std::abs(fd), std::abs(an), 1e-3});
      worst = std::max(worst, std::abs(fd - an) / scale);
    }
    char buf[96];
    std::snprintf(buf, sizeof(buf), "max relative error %.3g over 100 parameters", worst);
    report("gradient vs finite difference", worst < 1e-4, buf);
  }

  {
    Rng rng(seed_for(seed, "validate/lhc"));
    const int n = 1000;
    const PriorSpec prior = PriorSpec::uniform_box({0.0, -3.0}, {15.0, 7.0});
    const auto pts = lhc_sample(n, prior, rng);
    bool ok = true;
    for (int j = 0; j < 2 && ok; ++j) {
      std::vector<int> counts(n, 0);
      for (const auto& p : pts) {
        const double u = (p[j] - prior.lower[j]) / (prior.upper[j] - prior.lower[j]);
        const int b = std::min(static_cast<int>(u * n), n - 1);
        counts[b]++;
      }
      for (int c : counts)
        if (c != 1) ok = false;
    }
    report("lhc stratification", ok, "per-dimension stratum occupancy exactly 1");
  }

  return all_ok ? kExitOk : kExitCheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Surrogate-accelerated Bayesian calibration of dynamic simulators"};
  app.require_subcommand(1);

  CommonOpts run_opts, sweep_opts, curve_opts;
  std::string etas_csv, schemes_csv, sizes_csv;
  std::uint64_t validate_seed = 42;
  bool corrupt_gradient = false;

  auto* run = app.add_subcommand("run", "Execute the three-phase pipeline");
  add_common(run, run_opts, true);

  auto* sweep = app.add_subcommand("sweep", "Factorial (scheme, eta) experiment grid");
  add_common(sweep, sweep_opts, true);
  sweep->add_option("--etas", etas_csv, "Comma-separated complexity factors")->required();
  sweep->add_option("--schemes", schemes_csv, "Comma-separated sample schemes")->required();

  auto* curve = app.add_subcommand("curve", "Learning curve over training sizes");
  add_common(curve, curve_opts, true);
  curve->add_option("--sizes", sizes_csv, "Comma-separated ascending sample sizes")->required();

  auto* validate = app.add_subcommand("validate", "Run the built-in oracle checks");
  validate->add_option("--seed", validate_seed, "Seed for the oracle checks");
  validate->add_flag("--corrupt-gradient", corrupt_gradient,
                     "Deliberately corrupt one gradient (negative control)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfigError;
  }

  try {
    CommonOpts* opts = run->parsed() ? &run_opts : sweep->parsed() ? &sweep_opts : &curve_opts;
    if (!validate->parsed()) {
      kernels::set_max_threads(opts->jobs > 0 ? opts->jobs
                                              : static_cast<int>(std::thread::hardware_concurrency()));
    }
    if (run->parsed()) return cmd_run(run_opts);
    if (sweep->parsed()) return cmd_sweep(sweep_opts, etas_csv, schemes_csv);
    if (curve->parsed()) return cmd_curve(curve_opts, sizes_csv);
    if (validate->parsed()) return cmd_validate(validate_seed, corrupt_gradient);
  } catch (const ConfigError& e) {
    print_error_record(argv[1] ? argv[1] : "", e.what());
    return kExitConfigError;
  } catch (const std::exception& e) {
    print_error_record(argv[1] ? argv[1] : "", e.what());
    return kExitCheckFailed;
  }
  return kExitOk;
}
