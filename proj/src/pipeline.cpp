#include "emucal/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <numeric>

#include <nlohmann/json.hpp>

#include "emucal/kernels.hpp"

namespace emucal {

namespace {

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
  const double m = mean_of(v);
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<double>(v.size()));
}

std::string fmt17(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open output file: " + path);
  return out;
}

class Stopwatch {
 public:
  Stopwatch() : t0_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
  }

 private:
  std::chrono::steady_clock::time_point t0_;
};

// Line-delimited progress records on stderr, one per sampler iteration.
NsObserver progress_observer(bool verbose, const char* phase) {
  if (!verbose) return {};
  return [phase](const NsProgress& p) {
    std::fprintf(stderr,
                 "{\"phase\":\"%s\",\"iteration\":%d,\"log_like\":%.17g,\"log_volume\":%.17g,"
                 "\"log_evidence\":%.17g}\n",
                 phase, p.iteration, p.log_like, p.log_volume, p.log_evidence);
  };
}

NsReport summarize_ns(const NestedRunResult& r, const GroundTruth& truth) {
  NsReport rep;
  rep.log_evidence = r.log_evidence;
  rep.information_nats = r.information_nats;
  rep.iterations = r.iterations;
  rep.n_like_evals = r.n_like_evals;
  rep.wall_seconds = r.wall_time;
  rep.converged = r.converged;
  rep.mean = posterior_mean(r);
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& s : r.samples)
    if (s.log_like > best) {
      best = s.log_like;
      rep.map_point = s.theta;
    }
  (void)truth;
  return rep;
}

}  // namespace

std::string scheme_name(SampleScheme s) {
  switch (s) {
    case SampleScheme::Lhc: return "lhc";
    case SampleScheme::Posterior: return "posterior";
    case SampleScheme::Mixed: return "mixed";
  }
  return "lhc";
}

SampleScheme scheme_from_name(const std::string& name) {
  if (name == "lhc") return SampleScheme::Lhc;
  if (name == "posterior") return SampleScheme::Posterior;
  if (name == "mixed") return SampleScheme::Mixed;
  throw ConfigError("unknown sample scheme: " + name);
}

void ExperimentConfig::validate() const {
  if (simulator_name != "toy" && simulator_name != "standin")
    throw ConfigError("config: unknown simulator '" + simulator_name + "'");
  prior.validate();
  const int expected_j = simulator_name == "toy" ? 2 : 8;
  if (prior.dim() != expected_j)
    throw ConfigError("config: prior dimension disagrees with the simulator's input count");
  train.validate();
  ns_phase1.validate();
  ns_phase3.validate();
  if (time_steps < 1) throw ConfigError("config: time_steps must be >= 1");
  if (!(noise_frac > 0.0)) throw ConfigError("config: noise_frac must be positive");
  if (n_train < 1) throw ConfigError("config: n_train must be >= 1");
  if (k_folds < 2) throw ConfigError("config: k_folds must be >= 2");
  if (n_train < k_folds) throw ConfigError("config: n_train must be >= k_folds");
  if (scheme == SampleScheme::Mixed && n_train % 2 != 0)
    throw ConfigError("config: mixed scheme requires an even n_train");
  if (truth.theta_star.empty() || static_cast<int>(truth.theta_star.size()) != prior.dim())
    throw ConfigError("config: ground truth dimension disagrees with the prior");
  if (!prior.contains(truth.theta_star))
    throw ConfigError("config: ground truth lies outside the prior support");
}

std::uint64_t ExperimentConfig::phase1_seed() const {
  return ns_phase1.seed != 0 ? ns_phase1.seed : seed_for(seed, "phase1");
}

std::uint64_t ExperimentConfig::phase3_seed() const {
  return ns_phase3.seed != 0 ? ns_phase3.seed : seed_for(seed, "phase3");
}

OutputSeries SimCache::call(const ParamVector& theta) {
  {
    std::lock_guard lock(mu_);
    ++requested_;
    auto it = cache_.find(theta);
    if (it != cache_.end()) return it->second;
  }
  auto [out, elapsed] = timed_call(sim_, theta);
  (void)elapsed;
  std::lock_guard lock(mu_);
  // Count every compute, including a concurrent duplicate losing the race.
  ++computed_;
  return cache_.emplace(theta, std::move(out)).first->second;
}

CollectResult collect_training_data(const ExperimentConfig& cfg, SimCache& sim,
                                    const ObservedData& obs) {
  cfg.validate();
  Stopwatch watch;
  CollectResult result;

  const int n = cfg.n_train;
  std::vector<ParamVector> points;
  std::vector<SampleSource> tags;

  const bool wants_lhc = cfg.scheme != SampleScheme::Posterior;
  const bool wants_posterior = cfg.scheme != SampleScheme::Lhc;
  const int n_lhc = cfg.scheme == SampleScheme::Lhc ? n : (cfg.scheme == SampleScheme::Mixed ? n / 2 : 0);
  const int n_post = n - n_lhc;

  if (wants_lhc) {
    Rng rng(seed_for(cfg.seed, "collect/lhc"));
    for (auto& p : lhc_sample(n_lhc, cfg.prior, rng)) {
      points.push_back(std::move(p));
      tags.push_back(SampleSource::Lhc);
    }
  }
  if (wants_posterior) {
    NsConfig ns = cfg.ns_phase1;
    ns.seed = cfg.phase1_seed();
    auto loglike = [&](const ParamVector& theta) { return log_likelihood(sim.call(theta), obs); };
    result.phase1 = nested_sampling(loglike, cfg.prior, ns, progress_observer(cfg.verbose, "phase1"));
    Rng rng(seed_for(cfg.seed, "collect/resample"));
    for (auto& p : posterior_resample(*result.phase1, n_post, rng)) {
      points.push_back(std::move(p));
      tags.push_back(SampleSource::Posterior);
    }
  }

  result.data.inputs = std::move(points);
  result.data.tags = std::move(tags);
  result.data.outputs.resize(result.data.inputs.size());
  kernels::parallel_for(static_cast<int>(result.data.inputs.size()), [&](int i) {
    result.data.outputs[i] = sim.call(result.data.inputs[i]);
  });
  result.data.validate();
  result.seconds = watch.seconds();
  return result;
}

TrainerFn make_trainer(ModelKind kind, const TrainConfig& cfg) {
  switch (kind) {
    case ModelKind::Drn:
      return [cfg](const TrainingSet& data, std::uint64_t seed) -> PredictorFn {
        Rng rng(seed);
        auto model = std::make_shared<DrnSurrogate>(drn_train(data, cfg, rng));
        return [model](const ParamVector& theta) { return drn_predict(*model, theta); };
      };
    case ModelKind::NcDnn:
      return [cfg](const TrainingSet& data, std::uint64_t seed) -> PredictorFn {
        Rng rng(seed);
        auto model = std::make_shared<NcDnnModel>(ncdnn_train(data, cfg, rng));
        return [model](const ParamVector& theta) { return ncdnn_predict(*model, theta); };
      };
    case ModelKind::StdRnn:
      return [cfg](const TrainingSet& data, std::uint64_t seed) -> PredictorFn {
        Rng rng(seed);
        auto model = std::make_shared<StdRnnModel>(stdrnn_train(data, cfg, rng));
        return [model](const ParamVector& theta) { return stdrnn_predict(*model, theta); };
      };
  }
  throw ConfigError("make_trainer: unknown model kind");
}

namespace {

MetricPair flattened_metrics(const TrainingSet& data, const std::vector<int>& idx,
                             const PredictorFn& predict) {
  std::vector<double> pred, truth;
  pred.reserve(idx.size() * data.outputs[0].values.size());
  truth.reserve(pred.capacity());
  for (int i : idx) {
    const OutputSeries z = predict(data.inputs[i]);
    pred.insert(pred.end(), z.values.begin(), z.values.end());
    truth.insert(truth.end(), data.outputs[i].values.begin(), data.outputs[i].values.end());
  }
  return {rmse(pred, truth), pearson(pred, truth)};
}

}  // namespace

std::vector<CvFoldDetail> kfold_cv_detail(const TrainingSet& data, int k, const TrainerFn& trainer,
                                          std::uint64_t seed) {
  data.validate();
  const int n = data.size();
  if (k < 2) throw ValueError("kfold_cv: k must be >= 2");
  if (n < k) throw ValueError("kfold_cv: need at least k records");

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng shuffle_rng(seed_for(seed, "cv/shuffle"));
  shuffle_rng.shuffle(order);

  // Balanced contiguous folds over the shuffled order (sizes differ by <= 1).
  std::vector<std::vector<int>> folds(k);
  const int base = n / k, extra = n % k;
  int pos = 0;
  for (int f = 0; f < k; ++f) {
    const int len = base + (f < extra ? 1 : 0);
    folds[f].assign(order.begin() + pos, order.begin() + pos + len);
    pos += len;
  }

  std::vector<CvFoldDetail> details(k);
  kernels::parallel_for(k, [&](int f) {
    std::vector<int> train_idx;
    train_idx.reserve(n - folds[f].size());
    for (int g = 0; g < k; ++g)
      if (g != f) train_idx.insert(train_idx.end(), folds[g].begin(), folds[g].end());
    const TrainingSet train_data = data.subset(train_idx);
    const PredictorFn predict = trainer(train_data, seed_for(seed, "cv/fold" + std::to_string(f)));
    details[f].test = flattened_metrics(data, folds[f], predict);
    details[f].train = flattened_metrics(data, train_idx, predict);
  });
  return details;
}

std::vector<MetricPair> kfold_cv(const TrainingSet& data, int k, const TrainerFn& trainer,
                                 std::uint64_t seed) {
  std::vector<MetricPair> out;
  for (const auto& d : kfold_cv_detail(data, k, trainer, seed)) out.push_back(d.test);
  return out;
}

ParamVector posterior_mean(const NestedRunResult& result) {
  if (result.samples.empty()) throw ValueError("posterior_mean: empty sample list");
  const std::size_t dim = result.samples[0].theta.size();
  ParamVector mean(dim, 0.0);
  double w_sum = 0.0;
  for (const auto& s : result.samples) {
    const double w = std::exp(s.log_importance);
    w_sum += w;
    for (std::size_t j = 0; j < dim; ++j) mean[j] += w * s.theta[j];
  }
  for (auto& m : mean) m /= w_sum;
  return mean;
}

double estimation_rmse(const NestedRunResult& result, const GroundTruth& truth) {
  return rmse(posterior_mean(result), truth.theta_star);
}

PipelineResult run_pipeline(const ExperimentConfig& cfg) {
  cfg.validate();
  PipelineResult result;
  PipelineReport& rep = result.report;

  const Simulator sim =
      make_simulator(cfg.simulator_name, cfg.time_steps, cfg.delay_per_call, cfg.toy);
  SimCache cache(sim);

  // The observation is fixed before the pipeline proper; its single noise-free
  // run is not part of the collection budget.
  Rng obs_rng(seed_for(cfg.seed, "obs"));
  const ObservedData obs = make_observation(sim.run(cfg.truth.theta_star), cfg.noise_frac, obs_rng);

  try {
    Stopwatch prep_watch;
    CollectResult collected = collect_training_data(cfg, cache, obs);
    rep.prep_seconds = prep_watch.seconds();
    result.phase1 = std::move(collected.phase1);

    Stopwatch cv_watch;
    const TrainerFn trainer = make_trainer(ModelKind::Drn, cfg.train);
    rep.fold_metrics = kfold_cv(collected.data, cfg.k_folds, trainer, seed_for(cfg.seed, "cv"));
    rep.cv_seconds = cv_watch.seconds();
    std::vector<double> rmses, pearsons;
    for (const auto& m : rep.fold_metrics) {
      rmses.push_back(m.rmse);
      pearsons.push_back(m.pearson);
    }
    rep.cv_mean_rmse = mean_of(rmses);
    rep.cv_mean_pearson = mean_of(pearsons);

    Stopwatch train_watch;
    Rng train_rng(seed_for(cfg.seed, "train"));
    result.model = drn_train(collected.data, cfg.train, train_rng);
    rep.train_seconds = train_watch.seconds();
    for (const auto& st : result.model.train_stats) {
      rep.component_first_epoch_mse.push_back(st.first_epoch_mse());
      rep.component_last_epoch_mse.push_back(st.last_epoch_mse());
    }

    Stopwatch exec_watch;
    NsConfig ns3 = cfg.ns_phase3;
    ns3.seed = cfg.phase3_seed();
    auto surr_loglike = [&](const ParamVector& theta) {
      return surrogate_loglike(result.model, theta, obs);
    };
    result.phase3 =
        nested_sampling(surr_loglike, cfg.prior, ns3, progress_observer(cfg.verbose, "phase3"));
    rep.exec_seconds = exec_watch.seconds();

    if (result.phase1) {
      result.summary1 = posterior_summary(*result.phase1, cfg.prior);
      rep.phase1 = summarize_ns(*result.phase1, cfg.truth);
    }
    result.summary3 = posterior_summary(result.phase3, cfg.prior);
    rep.phase3 = summarize_ns(result.phase3, cfg.truth);

    rep.estimation_rmse_mean = estimation_rmse(result.phase3, cfg.truth);
    rep.estimation_rmse_map = rmse(rep.phase3.map_point, cfg.truth.theta_star);

    rep.sim_calls_requested = cache.requested();
    rep.sim_calls_computed = cache.computed();
  } catch (const std::exception& e) {
    rep.incomplete = true;
    rep.error = e.what();
    rep.sim_calls_requested = cache.requested();
    rep.sim_calls_computed = cache.computed();
  }
  return result;
}

std::vector<SweepRow> eta_sweep(const ExperimentConfig& cfg, const std::vector<int>& etas,
                                const std::vector<SampleScheme>& schemes) {
  if (etas.empty() || schemes.empty()) throw ConfigError("eta_sweep: empty grid");
  struct Cell {
    SampleScheme scheme;
    int eta;
  };
  std::vector<Cell> cells;
  for (SampleScheme s : schemes)
    for (int eta : etas) cells.push_back({s, eta});

  std::vector<SweepRow> rows(cells.size());
  kernels::parallel_for(static_cast<int>(cells.size()), [&](int i) {
    SweepRow& row = rows[i];
    row.scheme = cells[i].scheme;
    row.eta = cells[i].eta;
    try {
      ExperimentConfig cell_cfg = cfg;
      cell_cfg.scheme = cells[i].scheme;
      cell_cfg.train.complexity_eta = cells[i].eta;
      const PipelineResult r = run_pipeline(cell_cfg);
      if (r.report.incomplete) throw SamplingError(r.report.error);
      row.mean_rmse = r.report.cv_mean_rmse;
      row.mean_pearson = r.report.cv_mean_pearson;
      row.estimation_rmse = r.report.estimation_rmse_mean;
      row.ok = true;
    } catch (const std::exception& e) {
      row.ok = false;
      row.error = e.what();
    }
  });
  return rows;
}

std::vector<CurveRow> learning_curve(const ExperimentConfig& cfg, const std::vector<int>& sizes) {
  if (sizes.empty()) throw ConfigError("learning_curve: empty size list");
  for (std::size_t i = 1; i < sizes.size(); ++i)
    if (sizes[i] <= sizes[i - 1]) throw ConfigError("learning_curve: sizes must be ascending");

  // One master dataset; each size trains on a nested prefix.
  ExperimentConfig master_cfg = cfg;
  master_cfg.n_train = sizes.back();
  master_cfg.validate();
  const Simulator sim =
      make_simulator(cfg.simulator_name, cfg.time_steps, cfg.delay_per_call, cfg.toy);
  SimCache cache(sim);
  Rng obs_rng(seed_for(cfg.seed, "obs"));
  const ObservedData obs = make_observation(sim.run(cfg.truth.theta_star), cfg.noise_frac, obs_rng);
  const CollectResult master = collect_training_data(master_cfg, cache, obs);

  // Interleave source tags so every nested prefix keeps the scheme's mix
  // (collection appends design points before posterior points).
  std::vector<int> lhc_idx, post_idx, order;
  for (int i = 0; i < master.data.size(); ++i)
    (master.data.tags[i] == SampleSource::Lhc ? lhc_idx : post_idx).push_back(i);
  std::size_t a = 0, b = 0;
  while (a < lhc_idx.size() || b < post_idx.size()) {
    if (a < lhc_idx.size()) order.push_back(lhc_idx[a++]);
    if (b < post_idx.size()) order.push_back(post_idx[b++]);
  }

  std::vector<CurveRow> rows;
  const TrainerFn trainer = make_trainer(ModelKind::Drn, cfg.train);
  for (int size : sizes) {
    const std::vector<int> prefix(order.begin(), order.begin() + size);
    const TrainingSet data = master.data.subset(prefix);
    const auto details =
        kfold_cv_detail(data, cfg.k_folds, trainer, seed_for(cfg.seed, "curve/" + std::to_string(size)));
    std::vector<double> tr_r, te_r, tr_p, te_p;
    for (const auto& d : details) {
      tr_r.push_back(d.train.rmse);
      te_r.push_back(d.test.rmse);
      tr_p.push_back(d.train.pearson);
      te_p.push_back(d.test.pearson);
    }
    CurveRow row;
    row.size = size;
    row.train_rmse_mean = mean_of(tr_r);
    row.train_rmse_2std = 2.0 * std_of(tr_r);
    row.test_rmse_mean = mean_of(te_r);
    row.test_rmse_2std = 2.0 * std_of(te_r);
    row.train_pearson_mean = mean_of(tr_p);
    row.train_pearson_2std = 2.0 * std_of(tr_p);
    row.test_pearson_mean = mean_of(te_p);
    row.test_pearson_2std = 2.0 * std_of(te_p);
    rows.push_back(row);
  }
  return rows;
}

void write_metrics_csv(const std::vector<MetricPair>& folds, const std::string& path) {
  auto out = open_out(path);
  out << "fold,rmse,pearson\n";
  for (std::size_t f = 0; f < folds.size(); ++f)
    out << f << "," << fmt17(folds[f].rmse) << "," << fmt17(folds[f].pearson) << "\n";
}

void write_samples_csv(const NestedRunResult* result, int dim, const std::string& path) {
  auto out = open_out(path);
  for (int j = 1; j <= dim; ++j) out << "theta_" << j << ",";
  out << "log_like,importance\n";
  if (!result) return;
  for (const auto& s : result->samples) {
    for (double v : s.theta) out << fmt17(v) << ",";
    out << fmt17(s.log_like) << "," << fmt17(std::exp(s.log_importance)) << "\n";
  }
}

void write_triangle_csv(const std::optional<PosteriorSummary>& phase1,
                        const PosteriorSummary& phase3, const std::string& path) {
  auto out = open_out(path);
  out << "phase,kind,param_i,param_j,bin_i,bin_j,lo_i,hi_i,lo_j,hi_j,weight\n";
  auto emit = [&](const char* phase, const PosteriorSummary& s) {
    for (const auto& h : s.hist1d)
      for (int b = 0; b < kHistBins; ++b)
        out << phase << ",1d," << h.param << ",," << b << ",," << fmt17(h.lo) << ","
            << fmt17(h.hi) << ",,," << fmt17(h.weights[b]) << "\n";
    for (const auto& h : s.hist2d)
      for (int bi = 0; bi < kHistBins; ++bi)
        for (int bj = 0; bj < kHistBins; ++bj) {
          const double w = h.weights[static_cast<std::size_t>(bi) * kHistBins + bj];
          if (w == 0.0) continue;
          out << phase << ",2d," << h.param_i << "," << h.param_j << "," << bi << "," << bj << ","
              << fmt17(h.lo_i) << "," << fmt17(h.hi_i) << "," << fmt17(h.lo_j) << ","
              << fmt17(h.hi_j) << "," << fmt17(w) << "\n";
        }
  };
  if (phase1) emit("phase1", *phase1);
  emit("phase3", phase3);
}

void write_sweep_csv(const std::vector<SweepRow>& rows, const std::string& path) {
  auto out = open_out(path);
  out << "scheme,eta,mean_rmse,mean_pearson,estimation_rmse,ok\n";
  for (const auto& r : rows) {
    out << scheme_name(r.scheme) << "," << r.eta << ",";
    if (r.ok)
      out << fmt17(r.mean_rmse) << "," << fmt17(r.mean_pearson) << ","
          << fmt17(r.estimation_rmse) << ",1\n";
    else
      out << ",,,0\n";
  }
}

void write_curve_csv(const std::vector<CurveRow>& rows, const std::string& path) {
  auto out = open_out(path);
  out << "size,train_rmse_mean,train_rmse_2std,test_rmse_mean,test_rmse_2std,"
         "train_pearson_mean,train_pearson_2std,test_pearson_mean,test_pearson_2std\n";
  for (const auto& r : rows)
    out << r.size << "," << fmt17(r.train_rmse_mean) << "," << fmt17(r.train_rmse_2std) << ","
        << fmt17(r.test_rmse_mean) << "," << fmt17(r.test_rmse_2std) << ","
        << fmt17(r.train_pearson_mean) << "," << fmt17(r.train_pearson_2std) << ","
        << fmt17(r.test_pearson_mean) << "," << fmt17(r.test_pearson_2std) << "\n";
}

namespace {

nlohmann::json ns_report_json(const NsReport& r) {
  return {{"log_evidence", r.log_evidence},
          {"information_nats", r.information_nats},
          {"iterations", r.iterations},
          {"n_like_evals", r.n_like_evals},
          {"wall_seconds", r.wall_seconds},
          {"converged", r.converged},
          {"posterior_mean", r.mean},
          {"map_point", r.map_point}};
}

}  // namespace

void write_report_json(const PipelineReport& report, const nlohmann::json& resolved_config,
                       const std::string& path) {
  nlohmann::json j;
  j["config"] = resolved_config;
  j["folds"] = nlohmann::json::array();
  for (std::size_t f = 0; f < report.fold_metrics.size(); ++f)
    j["folds"].push_back({{"fold", f},
                          {"rmse", report.fold_metrics[f].rmse},
                          {"pearson", report.fold_metrics[f].pearson}});
  j["cv_mean_rmse"] = report.cv_mean_rmse;
  j["cv_mean_pearson"] = report.cv_mean_pearson;
  j["estimation_rmse"] = report.estimation_rmse_mean;
  j["estimation_rmse_map"] = report.estimation_rmse_map;
  j["phase1"] = report.phase1 ? ns_report_json(*report.phase1) : nlohmann::json(nullptr);
  j["phase3"] = ns_report_json(report.phase3);
  j["timing"] = {{"prep_seconds", report.prep_seconds},
                 {"cv_seconds", report.cv_seconds},
                 {"train_seconds", report.train_seconds},
                 {"exec_seconds", report.exec_seconds}};
  j["sim_calls"] = {{"requested", report.sim_calls_requested},
                    {"computed", report.sim_calls_computed}};
  j["component_first_epoch_mse"] = report.component_first_epoch_mse;
  j["component_last_epoch_mse"] = report.component_last_epoch_mse;
  j["incomplete"] = report.incomplete;
  if (report.incomplete) j["error"] = report.error;
  auto out = open_out(path);
  out << j.dump(2) << "\n";
}

}  // namespace emucal
