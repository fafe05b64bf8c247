#pragma once

#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "emucal/core.hpp"
#include "emucal/sampler.hpp"
#include "emucal/simulators.hpp"
#include "emucal/surrogate.hpp"

namespace emucal {

enum class SampleScheme { Lhc, Posterior, Mixed };

std::string scheme_name(SampleScheme s);
SampleScheme scheme_from_name(const std::string& name);

struct ExperimentConfig {
  std::string simulator_name = "toy";
  int time_steps = 10;
  double delay_per_call = 0.0;
  ToyConstants toy;

  PriorSpec prior;
  GroundTruth truth;
  double noise_frac = 0.05;

  SampleScheme scheme = SampleScheme::Mixed;
  int n_train = 2000;
  int k_folds = 10;

  TrainConfig train;
  NsConfig ns_phase1;
  NsConfig ns_phase3;

  std::uint64_t seed = 42;
  bool verbose = false;

  void validate() const;
  // ns seeds left at 0 are derived from the master seed per phase.
  std::uint64_t phase1_seed() const;
  std::uint64_t phase3_seed() const;
};

// Memoizing, counting front-end to a simulator. Requests hitting the cache
// cost nothing; misses pay the configured delay. Safe for concurrent callers.
class SimCache {
 public:
  explicit SimCache(const Simulator& sim) : sim_(sim) {}

  OutputSeries call(const ParamVector& theta);

  long requested() const { return requested_; }
  long computed() const { return computed_; }

 private:
  const Simulator& sim_;
  std::map<ParamVector, OutputSeries> cache_;
  mutable std::mutex mu_;
  long requested_ = 0;
  long computed_ = 0;
};

struct CollectResult {
  TrainingSet data;
  std::optional<NestedRunResult> phase1;  // present when scheme != lhc
  double seconds = 0.0;
};

// Phase-1 data collection under the configured scheme. The observation must
// already be fixed; simulator outputs are attached through the cache.
CollectResult collect_training_data(const ExperimentConfig& cfg, SimCache& sim,
                                    const ObservedData& obs);

using PredictorFn = std::function<OutputSeries(const ParamVector&)>;
// Trains on the given records with the given seed; returns a frozen predictor.
using TrainerFn = std::function<PredictorFn(const TrainingSet&, std::uint64_t)>;

enum class ModelKind { Drn, NcDnn, StdRnn };
TrainerFn make_trainer(ModelKind kind, const TrainConfig& cfg);

struct CvFoldDetail {
  MetricPair test;
  MetricPair train;
};

// Seeded shuffle into k near-equal folds; per fold, metrics on the flattened
// held-out (and training) predictions vs. true outputs. Folds run on the
// worker pool; per-fold seeds are derived, so results do not depend on the
// thread count.
std::vector<CvFoldDetail> kfold_cv_detail(const TrainingSet& data, int k, const TrainerFn& trainer,
                                          std::uint64_t seed);
std::vector<MetricPair> kfold_cv(const TrainingSet& data, int k, const TrainerFn& trainer,
                                 std::uint64_t seed);

ParamVector posterior_mean(const NestedRunResult& result);

// RMSE between the importance-weighted posterior mean and the ground truth.
double estimation_rmse(const NestedRunResult& result, const GroundTruth& truth);

struct NsReport {
  double log_evidence = 0.0;
  double information_nats = 0.0;
  int iterations = 0;
  long n_like_evals = 0;
  double wall_seconds = 0.0;
  bool converged = true;
  ParamVector mean;
  ParamVector map_point;
};

struct PipelineReport {
  std::vector<MetricPair> fold_metrics;
  double cv_mean_rmse = 0.0;
  double cv_mean_pearson = 0.0;
  double estimation_rmse_mean = 0.0;  // against the posterior mean
  double estimation_rmse_map = 0.0;   // against the max-likelihood sample

  std::optional<NsReport> phase1;
  NsReport phase3;

  // Timing ledger (Table-2 shape): prep = data collection including any
  // Phase-1 sampling, train = final surrogate training, exec = Phase-3
  // sampling on the surrogate.
  double prep_seconds = 0.0;
  double cv_seconds = 0.0;
  double train_seconds = 0.0;
  double exec_seconds = 0.0;

  long sim_calls_requested = 0;
  long sim_calls_computed = 0;

  std::vector<double> component_first_epoch_mse;
  std::vector<double> component_last_epoch_mse;

  bool incomplete = false;
  std::string error;
};

struct PipelineResult {
  PipelineReport report;
  DrnSurrogate model;
  std::optional<NestedRunResult> phase1;
  NestedRunResult phase3;
  std::optional<PosteriorSummary> summary1;
  PosteriorSummary summary3;
};

PipelineResult run_pipeline(const ExperimentConfig& cfg);

struct SweepRow {
  SampleScheme scheme;
  int eta = 0;
  double mean_rmse = 0.0;
  double mean_pearson = 0.0;
  double estimation_rmse = 0.0;
  bool ok = false;
  std::string error;
};

// Full factorial run over (scheme, eta) with shared observation and seeds.
std::vector<SweepRow> eta_sweep(const ExperimentConfig& cfg, const std::vector<int>& etas,
                                const std::vector<SampleScheme>& schemes);

struct CurveRow {
  int size = 0;
  double train_rmse_mean = 0.0, train_rmse_2std = 0.0;
  double test_rmse_mean = 0.0, test_rmse_2std = 0.0;
  double train_pearson_mean = 0.0, train_pearson_2std = 0.0;
  double test_pearson_mean = 0.0, test_pearson_2std = 0.0;
};

// CV metrics on nested prefixes of one master dataset, per requested size.
std::vector<CurveRow> learning_curve(const ExperimentConfig& cfg, const std::vector<int>& sizes);

// Artifact writers. All CSV files carry a header row; numbers are written
// with 17 significant digits.
void write_metrics_csv(const std::vector<MetricPair>& folds, const std::string& path);
void write_samples_csv(const NestedRunResult* result, int dim, const std::string& path);
void write_triangle_csv(const std::optional<PosteriorSummary>& phase1,
                        const PosteriorSummary& phase3, const std::string& path);
void write_sweep_csv(const std::vector<SweepRow>& rows, const std::string& path);
void write_curve_csv(const std::vector<CurveRow>& rows, const std::string& path);
void write_report_json(const PipelineReport& report, const nlohmann::json& resolved_config,
                       const std::string& path);

}  // namespace emucal
