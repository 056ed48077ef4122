#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "fedval/completion.hpp"
#include "fedval/dataset.hpp"
#include "fedval/fedavg.hpp"
#include "fedval/objective.hpp"
#include "fedval/valuation.hpp"
#include "json.hpp"

namespace fedval {

enum class ExperimentKind { pipeline, fairness, noisy_data, noisy_label, rank_study, timing };

ExperimentKind parse_experiment_kind(const std::string& name);
std::string to_string(ExperimentKind kind);

struct DataConfig {
  enum class Source { synthetic, csv };

  Source source = Source::synthetic;
  SyntheticSpec synthetic;  // num_clients and seed are taken from the experiment
  std::string csv_path;
  Partition partition = Partition::iid;
  double test_fraction = 0.2;
  /// (target, source): target's data is replaced by a copy of source's.
  std::optional<std::pair<ClientId, ClientId>> duplicate;
  std::vector<double> feature_noise;  // per-client fraction of noisy rows
  double noise_sigma = 1.0;
  std::set<ClientId> label_noise_clients;
  double flip_fraction = 0.3;
};

/// Which estimator a run uses. `auto_select` picks exact enumeration when N
/// is small and permutation sampling otherwise.
enum class Estimator { auto_select, exact, monte_carlo };

inline CompletionConfig automatic_rank() {
  CompletionConfig c;
  c.rank = 0;
  return c;
}

/// Step size and local steps under which the default synthetic data trains
/// stably (the estimated smoothness constant is around 50).
inline FedConfig default_fed() {
  FedConfig f;
  f.schedule = LearningRateSchedule::constant(0.02);
  f.local_steps = 10;
  return f;
}

struct ExperimentConfig {
  ExperimentKind experiment = ExperimentKind::pipeline;
  std::uint64_t seed = 0;
  std::string output_dir = "runs/latest";
  int trials = 1;
  int M = 0;  // permutations; 0 selects ceil(N ln N)
  FedConfig fed = default_fed();
  ObjectiveKind objective = ObjectiveKind::logistic_regression;
  double objective_mu = 0.01;
  CompletionConfig completion = automatic_rank();  // rank 0 selects the rank automatically
  DataConfig data;
  Estimator fedsv = Estimator::auto_select;
  Estimator comfedsv = Estimator::monte_carlo;
  // Preset grids.
  std::vector<int> participation_percent{10, 20, 30, 40, 50};
  std::vector<int> n_grid{10, 20, 30};
  double participation_rate = 0.3;
  std::vector<int> ranks{1, 2, 3, 4, 5, 6, 8, 10};
  std::vector<double> epsilon_grid{0.01, 0.03, 0.1, 0.3, 1.0};  // fractions of max |U|

  /// Every field, defaults included.
  nlohmann::json to_json() const;
  /// Unknown keys are ConfigErrors so that typos do not silently fall back to
  /// defaults.
  static ExperimentConfig from_json(const nlohmann::json& doc);
  void validate() const;

  int permutations() const { return M > 0 ? M : default_permutation_count(fed.num_clients); }
};

/// Applies the keys present in `doc` on top of `base`.
ExperimentConfig from_json_onto(const nlohmann::json& doc, ExperimentConfig base);

ExperimentConfig load_config(const std::string& path);

/// Default configuration of a named preset.
ExperimentConfig preset_defaults(ExperimentKind kind);

struct PreparedData {
  std::vector<ClientDataset> clients;
  ClientDataset test;
  LocalObjective objective;
};

PreparedData prepare_data(const ExperimentConfig& config);

struct PipelineResult {
  TrainingTrace trace;
  UtilityMatrix observed;
  FactorPair factors;
  ValuationReport fedsv;
  ValuationReport comfedsv;
  std::optional<ValuationReport> ground_truth;
  std::optional<double> delta;
  nlohmann::json analysis;
  std::size_t fedsv_calls = 0;
  std::size_t comfedsv_calls = 0;
  double fedsv_seconds = 0;
  double comfedsv_seconds = 0;
};

struct PipelineOptions {
  bool write_artifacts = true;
  bool analysis = true;
};

/// Algorithm 1 end to end: sample permutations, run FedAvg with a full first
/// round, record the prefix utilities each round can observe, complete the
/// reduced matrix and estimate ComFedSV; FedSV and (in oracle mode) the ground
/// truth are computed alongside. Failures are rethrown prefixed with the
/// stage that raised them.
PipelineResult run_pipeline(const ExperimentConfig& config, const PipelineOptions& options = {});

/// Runs the preset named by config.experiment and writes its tables into
/// config.output_dir. Returns a small summary.
nlohmann::json run_preset(const ExperimentConfig& config);

}  // namespace fedval
