#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fedval/core.hpp"
#include "fedval/dataset.hpp"
#include "fedval/objective.hpp"

namespace fedval {

/// eta^t for 1-based round t: either constant, or 2 / (mu * (gamma + t)).
struct LearningRateSchedule {
  enum class Kind { constant, inverse_decay };

  Kind kind = Kind::constant;
  double eta = 0.1;
  double mu = 0.0;
  double gamma = 1.0;

  static LearningRateSchedule constant(double eta);
  static LearningRateSchedule inverse_decay(double mu, double gamma);

  double rate(int round_one_based) const;
  void validate() const;
};

struct FedConfig {
  int num_clients = 10;
  int rounds = 10;
  int clients_per_round = 3;
  LearningRateSchedule schedule = LearningRateSchedule::constant(0.1);
  std::uint64_t seed = 0;
  bool oracle_mode = false;
  bool first_round_full = true;
  int local_steps = 1;

  void validate() const;
};

/// Everything a FedAvg run leaves behind. Rounds are 0-based: round t starts
/// from global_models[t], uses learning_rates[t], and aggregates the models of
/// selections[t] into global_models[t + 1].
struct TrainingTrace {
  int num_clients = 0;
  bool oracle_mode = false;
  std::vector<Vector> global_models;                  // T + 1 entries
  std::vector<std::map<ClientId, Vector>> local_models;  // per round
  std::vector<std::vector<ClientId>> selections;      // ascending ids
  std::vector<double> learning_rates;
  std::vector<double> test_losses;                    // loss of global_models[t] on the test set

  int rounds() const { return static_cast<int>(selections.size()); }

  /// Local model of client `i` after round `t`; throws naming (t, i) if absent.
  const Vector& local_model(int t, ClientId i) const;
  bool has_local_model(int t, ClientId i) const;
};

/// One deterministic full-gradient step (or `steps` of them) from `w`.
Vector local_update(const Vector& w, const LocalObjective& objective, const ClientDataset& data, double eta,
                    int steps = 1);

/// Uniform K-subset of {0..n-1} via a Fisher-Yates prefix, returned sorted.
std::vector<ClientId> sample_clients(int n, int k, Rng& rng);

TrainingTrace run_fedavg(const FedConfig& config, const std::vector<ClientDataset>& datasets,
                         const LocalObjective& objective, const ClientDataset& test_set,
                         std::optional<Vector> initial = std::nullopt);

/// Writes trace.json plus one CSV per stored model (w_{t}_{i}.csv for local
/// models, w_{t}_global.csv for global ones).
void save_trace(const TrainingTrace& trace, const std::string& dir);
TrainingTrace load_trace(const std::string& dir);

}  // namespace fedval
