#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "fedval/coalition.hpp"
#include "fedval/core.hpp"
#include "fedval/dataset.hpp"
#include "fedval/fedavg.hpp"
#include "fedval/objective.hpp"

namespace fedval {

/// Evaluates per-round coalition utilities
///   U_t(S) = l(w^t; D_c) - l(mean_{k in S} w_k^{t+1}; D_c),  U_t({}) = 0
/// over a finished trace, counting every loss evaluation it performs.
class UtilityEvaluator {
 public:
  UtilityEvaluator(const TrainingTrace& trace, const LocalObjective& objective, const ClientDataset& test_set);

  double operator()(int t, CoalitionKey coalition);

  /// Utility of an explicitly given coalition model (used by incremental
  /// enumerations that maintain running sums of local models).
  double from_model(int t, const Vector& coalition_model);

  std::size_t calls() const { return calls_; }
  void reset_calls() { calls_ = 0; }

  const TrainingTrace& trace() const { return *trace_; }

 private:
  const TrainingTrace* trace_;
  const LocalObjective* objective_;
  const ClientDataset* test_set_;
  std::size_t calls_ = 0;
};

double round_utility(const TrainingTrace& trace, const LocalObjective& objective, const ClientDataset& test_set, int t,
                     CoalitionKey coalition);

struct UtilityEntry {
  int round = 0;
  int column = 0;
  double value = 0.0;
};

/// Sparse rounds x coalitions matrix stored as coordinate triplets. Columns are
/// unique coalition keys; each (round, column) pair holds at most one value.
class UtilityMatrix {
 public:
  UtilityMatrix() = default;
  UtilityMatrix(int rounds, int num_clients);

  int rounds() const { return rounds_; }
  int num_clients() const { return num_clients_; }
  int num_columns() const { return static_cast<int>(columns_.size()); }
  bool is_full() const { return is_full_; }
  void mark_full(bool full) { is_full_ = full; }

  /// Index of `key`, adding a new column if needed.
  int add_column(CoalitionKey key);
  std::optional<int> column_index(CoalitionKey key) const;
  const std::vector<CoalitionKey>& columns() const { return columns_; }

  void set(int t, CoalitionKey key, double value);
  void set_at(int t, int column, double value);
  bool observed(int t, CoalitionKey key) const;
  std::optional<double> get(int t, CoalitionKey key) const;

  const std::vector<UtilityEntry>& entries() const { return entries_; }
  std::size_t num_observed() const { return entries_.size(); }

  /// Dense rounds x columns copy; unobserved cells hold `fill`.
  Matrix dense(double fill = 0.0) const;
  /// 1 where observed, 0 elsewhere.
  Eigen::MatrixXi mask() const;

 private:
  static std::uint64_t cell(int t, int column) {
    return (static_cast<std::uint64_t>(t) << 32) | static_cast<std::uint32_t>(column);
  }

  int rounds_ = 0;
  int num_clients_ = 0;
  bool is_full_ = false;
  std::vector<CoalitionKey> columns_;
  std::unordered_map<CoalitionKey, int> column_of_;
  std::vector<UtilityEntry> entries_;
  std::unordered_map<std::uint64_t, std::size_t> entry_of_;
};

enum class ObservationMode { all_subsets_of_selected, prefix_list };

constexpr int kMaxEnumeratedClients = 20;

/// Records the utilities a run can actually observe: every (t, S) with S a
/// subset of I_t, or the requested prefix coalitions that fit inside I_t.
UtilityMatrix observe_matrix(UtilityEvaluator& evaluator, ObservationMode mode,
                             const std::vector<CoalitionKey>& prefixes = {});

/// Dense T x 2^N matrix from an oracle-mode trace; column index equals the
/// coalition bitmask.
UtilityMatrix full_matrix(UtilityEvaluator& evaluator);

/// Writes utility.csv (round,coalition,value) and columns.json.
void save_utility(const UtilityMatrix& matrix, const std::string& dir);
UtilityMatrix load_utility(const std::string& dir, int rounds, int num_clients);

}  // namespace fedval
