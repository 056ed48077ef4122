#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fedval/core.hpp"
#include "json.hpp"

namespace fedval {

/// Two valuations of the same clients on the halves of a utility split
/// U = U1 + U2 (for instance even and odd rounds).
struct AdditiveSplit {
  Vector first;
  Vector second;
};

/// A valuation together with the constructs planted to test each clause.
struct FairnessSetup {
  Vector values;
  std::vector<std::pair<ClientId, ClientId>> identical_pairs;
  std::vector<ClientId> null_clients;
  std::vector<AdditiveSplit> additive_splits;
};

struct FairnessVerdict {
  double epsilon = 0.0;
  std::optional<double> symmetry_gap;    // max |v(i) - v(j)| over identical pairs
  std::optional<double> zero_gap;        // max v(i) over null clients
  std::optional<double> additivity_gap;  // max |v(i) - v1(i) - v2(i)|

  /// "pass", "fail" or "not tested".
  static std::string clause(const std::optional<double>& gap, double epsilon);
  /// True only when every clause was tested and is within epsilon.
  bool passes() const;
  nlohmann::json to_json() const;
};

FairnessVerdict fairness_check(const FairnessSetup& setup, double epsilon);

/// 4 delta / N, the level a delta-completed factorization guarantees.
double completion_fairness_level(double delta, int num_clients);

}  // namespace fedval
