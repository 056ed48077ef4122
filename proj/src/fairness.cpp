#include "fedval/fairness.hpp"

#include <algorithm>
#include <cmath>

namespace fedval {

std::string FairnessVerdict::clause(const std::optional<double>& gap, double epsilon) {
  if (!gap) return "not tested";
  return *gap <= epsilon ? "pass" : "fail";
}

bool FairnessVerdict::passes() const {
  return clause(symmetry_gap, epsilon) == "pass" && clause(zero_gap, epsilon) == "pass" &&
         clause(additivity_gap, epsilon) == "pass";
}

nlohmann::json FairnessVerdict::to_json() const {
  auto gap = [](const std::optional<double>& g) { return g ? nlohmann::json(*g) : nlohmann::json(nullptr); };
  return {{"epsilon", epsilon},
          {"symmetry", {{"gap", gap(symmetry_gap)}, {"status", clause(symmetry_gap, epsilon)}}},
          {"zero_element", {{"gap", gap(zero_gap)}, {"status", clause(zero_gap, epsilon)}}},
          {"additivity", {{"gap", gap(additivity_gap)}, {"status", clause(additivity_gap, epsilon)}}},
          {"passes", passes()}};
}

FairnessVerdict fairness_check(const FairnessSetup& setup, double epsilon) {
  require(epsilon >= 0.0, "epsilon must be >= 0");
  const Eigen::Index n = setup.values.size();
  auto in_range = [n](ClientId i) { return i >= 0 && i < n; };
  FairnessVerdict verdict;
  verdict.epsilon = epsilon;
  for (const auto& [i, j] : setup.identical_pairs) {
    require(in_range(i) && in_range(j), "identical pair names an unknown client");
    const double gap = std::abs(setup.values[i] - setup.values[j]);
    verdict.symmetry_gap = std::max(verdict.symmetry_gap.value_or(gap), gap);
  }
  for (ClientId i : setup.null_clients) {
    require(in_range(i), "null client id out of range");
    verdict.zero_gap = std::max(verdict.zero_gap.value_or(setup.values[i]), setup.values[i]);
  }
  for (const auto& split : setup.additive_splits) {
    require(split.first.size() == n && split.second.size() == n, "additive split has the wrong length");
    const double gap = (setup.values - split.first - split.second).cwiseAbs().maxCoeff();
    verdict.additivity_gap = std::max(verdict.additivity_gap.value_or(gap), gap);
  }
  return verdict;
}

double completion_fairness_level(double delta, int num_clients) {
  require(num_clients >= 1, "need at least one client");
  return 4.0 * delta / num_clients;
}

}  // namespace fedval
