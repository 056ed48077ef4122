#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fedval/coalition.hpp"
#include "fedval/completion.hpp"
#include "fedval/core.hpp"
#include "fedval/utility.hpp"
#include "json.hpp"

namespace fedval {

enum class ValuationMethod { classic_shapley, fedsv, fedsv_mc, comfedsv_exact, comfedsv_mc, ground_truth };

std::string to_string(ValuationMethod method);

struct ValuationReport {
  ValuationMethod method = ValuationMethod::classic_shapley;
  Vector values;
  nlohmann::json diagnostics = nlohmann::json::object();
  std::optional<Matrix> per_round_values;  // rounds x clients
  std::optional<Vector> standard_errors;

  nlohmann::json to_json() const;
  /// Writes valuation_{method}.json into `dir`.
  void save(const std::string& dir) const;
};

/// Per-round Shapley values over the selected clients, summed over rounds;
/// clients outside I_t score 0 in round t. Needs every subset of every I_t.
ValuationReport fedsv(const UtilityMatrix& matrix, const std::vector<std::vector<ClientId>>& selections);

/// FedSV with each round's Shapley values estimated from ceil(K ln K) sampled
/// permutations of I_t, evaluating utilities on demand (each distinct
/// coalition once per round).
ValuationReport fedsv_mc(UtilityEvaluator& evaluator, std::uint64_t seed);

/// ceil(n ln n), at least 1.
int default_permutation_count(int n);

struct PermutationSample {
  int num_clients = 0;
  std::vector<std::vector<ClientId>> permutations;
  /// prefix_index[m][i] = clients preceding i in permutations[m].
  std::vector<std::vector<CoalitionKey>> prefix_index;

  int size() const { return static_cast<int>(permutations.size()); }
  /// Distinct prefixes and prefix-plus-self coalitions in first-appearance
  /// order; these are the columns the reduced completion problem needs.
  std::vector<CoalitionKey> coalitions() const;
};

PermutationSample sample_permutations(int num_clients, int count, std::uint64_t seed);
/// All n! orderings in lexicographic order (n <= 8).
PermutationSample all_permutations(int num_clients);
PermutationSample make_sample(int num_clients, std::vector<std::vector<ClientId>> permutations);

/// (1/N) sum_t sum_{S subset I\{i}} w_t . (h_{S+i} - h_S) / C(N-1, |S|).
ValuationReport comfedsv_exact(const FactorPair& factors, int num_clients);

/// (1/M) sum_m sum_t w_t . (h_{pi_m(i)+i} - h_{pi_m(i)}), with per-client
/// standard errors from the M per-permutation contributions.
ValuationReport comfedsv_mc(const FactorPair& factors, const PermutationSample& sample);

/// ComFedSV computed directly on the entries of a fully observed matrix.
ValuationReport ground_truth(const UtilityMatrix& full);

}  // namespace fedval
