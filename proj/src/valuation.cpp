#include "fedval/valuation.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "fedval/shapley.hpp"

namespace fedval {

using nlohmann::json;

std::string to_string(ValuationMethod method) {
  switch (method) {
    case ValuationMethod::classic_shapley: return "classic_shapley";
    case ValuationMethod::fedsv: return "fedsv";
    case ValuationMethod::fedsv_mc: return "fedsv_mc";
    case ValuationMethod::comfedsv_exact: return "comfedsv_exact";
    case ValuationMethod::comfedsv_mc: return "comfedsv_mc";
    case ValuationMethod::ground_truth: return "ground_truth";
  }
  return "unknown";
}

json ValuationReport::to_json() const {
  json out;
  out["method"] = to_string(method);
  json vals = json::array();
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    json entry{{"client", i}, {"value", values[i]}};
    if (standard_errors) entry["standard_error"] = (*standard_errors)[i];
    vals.push_back(entry);
  }
  out["values"] = vals;
  out["diagnostics"] = diagnostics;
  if (per_round_values) {
    json rows = json::array();
    for (Eigen::Index t = 0; t < per_round_values->rows(); ++t) {
      std::vector<double> row(static_cast<std::size_t>(per_round_values->cols()));
      for (Eigen::Index i = 0; i < per_round_values->cols(); ++i) row[static_cast<std::size_t>(i)] = (*per_round_values)(t, i);
      rows.push_back(row);
    }
    out["per_round_values"] = rows;
  }
  return out;
}

void ValuationReport::save(const std::string& dir) const {
  std::filesystem::create_directories(dir);
  const auto path = std::filesystem::path(dir) / ("valuation_" + to_string(method) + ".json");
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << to_json().dump(2) << '\n';
}

namespace {

// Shapley values of the members of `selected` under a utility known on the
// local subset lattice: local_values[m] is U of the members picked by mask m.
Vector local_shapley(const Vector& local_values, int k) { return classic_shapley(local_values, k, 1.0 / k); }

CoalitionKey to_global(std::uint64_t local_mask, const std::vector<ClientId>& members) {
  std::uint64_t mask = 0;
  for (std::size_t b = 0; b < members.size(); ++b)
    if ((local_mask >> b) & 1u) mask |= std::uint64_t{1} << members[b];
  return CoalitionKey(mask);
}

}  // namespace

ValuationReport fedsv(const UtilityMatrix& matrix, const std::vector<std::vector<ClientId>>& selections) {
  require(static_cast<int>(selections.size()) == matrix.rounds(), "selections and matrix rounds disagree");
  const int n = matrix.num_clients();
  const int rounds = matrix.rounds();
  Matrix per_round = Matrix::Zero(rounds, n);
  std::vector<std::string> missing;

  for (int t = 0; t < rounds; ++t) {
    const auto& members = selections[static_cast<std::size_t>(t)];
    const int k = static_cast<int>(members.size());
    if (k == 0) continue;
    require(k <= kMaxEnumeratedClients, "FedSV enumeration needs |I_t| <= 20");
    const std::uint64_t count = std::uint64_t{1} << k;
    Vector local(static_cast<Eigen::Index>(count));
    for (std::uint64_t m = 0; m < count; ++m) {
      const CoalitionKey key = to_global(m, members);
      if (key.is_empty()) {
        local[static_cast<Eigen::Index>(m)] = matrix.get(t, key).value_or(0.0);
        continue;
      }
      auto v = matrix.get(t, key);
      if (!v) {
        if (missing.size() < 20) missing.push_back("(" + std::to_string(t) + ", " + key.hex() + ")");
        continue;
      }
      local[static_cast<Eigen::Index>(m)] = *v;
    }
    if (!missing.empty()) continue;
    const Vector s = local_shapley(local, k);
    for (int b = 0; b < k; ++b) per_round(t, members[static_cast<std::size_t>(b)]) = s[b];
  }
  if (!missing.empty()) {
    std::ostringstream msg;
    msg << "FedSV needs every subset of I_t; missing (round, coalition):";
    for (const auto& m : missing) msg << ' ' << m;
    throw ConfigError(msg.str());
  }

  ValuationReport report;
  report.method = ValuationMethod::fedsv;
  report.values = per_round.colwise().sum().transpose();
  report.per_round_values = std::move(per_round);
  report.diagnostics = {{"prefactor", "1/|I_t| per round"}, {"rounds", rounds}};
  return report;
}

int default_permutation_count(int n) {
  if (n <= 1) return 1;
  return std::max(1, static_cast<int>(std::ceil(static_cast<double>(n) * std::log(static_cast<double>(n)) - 1e-12)));
}

ValuationReport fedsv_mc(UtilityEvaluator& evaluator, std::uint64_t seed) {
  const TrainingTrace& trace = evaluator.trace();
  const int n = trace.num_clients;
  Matrix per_round = Matrix::Zero(trace.rounds(), n);
  const std::size_t calls_before = evaluator.calls();
  std::size_t permutations_used = 0;

  for (int t = 0; t < trace.rounds(); ++t) {
    const auto& members = trace.selections[static_cast<std::size_t>(t)];
    const int k = static_cast<int>(members.size());
    if (k == 0) continue;
    const int m_count = default_permutation_count(k);
    permutations_used += static_cast<std::size_t>(m_count);
    Rng rng = make_rng(seed, 0x46450000u + static_cast<std::uint64_t>(t));
    std::unordered_map<CoalitionKey, double> cache;
    auto utility = [&](CoalitionKey s) {
      auto it = cache.find(s);
      if (it != cache.end()) return it->second;
      const double v = evaluator(t, s);
      cache.emplace(s, v);
      return v;
    };
    std::vector<ClientId> order = members;
    for (int m = 0; m < m_count; ++m) {
      std::shuffle(order.begin(), order.end(), rng);
      CoalitionKey prefix;
      double before = 0.0;
      for (ClientId i : order) {
        const CoalitionKey next = prefix.with(i);
        const double after = utility(next);
        per_round(t, i) += after - before;
        prefix = next;
        before = after;
      }
    }
    per_round.row(t) /= static_cast<double>(m_count);
  }

  ValuationReport report;
  report.method = ValuationMethod::fedsv_mc;
  report.values = per_round.colwise().sum().transpose();
  report.per_round_values = std::move(per_round);
  report.diagnostics = {{"prefactor", "1/|I_t| per round"},
                        {"permutations_per_round", "ceil(K ln K)"},
                        {"permutations_total", permutations_used},
                        {"utility_calls", evaluator.calls() - calls_before},
                        {"seed", seed}};
  return report;
}

PermutationSample make_sample(int num_clients, std::vector<std::vector<ClientId>> permutations) {
  require(num_clients >= 1 && num_clients <= CoalitionKey::kMaxClients, "unsupported client count");
  require(!permutations.empty(), "permutation sample needs M >= 1");
  PermutationSample sample;
  sample.num_clients = num_clients;
  for (const auto& perm : permutations) {
    require(static_cast<int>(perm.size()) == num_clients, "permutation has the wrong length");
    std::vector<CoalitionKey> prefixes(static_cast<std::size_t>(num_clients));
    CoalitionKey prefix;
    for (ClientId i : perm) {
      require(i >= 0 && i < num_clients && !prefix.contains(i), "not a permutation of the clients");
      prefixes[static_cast<std::size_t>(i)] = prefix;
      prefix = prefix.with(i);
    }
    sample.prefix_index.push_back(std::move(prefixes));
  }
  sample.permutations = std::move(permutations);
  return sample;
}

PermutationSample sample_permutations(int num_clients, int count, std::uint64_t seed) {
  require(count >= 1, "permutation sample needs M >= 1");
  Rng rng = make_rng(seed, 0x5045524d);
  std::vector<std::vector<ClientId>> perms;
  perms.reserve(static_cast<std::size_t>(count));
  std::vector<ClientId> base(static_cast<std::size_t>(num_clients));
  std::iota(base.begin(), base.end(), 0);
  for (int m = 0; m < count; ++m) {
    std::vector<ClientId> perm = base;
    std::shuffle(perm.begin(), perm.end(), rng);
    perms.push_back(std::move(perm));
  }
  return make_sample(num_clients, std::move(perms));
}

PermutationSample all_permutations(int num_clients) {
  require(num_clients >= 1 && num_clients <= 8, "exhaustive permutations limited to N <= 8");
  std::vector<ClientId> perm(static_cast<std::size_t>(num_clients));
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<std::vector<ClientId>> perms;
  do {
    perms.push_back(perm);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return make_sample(num_clients, std::move(perms));
}

std::vector<CoalitionKey> PermutationSample::coalitions() const {
  std::vector<CoalitionKey> out;
  std::unordered_set<CoalitionKey> seen;
  for (const auto& perm : permutations) {
    CoalitionKey prefix;
    if (seen.insert(prefix).second) out.push_back(prefix);
    for (ClientId i : perm) {
      prefix = prefix.with(i);
      if (seen.insert(prefix).second) out.push_back(prefix);
    }
  }
  return out;
}

namespace {

// Row t of W summed over rounds: sum_t w_t . h_S = h_S . w_total.
Vector total_round_factor(const FactorPair& factors) { return factors.W.colwise().sum().transpose(); }

}  // namespace

ValuationReport comfedsv_exact(const FactorPair& factors, int num_clients) {
  require(num_clients >= 1 && num_clients <= 15, "exact ComFedSV limited to N <= 15");
  const Vector w_total = total_round_factor(factors);
  const std::uint64_t count = std::uint64_t{1} << num_clients;
  Vector set_values(static_cast<Eigen::Index>(count));
  for (std::uint64_t m = 0; m < count; ++m) {
    const auto row = factors.row_of(CoalitionKey(m));
    if (!row) throw ConfigError("exact ComFedSV needs an H row for every coalition; missing " + CoalitionKey(m).hex());
    set_values[static_cast<Eigen::Index>(m)] = factors.H.row(*row).dot(w_total);
  }
  ValuationReport report;
  report.method = ValuationMethod::comfedsv_exact;
  report.values = classic_shapley(set_values, num_clients, 1.0 / num_clients);
  report.diagnostics = {{"prefactor", "1/N"}, {"rank", factors.W.cols()}};
  return report;
}

ValuationReport comfedsv_mc(const FactorPair& factors, const PermutationSample& sample) {
  const int n = sample.num_clients;
  const int m_count = sample.size();
  require(m_count >= 1, "permutation sample is empty");
  const Vector w_total = total_round_factor(factors);
  std::unordered_map<CoalitionKey, double> completed;
  auto utility = [&](CoalitionKey s) {
    auto it = completed.find(s);
    if (it != completed.end()) return it->second;
    const auto row = factors.row_of(s);
    if (!row) throw ConfigError("factor H has no row for sampled coalition " + s.hex());
    const double v = factors.H.row(*row).dot(w_total);
    completed.emplace(s, v);
    return v;
  };

  Matrix contributions(m_count, n);
  for (int m = 0; m < m_count; ++m)
    for (ClientId i = 0; i < n; ++i) {
      const CoalitionKey prefix = sample.prefix_index[static_cast<std::size_t>(m)][static_cast<std::size_t>(i)];
      contributions(m, i) = utility(prefix.with(i)) - utility(prefix);
    }

  ValuationReport report;
  report.method = ValuationMethod::comfedsv_mc;
  report.values = contributions.colwise().mean().transpose();
  Vector se = Vector::Zero(n);
  if (m_count > 1) {
    const Matrix centered = contributions.rowwise() - report.values.transpose();
    se = (centered.colwise().squaredNorm().transpose() / static_cast<double>(m_count - 1)).cwiseSqrt() /
         std::sqrt(static_cast<double>(m_count));
  }
  report.standard_errors = se;
  report.diagnostics = {{"prefactor", "permutation expectation (equals the 1/N-weighted subset sum)"},
                        {"M", m_count},
                        {"rank", factors.W.cols()}};
  return report;
}

ValuationReport ground_truth(const UtilityMatrix& full) {
  require(full.is_full(), "ground truth needs the fully observed utility matrix");
  const int n = full.num_clients();
  require(n <= kMaxEnumeratedClients, "ground truth limited to N <= 20");
  const std::uint64_t count = std::uint64_t{1} << n;
  Vector set_values = Vector::Zero(static_cast<Eigen::Index>(count));
  std::vector<char> seen(static_cast<std::size_t>(count) * static_cast<std::size_t>(full.rounds()), 0);
  for (const auto& e : full.entries()) {
    const std::uint64_t m = full.columns()[static_cast<std::size_t>(e.column)].mask();
    set_values[static_cast<Eigen::Index>(m)] += e.value;
    seen[static_cast<std::size_t>(m) * static_cast<std::size_t>(full.rounds()) + static_cast<std::size_t>(e.round)] = 1;
  }
  require(std::all_of(seen.begin(), seen.end(), [](char c) { return c != 0; }),
          "ground truth needs every (round, coalition) entry");
  ValuationReport report;
  report.method = ValuationMethod::ground_truth;
  report.values = classic_shapley(set_values, n, 1.0 / n);
  report.diagnostics = {{"prefactor", "1/N"}, {"rounds", full.rounds()}};
  return report;
}

}  // namespace fedval
