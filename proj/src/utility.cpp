#include "fedval/utility.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"

namespace fedval {

namespace {

bool lexicographic_less(const Vector& a, const Vector& b) {
  return std::lexicographical_compare(a.data(), a.data() + a.size(), b.data(), b.data() + b.size());
}

// Member models are summed in value order rather than id order, so coalitions
// whose members carry identical models get bit-identical means.
Vector coalition_mean(const TrainingTrace& trace, int t, CoalitionKey coalition) {
  std::vector<const Vector*> models;
  models.reserve(static_cast<std::size_t>(coalition.size()));
  for (ClientId i : coalition.members()) models.push_back(&trace.local_model(t, i));
  std::stable_sort(models.begin(), models.end(),
                   [](const Vector* a, const Vector* b) { return lexicographic_less(*a, *b); });
  Vector sum = *models.front();
  for (std::size_t k = 1; k < models.size(); ++k) sum += *models[k];
  return sum / static_cast<double>(models.size());
}

void check_round(const TrainingTrace& trace, int t) {
  require(t >= 0 && t < trace.rounds(), "round " + std::to_string(t) + " outside trace of " +
                                            std::to_string(trace.rounds()) + " rounds");
}

}  // namespace

UtilityEvaluator::UtilityEvaluator(const TrainingTrace& trace, const LocalObjective& objective,
                                   const ClientDataset& test_set)
    : trace_(&trace), objective_(&objective), test_set_(&test_set) {
  require(static_cast<int>(trace.test_losses.size()) == trace.rounds() + 1, "trace is incomplete");
}

double UtilityEvaluator::operator()(int t, CoalitionKey coalition) {
  check_round(*trace_, t);
  if (coalition.is_empty()) return 0.0;
  return from_model(t, coalition_mean(*trace_, t, coalition));
}

double UtilityEvaluator::from_model(int t, const Vector& coalition_model) {
  check_round(*trace_, t);
  ++calls_;
  const double loss = objective_->loss(coalition_model, *test_set_);
  if (!std::isfinite(loss)) throw NumericError("non-finite coalition loss at round " + std::to_string(t));
  return trace_->test_losses[static_cast<std::size_t>(t)] - loss;
}

double round_utility(const TrainingTrace& trace, const LocalObjective& objective, const ClientDataset& test_set, int t,
                     CoalitionKey coalition) {
  UtilityEvaluator eval(trace, objective, test_set);
  return eval(t, coalition);
}

UtilityMatrix::UtilityMatrix(int rounds, int num_clients) : rounds_(rounds), num_clients_(num_clients) {
  require(rounds >= 1, "utility matrix needs at least one round");
  require(num_clients >= 1 && num_clients <= CoalitionKey::kMaxClients, "unsupported client count");
}

int UtilityMatrix::add_column(CoalitionKey key) {
  require(key.subset_of(CoalitionKey::all(num_clients_)), "coalition " + key.hex() + " has unknown members");
  auto [it, inserted] = column_of_.try_emplace(key, static_cast<int>(columns_.size()));
  if (inserted) columns_.push_back(key);
  return it->second;
}

std::optional<int> UtilityMatrix::column_index(CoalitionKey key) const {
  auto it = column_of_.find(key);
  if (it == column_of_.end()) return std::nullopt;
  return it->second;
}

void UtilityMatrix::set(int t, CoalitionKey key, double value) { set_at(t, add_column(key), value); }

void UtilityMatrix::set_at(int t, int column, double value) {
  require(t >= 0 && t < rounds_, "round out of range");
  require(column >= 0 && column < num_columns(), "column out of range");
  auto [it, inserted] = entry_of_.try_emplace(cell(t, column), entries_.size());
  if (inserted)
    entries_.push_back({t, column, value});
  else
    entries_[it->second].value = value;
}

bool UtilityMatrix::observed(int t, CoalitionKey key) const {
  auto c = column_index(key);
  return c && entry_of_.count(cell(t, *c)) > 0;
}

std::optional<double> UtilityMatrix::get(int t, CoalitionKey key) const {
  auto c = column_index(key);
  if (!c) return std::nullopt;
  auto it = entry_of_.find(cell(t, *c));
  if (it == entry_of_.end()) return std::nullopt;
  return entries_[it->second].value;
}

Matrix UtilityMatrix::dense(double fill) const {
  Matrix out = Matrix::Constant(rounds_, num_columns(), fill);
  for (const auto& e : entries_) out(e.round, e.column) = e.value;
  return out;
}

Eigen::MatrixXi UtilityMatrix::mask() const {
  Eigen::MatrixXi out = Eigen::MatrixXi::Zero(rounds_, num_columns());
  for (const auto& e : entries_) out(e.round, e.column) = 1;
  return out;
}

namespace {

template <typename Visit>
void for_each_subset(CoalitionKey set, Visit&& visit) {
  // Enumerates submasks in increasing numeric order.
  const std::uint64_t full = set.mask();
  std::uint64_t sub = 0;
  while (true) {
    visit(CoalitionKey(sub));
    if (sub == full) break;
    sub = (sub - full) & full;
  }
}

}  // namespace

UtilityMatrix observe_matrix(UtilityEvaluator& evaluator, ObservationMode mode,
                             const std::vector<CoalitionKey>& prefixes) {
  const TrainingTrace& trace = evaluator.trace();
  require(trace.rounds() >= 1, "trace has no rounds");
  UtilityMatrix matrix(trace.rounds(), trace.num_clients);

  if (mode == ObservationMode::all_subsets_of_selected) {
    std::set<CoalitionKey> keys;
    for (const auto& sel : trace.selections) {
      require(static_cast<int>(sel.size()) <= kMaxEnumeratedClients,
              "all_subsets observation needs |I_t| <= 20, got " + std::to_string(sel.size()));
      for_each_subset(CoalitionKey::of(sel), [&](CoalitionKey s) { keys.insert(s); });
    }
    for (CoalitionKey k : keys) matrix.add_column(k);
    for (int t = 0; t < trace.rounds(); ++t) {
      for_each_subset(CoalitionKey::of(trace.selections[static_cast<std::size_t>(t)]), [&](CoalitionKey s) {
        matrix.set_at(t, *matrix.column_index(s), evaluator(t, s));
      });
    }
    return matrix;
  }

  for (CoalitionKey k : prefixes) matrix.add_column(k);
  for (int t = 0; t < trace.rounds(); ++t) {
    const CoalitionKey selected = CoalitionKey::of(trace.selections[static_cast<std::size_t>(t)]);
    for (int c = 0; c < matrix.num_columns(); ++c) {
      const CoalitionKey k = matrix.columns()[static_cast<std::size_t>(c)];
      if (k.subset_of(selected)) matrix.set_at(t, c, evaluator(t, k));
    }
  }
  return matrix;
}

UtilityMatrix full_matrix(UtilityEvaluator& evaluator) {
  const TrainingTrace& trace = evaluator.trace();
  require(trace.oracle_mode, "full utility matrix needs an oracle-mode trace");
  require(trace.num_clients <= kMaxEnumeratedClients, "full utility matrix limited to N <= 20");
  UtilityMatrix matrix(trace.rounds(), trace.num_clients);
  const std::uint64_t count = std::uint64_t{1} << trace.num_clients;
  for (std::uint64_t m = 0; m < count; ++m) matrix.add_column(CoalitionKey(m));
  for (int t = 0; t < trace.rounds(); ++t)
    for (std::uint64_t m = 0; m < count; ++m) matrix.set_at(t, static_cast<int>(m), evaluator(t, CoalitionKey(m)));
  matrix.mark_full(true);
  return matrix;
}

void save_utility(const UtilityMatrix& matrix, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::vector<UtilityEntry> sorted = matrix.entries();
  std::sort(sorted.begin(), sorted.end(), [&](const UtilityEntry& a, const UtilityEntry& b) {
    if (a.round != b.round) return a.round < b.round;
    return matrix.columns()[static_cast<std::size_t>(a.column)] < matrix.columns()[static_cast<std::size_t>(b.column)];
  });
  std::ofstream csv(fs::path(dir) / "utility.csv");
  if (!csv) throw ConfigError("cannot write utility.csv in " + dir);
  csv.precision(17);
  csv << "round,coalition,value\n";
  for (const auto& e : sorted)
    csv << e.round << ',' << matrix.columns()[static_cast<std::size_t>(e.column)].hex() << ',' << e.value << '\n';

  nlohmann::json columns = nlohmann::json::object();
  for (CoalitionKey k : matrix.columns()) columns[k.hex()] = k.members();
  std::ofstream js(fs::path(dir) / "columns.json");
  js << columns.dump(2) << '\n';
}

UtilityMatrix load_utility(const std::string& dir, int rounds, int num_clients) {
  namespace fs = std::filesystem;
  std::ifstream csv(fs::path(dir) / "utility.csv");
  if (!csv) throw ConfigError("no utility.csv in " + dir);
  UtilityMatrix matrix(rounds, num_clients);
  std::ifstream js(fs::path(dir) / "columns.json");
  if (js) {
    auto columns = nlohmann::json::parse(js);
    std::vector<CoalitionKey> keys;
    for (auto it = columns.begin(); it != columns.end(); ++it) keys.push_back(CoalitionKey::from_hex(it.key()));
    std::sort(keys.begin(), keys.end());
    for (CoalitionKey k : keys) matrix.add_column(k);
  }
  std::string line;
  std::getline(csv, line);
  require(line == "round,coalition,value", "utility.csv has an unexpected header");
  std::size_t line_no = 1;
  while (std::getline(csv, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string round, key, value;
    if (!std::getline(ss, round, ',') || !std::getline(ss, key, ',') || !std::getline(ss, value))
      throw ConfigError("utility.csv:" + std::to_string(line_no) + ": malformed row");
    try {
      matrix.set(std::stoi(round), CoalitionKey::from_hex(key), std::stod(value));
    } catch (const std::logic_error&) {
      throw ConfigError("utility.csv:" + std::to_string(line_no) + ": malformed row");
    }
  }
  const bool all_columns = num_clients <= kMaxEnumeratedClients &&
                           matrix.num_columns() == (1 << num_clients);
  if (all_columns && matrix.num_observed() == static_cast<std::size_t>(rounds) * (std::size_t{1} << num_clients))
    matrix.mark_full(true);
  return matrix;
}

}  // namespace fedval
