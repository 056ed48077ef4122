#include "fedval/fedavg.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>

#include "json.hpp"

namespace fedval {

using nlohmann::json;

LearningRateSchedule LearningRateSchedule::constant(double eta) {
  LearningRateSchedule s;
  s.kind = Kind::constant;
  s.eta = eta;
  return s;
}

LearningRateSchedule LearningRateSchedule::inverse_decay(double mu, double gamma) {
  LearningRateSchedule s;
  s.kind = Kind::inverse_decay;
  s.mu = mu;
  s.gamma = gamma;
  return s;
}

double LearningRateSchedule::rate(int round_one_based) const {
  if (kind == Kind::constant) return eta;
  return 2.0 / (mu * (gamma + static_cast<double>(round_one_based)));
}

void LearningRateSchedule::validate() const {
  if (kind == Kind::constant) {
    require(eta > 0.0 && std::isfinite(eta), "constant learning rate must be positive");
  } else {
    require(mu > 0.0, "inverse_decay schedule needs mu > 0");
    require(gamma >= 0.0, "inverse_decay schedule needs gamma >= 0");
  }
}

void FedConfig::validate() const {
  require(num_clients >= 1, "FedAvg needs at least one client");
  require(rounds >= 1, "rounds must be >= 1");
  require(clients_per_round >= 1 && clients_per_round <= num_clients, "clients_per_round must lie in [1, N]");
  require(local_steps >= 1, "local_steps must be >= 1");
  require(num_clients <= 62, "at most 62 clients are supported");
  schedule.validate();
}

const Vector& TrainingTrace::local_model(int t, ClientId i) const {
  if (t < 0 || t >= rounds()) throw ConfigError("round " + std::to_string(t) + " outside trace");
  auto it = local_models[static_cast<std::size_t>(t)].find(i);
  if (it == local_models[static_cast<std::size_t>(t)].end())
    throw ConfigError("no local model stored for round " + std::to_string(t) + ", client " + std::to_string(i));
  return it->second;
}

bool TrainingTrace::has_local_model(int t, ClientId i) const {
  return t >= 0 && t < rounds() && local_models[static_cast<std::size_t>(t)].count(i) > 0;
}

Vector local_update(const Vector& w, const LocalObjective& objective, const ClientDataset& data, double eta,
                    int steps) {
  require(eta > 0.0 && std::isfinite(eta), "learning rate must be positive");
  require(steps >= 1, "local_steps must be >= 1");
  Vector out = w;
  for (int s = 0; s < steps; ++s) {
    Vector grad = objective.gradient(out, data);
    if (!grad.allFinite())
      throw NumericError("non-finite gradient on client " + std::to_string(data.client_id));
    out -= eta * grad;
  }
  return out;
}

std::vector<ClientId> sample_clients(int n, int k, Rng& rng) {
  std::vector<ClientId> pool(static_cast<std::size_t>(n));
  std::iota(pool.begin(), pool.end(), 0);
  for (int i = 0; i < k; ++i) {
    std::uniform_int_distribution<int> pick(i, n - 1);
    std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(pick(rng))]);
  }
  pool.resize(static_cast<std::size_t>(k));
  std::sort(pool.begin(), pool.end());
  return pool;
}

TrainingTrace run_fedavg(const FedConfig& config, const std::vector<ClientDataset>& datasets,
                         const LocalObjective& objective, const ClientDataset& test_set, std::optional<Vector> initial) {
  config.validate();
  require(static_cast<int>(datasets.size()) == config.num_clients,
          "config expects " + std::to_string(config.num_clients) + " clients, got " + std::to_string(datasets.size()));
  require(test_set.size() > 0, "test set must be nonempty");
  for (const auto& d : datasets) d.validate();

  const int n = config.num_clients;
  TrainingTrace trace;
  trace.num_clients = n;
  trace.oracle_mode = config.oracle_mode;
  Vector w = initial.value_or(Vector::Zero(objective.num_params()));
  require(w.size() == objective.num_params(), "initial model has the wrong size");

  auto checked_loss = [&](const Vector& model, int round) {
    const double value = objective.loss(model, test_set);
    if (!std::isfinite(value)) throw NumericError("test loss diverged at round " + std::to_string(round));
    return value;
  };

  trace.global_models.push_back(w);
  trace.test_losses.push_back(checked_loss(w, 0));
  Rng rng = make_rng(config.seed, 0x53454c);

  double previous_eta = std::numeric_limits<double>::infinity();
  for (int t = 0; t < config.rounds; ++t) {
    const double eta = config.schedule.rate(t + 1);
    if (!(eta <= previous_eta)) throw ConfigError("learning-rate schedule must be non-increasing");
    previous_eta = eta;

    std::vector<ClientId> selected = (t == 0 && config.first_round_full)
                                         ? sample_clients(n, n, rng)
                                         : sample_clients(n, config.clients_per_round, rng);

    std::map<ClientId, Vector> locals;
    std::vector<char> is_selected(static_cast<std::size_t>(n), 0);
    for (ClientId i : selected) is_selected[static_cast<std::size_t>(i)] = 1;
    for (ClientId i = 0; i < n; ++i) {
      if (!config.oracle_mode && !is_selected[static_cast<std::size_t>(i)]) continue;
      try {
        locals.emplace(i, local_update(w, objective, datasets[static_cast<std::size_t>(i)], eta, config.local_steps));
      } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + " at round " + std::to_string(t));
      }
    }

    Vector next = Vector::Zero(w.size());
    for (ClientId i : selected) next += locals.at(i);
    next /= static_cast<double>(selected.size());

    trace.selections.push_back(std::move(selected));
    trace.local_models.push_back(std::move(locals));
    trace.learning_rates.push_back(eta);
    w = std::move(next);
    trace.global_models.push_back(w);
    trace.test_losses.push_back(checked_loss(w, t + 1));
  }
  return trace;
}

namespace {

void write_vector(const Vector& v, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out.precision(17);
  for (Eigen::Index k = 0; k < v.size(); ++k) out << v[k] << '\n';
}

Vector read_vector(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::vector<double> values;
  double x = 0;
  while (in >> x) values.push_back(x);
  return Eigen::Map<Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

}  // namespace

void save_trace(const TrainingTrace& trace, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  json meta;
  meta["num_clients"] = trace.num_clients;
  meta["rounds"] = trace.rounds();
  meta["oracle_mode"] = trace.oracle_mode;
  meta["selections"] = trace.selections;
  meta["learning_rates"] = trace.learning_rates;
  meta["test_losses"] = trace.test_losses;
  json stored = json::array();
  for (int t = 0; t < trace.rounds(); ++t) {
    std::vector<ClientId> ids;
    for (const auto& [i, model] : trace.local_models[static_cast<std::size_t>(t)]) {
      ids.push_back(i);
      write_vector(model, fs::path(dir) / ("w_" + std::to_string(t) + "_" + std::to_string(i) + ".csv"));
    }
    stored.push_back(ids);
  }
  meta["stored_local_models"] = stored;
  for (std::size_t t = 0; t < trace.global_models.size(); ++t)
    write_vector(trace.global_models[t], fs::path(dir) / ("w_" + std::to_string(t) + "_global.csv"));
  std::ofstream out(fs::path(dir) / "trace.json");
  out << meta.dump(2) << '\n';
}

TrainingTrace load_trace(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream in(fs::path(dir) / "trace.json");
  if (!in) throw ConfigError("no trace.json in " + dir);
  json meta;
  try {
    meta = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("trace.json: ") + e.what());
  }
  TrainingTrace trace;
  trace.num_clients = meta.at("num_clients").get<int>();
  trace.oracle_mode = meta.at("oracle_mode").get<bool>();
  trace.selections = meta.at("selections").get<std::vector<std::vector<ClientId>>>();
  trace.learning_rates = meta.at("learning_rates").get<std::vector<double>>();
  trace.test_losses = meta.at("test_losses").get<std::vector<double>>();
  const auto stored = meta.at("stored_local_models").get<std::vector<std::vector<ClientId>>>();
  for (std::size_t t = 0; t < stored.size(); ++t) {
    std::map<ClientId, Vector> locals;
    for (ClientId i : stored[t])
      locals.emplace(i, read_vector(fs::path(dir) / ("w_" + std::to_string(t) + "_" + std::to_string(i) + ".csv")));
    trace.local_models.push_back(std::move(locals));
  }
  for (std::size_t t = 0; t <= stored.size(); ++t)
    trace.global_models.push_back(read_vector(fs::path(dir) / ("w_" + std::to_string(t) + "_global.csv")));
  return trace;
}

}  // namespace fedval
