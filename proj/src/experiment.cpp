#include "fedval/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <type_traits>

#include "fedval/bounds.hpp"
#include "fedval/fairness.hpp"
#include "fedval/low_rank.hpp"
#include "fedval/metrics.hpp"
#include "fedval/unfairness.hpp"
#include "fedval/utility.hpp"

namespace fedval {

using nlohmann::json;

namespace {

constexpr int kMaxExactClients = 10;
constexpr int kMaxGroundTruthClients = 15;

// Reads fields of one JSON object and rejects keys nobody asked for.
class ObjectReader {
 public:
  ObjectReader(const json& obj, std::string where) : obj_(obj), where_(std::move(where)) {
    require(obj.is_object(), "config: " + where_ + " must be an object");
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    auto it = obj_.find(key);
    if (it == obj_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception& e) {
      throw ConfigError("config: " + path(key) + ": " + e.what());
    }
  }

  const json* child(const std::string& key) {
    seen_.insert(key);
    auto it = obj_.find(key);
    return it == obj_.end() || it->is_null() ? nullptr : &*it;
  }

  std::string path(const std::string& key) const { return where_.empty() ? key : where_ + "." + key; }

  void finish() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError("config: unknown key '" + path(it.key()) + "'");
  }

 private:
  const json& obj_;
  std::string where_;
  std::set<std::string> seen_;
};

std::string to_string(Estimator e) {
  switch (e) {
    case Estimator::auto_select: return "auto";
    case Estimator::exact: return "exact";
    case Estimator::monte_carlo: return "monte_carlo";
  }
  return "auto";
}

Estimator parse_estimator(const std::string& name) {
  if (name == "auto") return Estimator::auto_select;
  if (name == "exact") return Estimator::exact;
  if (name == "monte_carlo") return Estimator::monte_carlo;
  throw ConfigError("unknown estimator '" + name + "' (expected auto, exact or monte_carlo)");
}

std::string to_string(Partition p) { return p == Partition::iid ? "iid" : "by_label"; }

std::string timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream out;
  out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return out.str();
}

void write_json(const std::filesystem::path& path, const json& doc) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

}  // namespace

ExperimentKind parse_experiment_kind(const std::string& name) {
  if (name == "pipeline") return ExperimentKind::pipeline;
  if (name == "fairness") return ExperimentKind::fairness;
  if (name == "noisy_data") return ExperimentKind::noisy_data;
  if (name == "noisy_label") return ExperimentKind::noisy_label;
  if (name == "rank_study") return ExperimentKind::rank_study;
  if (name == "timing") return ExperimentKind::timing;
  throw ConfigError("unknown experiment '" + name +
                    "' (expected pipeline, fairness, noisy_data, noisy_label, rank_study or timing)");
}

std::string to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::pipeline: return "pipeline";
    case ExperimentKind::fairness: return "fairness";
    case ExperimentKind::noisy_data: return "noisy_data";
    case ExperimentKind::noisy_label: return "noisy_label";
    case ExperimentKind::rank_study: return "rank_study";
    case ExperimentKind::timing: return "timing";
  }
  return "pipeline";
}

json ExperimentConfig::to_json() const {
  json schedule;
  if (fed.schedule.kind == LearningRateSchedule::Kind::constant)
    schedule = {{"kind", "constant"}, {"eta", fed.schedule.eta}};
  else
    schedule = {{"kind", "inverse_decay"}, {"mu", fed.schedule.mu}, {"gamma", fed.schedule.gamma}};
  json duplicate = nullptr;
  if (data.duplicate) duplicate = {{"target", data.duplicate->first}, {"source", data.duplicate->second}};
  return {
      {"experiment", to_string(experiment)},
      {"seed", seed},
      {"output_dir", output_dir},
      {"trials", trials},
      {"M", M},
      {"fed",
       {{"num_clients", fed.num_clients},
        {"rounds", fed.rounds},
        {"clients_per_round", fed.clients_per_round},
        {"schedule", schedule},
        {"oracle_mode", fed.oracle_mode},
        {"first_round_full", fed.first_round_full},
        {"local_steps", fed.local_steps}}},
      {"objective", {{"kind", to_string(objective)}, {"mu", objective_mu}}},
      {"completion",
       {{"rank", completion.rank},
        {"lambda", completion.lambda},
        {"max_iterations", completion.max_iterations},
        {"tolerance", completion.tolerance},
        {"init_scale", completion.init_scale}}},
      {"data",
       {{"source", data.source == DataConfig::Source::synthetic ? "synthetic" : "csv"},
        {"alpha", data.synthetic.alpha},
        {"beta", data.synthetic.beta},
        {"samples_per_client", data.synthetic.samples_per_client},
        {"n_features", data.synthetic.n_features},
        {"n_classes", data.synthetic.n_classes},
        {"csv_path", data.csv_path},
        {"partition", to_string(data.partition)},
        {"test_fraction", data.test_fraction},
        {"duplicate", duplicate},
        {"feature_noise", data.feature_noise},
        {"noise_sigma", data.noise_sigma},
        {"label_noise_clients", data.label_noise_clients},
        {"flip_fraction", data.flip_fraction}}},
      {"valuation", {{"fedsv", to_string(fedsv)}, {"comfedsv", to_string(comfedsv)}}},
      {"preset",
       {{"participation_percent", participation_percent},
        {"n_grid", n_grid},
        {"participation_rate", participation_rate},
        {"ranks", ranks},
        {"epsilon_grid", epsilon_grid}}},
  };
}

ExperimentConfig ExperimentConfig::from_json(const json& doc) {
  return from_json_onto(doc, ExperimentConfig{});
}

ExperimentConfig from_json_onto(const json& doc, ExperimentConfig cfg) {
  ObjectReader top(doc, "");
  std::string kind = to_string(cfg.experiment);
  top.get("experiment", kind);
  cfg.experiment = parse_experiment_kind(kind);
  top.get("seed", cfg.seed);
  top.get("output_dir", cfg.output_dir);
  top.get("trials", cfg.trials);
  top.get("M", cfg.M);

  if (const json* f = top.child("fed")) {
    ObjectReader r(*f, "fed");
    r.get("num_clients", cfg.fed.num_clients);
    r.get("rounds", cfg.fed.rounds);
    r.get("clients_per_round", cfg.fed.clients_per_round);
    r.get("oracle_mode", cfg.fed.oracle_mode);
    r.get("first_round_full", cfg.fed.first_round_full);
    r.get("local_steps", cfg.fed.local_steps);
    if (const json* s = r.child("schedule")) {
      ObjectReader sr(*s, "fed.schedule");
      std::string skind = cfg.fed.schedule.kind == LearningRateSchedule::Kind::constant ? "constant" : "inverse_decay";
      sr.get("kind", skind);
      sr.get("eta", cfg.fed.schedule.eta);
      sr.get("mu", cfg.fed.schedule.mu);
      sr.get("gamma", cfg.fed.schedule.gamma);
      sr.finish();
      if (skind == "constant")
        cfg.fed.schedule.kind = LearningRateSchedule::Kind::constant;
      else if (skind == "inverse_decay")
        cfg.fed.schedule.kind = LearningRateSchedule::Kind::inverse_decay;
      else
        throw ConfigError("config: fed.schedule.kind must be constant or inverse_decay");
    }
    r.finish();
  }
  if (const json* o = top.child("objective")) {
    ObjectReader r(*o, "objective");
    std::string okind = to_string(cfg.objective);
    r.get("kind", okind);
    r.get("mu", cfg.objective_mu);
    r.finish();
    cfg.objective = parse_objective_kind(okind);
  }
  if (const json* c = top.child("completion")) {
    ObjectReader r(*c, "completion");
    r.get("rank", cfg.completion.rank);
    r.get("lambda", cfg.completion.lambda);
    r.get("max_iterations", cfg.completion.max_iterations);
    r.get("tolerance", cfg.completion.tolerance);
    r.get("init_scale", cfg.completion.init_scale);
    r.finish();
  }
  if (const json* d = top.child("data")) {
    ObjectReader r(*d, "data");
    std::string source = cfg.data.source == DataConfig::Source::synthetic ? "synthetic" : "csv";
    r.get("source", source);
    if (source == "synthetic")
      cfg.data.source = DataConfig::Source::synthetic;
    else if (source == "csv")
      cfg.data.source = DataConfig::Source::csv;
    else
      throw ConfigError("config: data.source must be synthetic or csv");
    r.get("alpha", cfg.data.synthetic.alpha);
    r.get("beta", cfg.data.synthetic.beta);
    r.get("samples_per_client", cfg.data.synthetic.samples_per_client);
    r.get("n_features", cfg.data.synthetic.n_features);
    r.get("n_classes", cfg.data.synthetic.n_classes);
    r.get("csv_path", cfg.data.csv_path);
    std::string partition = to_string(cfg.data.partition);
    r.get("partition", partition);
    cfg.data.partition = parse_partition(partition);
    r.get("test_fraction", cfg.data.test_fraction);
    if (const json* dup = r.child("duplicate")) {
      ObjectReader dr(*dup, "data.duplicate");
      std::pair<ClientId, ClientId> p{-1, -1};
      dr.get("target", p.first);
      dr.get("source", p.second);
      dr.finish();
      cfg.data.duplicate = p;
    } else {
      cfg.data.duplicate.reset();
    }
    r.get("feature_noise", cfg.data.feature_noise);
    r.get("noise_sigma", cfg.data.noise_sigma);
    r.get("label_noise_clients", cfg.data.label_noise_clients);
    r.get("flip_fraction", cfg.data.flip_fraction);
    r.finish();
  }
  if (const json* v = top.child("valuation")) {
    ObjectReader r(*v, "valuation");
    std::string f = to_string(cfg.fedsv), c = to_string(cfg.comfedsv);
    r.get("fedsv", f);
    r.get("comfedsv", c);
    r.finish();
    cfg.fedsv = parse_estimator(f);
    cfg.comfedsv = parse_estimator(c);
  }
  if (const json* p = top.child("preset")) {
    ObjectReader r(*p, "preset");
    r.get("participation_percent", cfg.participation_percent);
    r.get("n_grid", cfg.n_grid);
    r.get("participation_rate", cfg.participation_rate);
    r.get("ranks", cfg.ranks);
    r.get("epsilon_grid", cfg.epsilon_grid);
    r.finish();
  }
  top.finish();
  return cfg;
}

void ExperimentConfig::validate() const {
  fed.validate();
  fed.schedule.validate();
  require(trials >= 1, "trials must be >= 1");
  require(M >= 0, "M must be >= 1 (or 0 for the default ceil(N ln N))");
  require(completion.rank >= 0, "completion.rank must be >= 1 (or 0 for automatic)");
  require(completion.lambda > 0.0, "completion.lambda must be > 0");
  require(completion.tolerance > 0.0, "completion.tolerance must be > 0");
  require(completion.max_iterations >= 1, "completion.max_iterations must be >= 1");
  require(objective_mu >= 0.0, "objective.mu must be >= 0");
  require(data.test_fraction > 0.0 && data.test_fraction < 1.0, "data.test_fraction must lie in (0,1)");
  if (data.source == DataConfig::Source::csv) {
    require(!data.csv_path.empty(), "data.csv_path is required for csv data");
    require(std::filesystem::exists(data.csv_path), "data.csv_path '" + data.csv_path + "' does not exist");
  }
  if (data.duplicate) {
    const auto [t, s] = *data.duplicate;
    require(t >= 0 && s >= 0 && t < fed.num_clients && s < fed.num_clients && t != s,
            "data.duplicate needs two distinct client ids below num_clients");
  }
  require(data.feature_noise.empty() || static_cast<int>(data.feature_noise.size()) == fed.num_clients,
          "data.feature_noise needs one fraction per client");
  for (ClientId i : data.label_noise_clients)
    require(i >= 0 && i < fed.num_clients, "data.label_noise_clients names unknown client " + std::to_string(i));
  require(participation_rate > 0.0 && participation_rate <= 1.0, "preset.participation_rate must lie in (0,1]");
  for (int p : participation_percent) require(p > 0 && p <= 100, "preset.participation_percent entries must lie in (0,100]");
  require(std::is_sorted(n_grid.begin(), n_grid.end()), "preset.n_grid must be ascending");
  for (double e : epsilon_grid) require(e > 0.0, "preset.epsilon_grid entries must be > 0");
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return ExperimentConfig::from_json(doc);
}

PreparedData prepare_data(const ExperimentConfig& config) {
  const int n = config.fed.num_clients;
  std::vector<ClientDataset> raw;
  if (config.data.source == DataConfig::Source::synthetic) {
    SyntheticSpec spec = config.data.synthetic;
    spec.num_clients = n;
    spec.seed = config.seed;
    raw = generate_synthetic(spec);
  } else {
    raw = load_csv(config.data.csv_path, config.data.partition, n, config.seed);
  }
  auto [clients, test] = hold_out_test(raw, config.data.test_fraction);
  if (config.data.duplicate) make_duplicate(clients, config.data.duplicate->first, config.data.duplicate->second);
  if (!config.data.feature_noise.empty())
    clients = inject_feature_noise(clients, config.data.feature_noise, config.data.noise_sigma, config.seed);
  if (!config.data.label_noise_clients.empty())
    clients = inject_label_noise(clients, config.data.label_noise_clients, config.data.flip_fraction, config.seed);

  const int dim = static_cast<int>(clients.front().dim());
  const int classes = clients.front().num_classes;
  if (config.objective == ObjectiveKind::logistic_regression) {
    require(classes >= 2, "logistic regression needs integer class labels with at least two classes");
    return {std::move(clients), std::move(test), LocalObjective::logistic(dim, classes, config.objective_mu)};
  }
  return {std::move(clients), std::move(test), LocalObjective::ridge(dim, config.objective_mu)};
}

namespace {

class StageLog {
 public:
  StageLog(std::optional<std::filesystem::path> dir) : dir_(std::move(dir)) {}

  template <typename F>
  auto run(const std::string& name, F&& body) {
    const auto start = std::chrono::steady_clock::now();
    try {
      if constexpr (std::is_void_v<decltype(body())>) {
        body();
        done(name, start);
      } else {
        auto out = body();
        done(name, start);
        return out;
      }
    } catch (const ConfigError& e) {
      note("stage '" + name + "' failed: " + e.what());
      throw ConfigError("stage '" + name + "': " + e.what());
    } catch (const NumericError& e) {
      note("stage '" + name + "' failed: " + e.what());
      throw NumericError("stage '" + name + "': " + e.what());
    }
  }

  double seconds(const std::string& name) const {
    auto it = seconds_.find(name);
    return it == seconds_.end() ? 0.0 : it->second;
  }

  void note(const std::string& line) {
    if (!dir_) return;
    std::ofstream(*dir_ / "run.log", std::ios::app) << '[' << timestamp() << "] " << line << '\n';
  }

 private:
  void done(const std::string& name, std::chrono::steady_clock::time_point start) {
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    seconds_[name] += s;
    std::ostringstream line;
    line << "stage '" << name << "' finished in " << std::fixed << std::setprecision(3) << s << " s";
    note(line.str());
  }

  std::optional<std::filesystem::path> dir_;
  std::map<std::string, double> seconds_;
};

// Rows of W restricted to rounds of one parity; the two halves add up to W.
FactorPair parity_rows(const FactorPair& f, int parity) {
  Matrix w = f.W;
  for (Eigen::Index t = 0; t < w.rows(); ++t)
    if (t % 2 != parity) w.row(t).setZero();
  return FactorPair(std::move(w), f.H, f.column_keys);
}

bool covers_all_coalitions(const FactorPair& f, int n) {
  if (n > kMaxGroundTruthClients) return false;
  for (std::uint64_t m = 0; m < (std::uint64_t{1} << n); ++m)
    if (!f.row_of(CoalitionKey(m))) return false;
  return true;
}

json nullable(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> safe_relative_difference(const Vector& v, ClientId i, ClientId j) {
  try {
    return relative_difference(v, i, j);
  } catch (const NumericError&) {
    return std::nullopt;
  }
}

std::optional<double> safe_spearman(const Vector& values, const std::vector<double>& truth) {
  try {
    return spearman(std::vector<double>(values.data(), values.data() + values.size()), truth);
  } catch (const NumericError&) {
    return std::nullopt;
  }
}

}  // namespace

PipelineResult run_pipeline(const ExperimentConfig& config, const PipelineOptions& options) {
  config.validate();
  namespace fs = std::filesystem;
  std::optional<fs::path> dir;
  if (options.write_artifacts) {
    dir = fs::path(config.output_dir);
    fs::create_directories(*dir);
    fs::remove(*dir / "run.log");
  }
  StageLog log(dir);
  log.note("pipeline started");

  const int n = config.fed.num_clients;
  const int M = config.permutations();
  if (dir) {
    json echo = config.to_json();
    echo["resolved"] = {{"M", M}};
    write_json(*dir / "config.json", echo);
  }

  const PreparedData data = log.run("data", [&] { return prepare_data(config); });
  const PermutationSample sample = log.run("permutations", [&] { return sample_permutations(n, M, config.seed); });

  PipelineResult result;
  FedConfig fed = config.fed;
  fed.seed = config.seed;
  result.trace = log.run("fedavg", [&] { return run_fedavg(fed, data.clients, data.objective, data.test); });
  if (dir) log.run("write_trace", [&] { save_trace(result.trace, (*dir / "trace").string()); });

  // Ground truth first: automatic rank selection may need the full matrix.
  std::optional<UtilityMatrix> full;
  if (config.fed.oracle_mode && n <= kMaxGroundTruthClients) {
    full = log.run("ground_truth", [&] {
      UtilityEvaluator oracle(result.trace, data.objective, data.test);
      return full_matrix(oracle);
    });
    result.ground_truth = ground_truth(*full);
    if (dir) {
      save_utility(*full, (*dir / "full").string());
      result.ground_truth->save(dir->string());
    }
  }

  const bool exact_comfedsv = config.comfedsv == Estimator::exact ||
                              (config.comfedsv == Estimator::auto_select && n <= kMaxExactClients);
  require(!exact_comfedsv || n <= kMaxExactClients,
          "exact ComFedSV enumerates 2^N coalitions; use monte_carlo for N > " + std::to_string(kMaxExactClients));

  UtilityEvaluator evaluator(result.trace, data.objective, data.test);
  result.observed = log.run("observe", [&] {
    return exact_comfedsv ? observe_matrix(evaluator, ObservationMode::all_subsets_of_selected)
                          : observe_matrix(evaluator, ObservationMode::prefix_list, sample.coalitions());
  });
  result.comfedsv_calls = evaluator.calls();
  if (dir) save_utility(result.observed, dir->string());

  CompletionConfig cc = config.completion;
  cc.seed = config.seed;
  json rank_rule;
  SmoothnessParams smoothness;
  const bool need_smoothness = options.analysis || cc.rank == 0;
  if (need_smoothness)
    smoothness = log.run("smoothness", [&] {
      return estimate_smoothness(result.trace, data.objective, data.clients, data.test);
    });
  if (cc.rank == 0) {
    const int limit = std::min(result.observed.rounds(), result.observed.num_columns());
    int rank = 8;
    rank_rule["cap"] = 8;
    if (full) {
      std::vector<int> candidates;
      for (int r = 1; r <= std::min(8, std::min(full->rounds(), full->num_columns())); ++r) candidates.push_back(r);
      CompletionConfig base = cc;
      base.rank = 1;
      const int chosen = log.run("choose_rank", [&] { return choose_rank(*full, candidates, base); });
      rank_rule["held_out_choice"] = chosen;
      rank = std::min(rank, chosen);
    }
    if (data.objective.mu() > 0.0 && smoothness.mu > 0.0) {
      double peak = 0.0;
      for (const auto& e : result.observed.entries()) peak = std::max(peak, std::abs(e.value));
      if (peak > 0.0) {
        const long long bound = prop2_bound(result.trace.rounds(), smoothness, 0.01 * peak);
        rank_rule["log_bound"] = bound;
        rank = static_cast<int>(std::min<long long>(rank, std::max<long long>(bound, 1)));
      }
    }
    cc.rank = std::clamp(rank, 1, limit);
  }

  result.factors = log.run("completion", [&] { return solve(result.observed, cc); });
  if (full && covers_all_coalitions(result.factors, n)) result.delta = delta_completedness(*full, result.factors);
  if (dir) {
    save_factors(result.factors, dir->string());
    write_json(*dir / "completion.json", {{"r", cc.rank},
                                          {"rank_rule", rank_rule.is_null() ? json("configured") : rank_rule},
                                          {"lambda", cc.lambda},
                                          {"tolerance", cc.tolerance},
                                          {"max_iterations", cc.max_iterations},
                                          {"init_scale", cc.init_scale},
                                          {"seed", cc.seed},
                                          {"iterations", result.factors.iterations},
                                          {"converged", result.factors.converged},
                                          {"final_objective", result.factors.final_objective()},
                                          {"columns", result.observed.num_columns()},
                                          {"observed_entries", result.observed.num_observed()},
                                          {"delta", nullable(result.delta)}});
  }

  result.comfedsv = log.run("comfedsv", [&] {
    return exact_comfedsv ? comfedsv_exact(result.factors, n) : comfedsv_mc(result.factors, sample);
  });
  result.comfedsv.diagnostics["r"] = cc.rank;
  result.comfedsv.diagnostics["lambda"] = cc.lambda;
  result.comfedsv.diagnostics["seed"] = config.seed;
  result.comfedsv.diagnostics["delta"] = nullable(result.delta);
  result.comfedsv.diagnostics["utility_calls"] = result.comfedsv_calls;

  const bool exact_fedsv =
      config.fedsv == Estimator::exact || (config.fedsv == Estimator::auto_select && n <= kMaxGroundTruthClients);
  result.fedsv = log.run("fedsv", [&] {
    UtilityEvaluator own(result.trace, data.objective, data.test);
    if (exact_fedsv) {
      auto report = fedsv(observe_matrix(own, ObservationMode::all_subsets_of_selected), result.trace.selections);
      report.diagnostics["utility_calls"] = own.calls();
      return report;
    }
    return fedsv_mc(own, config.seed);
  });
  result.fedsv_calls = result.fedsv.diagnostics["utility_calls"].get<std::size_t>();
  result.fedsv.diagnostics["seed"] = config.seed;
  if (dir) {
    result.comfedsv.save(dir->string());
    result.fedsv.save(dir->string());
  }

  if (options.analysis) {
    result.analysis = log.run("analysis", [&] {
      json a;
      a["smoothness"] = smoothness.to_json();

      double peak = 0.0;
      if (full)
        peak = full->dense().cwiseAbs().maxCoeff();
      else
        for (const auto& e : result.observed.entries()) peak = std::max(peak, std::abs(e.value));

      json bounds = json::array();
      json curve = json::array();
      const bool decaying = config.fed.schedule.kind == LearningRateSchedule::Kind::inverse_decay;
      Matrix dense_full;
      if (full) dense_full = full->dense();
      for (double frac : config.epsilon_grid) {
        if (peak <= 0.0) break;
        const double eps = frac * peak;
        json row{{"epsilon", eps}, {"fraction_of_max", frac}};
        row["prop1"] = prop1_bound(result.trace, smoothness, eps);
        if (smoothness.mu > 0.0)
          row["prop2"] = prop2_bound(result.trace.rounds(), smoothness, eps,
                                     decaying ? config.fed.schedule.gamma : 0.0);
        else
          row["prop2"] = nullptr;
        bounds.push_back(row);
        if (full) curve.push_back({{"epsilon", eps}, {"bound", epsilon_rank_upper(dense_full, eps)}});
      }
      a["prop_bounds"] = bounds;
      a["prop2_hypotheses"] = {{"strongly_convex", smoothness.mu > 0.0}, {"inverse_decay_schedule", decaying}};
      a["epsilon_rank_curve"] = full ? curve : json(nullptr);
      if (full) {
        const Vector s = singular_values(dense_full);
        a["singular_values"] = std::vector<double>(s.data(), s.data() + std::min<Eigen::Index>(s.size(), 10));
        a["energy_top5"] = energy_fraction(dense_full, 5);
      }

      const int k = config.fed.clients_per_round;
      if (k < n) {
        json table = json::array();
        for (int s = 0; s <= result.trace.rounds(); ++s)
          table.push_back({{"s", s}, {"probability", unfairness_probability(result.trace.rounds(), n, k, s)}});
        a["unfairness_table"] = {{"T", result.trace.rounds()}, {"N", n}, {"m", k}, {"rows", table}};
      } else {
        a["unfairness_table"] = nullptr;
      }

      FairnessSetup setup;
      setup.values = result.comfedsv.values;
      if (config.data.duplicate) setup.identical_pairs.push_back(*config.data.duplicate);
      auto half = [&](int parity) {
        const FactorPair part = parity_rows(result.factors, parity);
        return exact_comfedsv ? comfedsv_exact(part, n).values : comfedsv_mc(part, sample).values;
      };
      setup.additive_splits.push_back({half(0), half(1)});
      if (result.delta) {
        a["fairness"] = fairness_check(setup, completion_fairness_level(*result.delta, n)).to_json();
      } else {
        // Without the full matrix there is no certificate; report raw gaps.
        FairnessVerdict v = fairness_check(setup, 0.0);
        a["fairness"] = {{"epsilon", nullptr},
                         {"symmetry", {{"gap", nullable(v.symmetry_gap)}, {"status", v.symmetry_gap ? "uncertified" : "not tested"}}},
                         {"zero_element", {{"gap", nullable(v.zero_gap)}, {"status", "not tested"}}},
                         {"additivity", {{"gap", nullable(v.additivity_gap)}, {"status", "uncertified"}}},
                         {"passes", false}};
      }

      json metrics = json::object();
      if (config.data.duplicate) {
        const auto [i, j] = *config.data.duplicate;
        json d{{"pair", {i, j}},
               {"fedsv", nullable(safe_relative_difference(result.fedsv.values, i, j))},
               {"comfedsv", nullable(safe_relative_difference(result.comfedsv.values, i, j))}};
        if (result.ground_truth) d["ground_truth"] = nullable(safe_relative_difference(result.ground_truth->values, i, j));
        metrics["relative_difference"] = d;
      }
      if (!config.data.feature_noise.empty()) {
        std::vector<double> truth;
        for (double f : config.data.feature_noise) truth.push_back(-f);
        json sp{{"fedsv", nullable(safe_spearman(result.fedsv.values, truth))},
                {"comfedsv", nullable(safe_spearman(result.comfedsv.values, truth))}};
        if (result.ground_truth) sp["ground_truth"] = nullable(safe_spearman(result.ground_truth->values, truth));
        metrics["spearman_vs_noise"] = sp;
      }
      a["metrics"] = metrics;
      a["utility_calls"] = {{"fedsv", result.fedsv_calls}, {"comfedsv", result.comfedsv_calls}};
      return a;
    });
    if (dir) write_json(*dir / "analysis.json", result.analysis);
  }
  result.fedsv_seconds = log.seconds("fedsv");
  result.comfedsv_seconds = log.seconds("observe") + log.seconds("completion") + log.seconds("comfedsv");
  log.note("pipeline finished");
  return result;
}

}  // namespace fedval
