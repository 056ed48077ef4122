#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <numeric>
#include <sstream>

#include "fedval/experiment.hpp"
#include "fedval/low_rank.hpp"
#include "fedval/metrics.hpp"

namespace fedval {

using nlohmann::json;
namespace fs = std::filesystem;

ExperimentConfig preset_defaults(ExperimentKind kind) {
  ExperimentConfig c;
  c.experiment = kind;
  c.output_dir = "runs/" + to_string(kind);
  c.data.partition = Partition::by_label;
  switch (kind) {
    case ExperimentKind::pipeline:
      c.output_dir = "runs/latest";
      break;
    case ExperimentKind::fairness:
      c.trials = 50;
      c.fed.oracle_mode = true;
      c.data.duplicate = std::pair<ClientId, ClientId>{9, 0};
      c.comfedsv = Estimator::auto_select;
      break;
    case ExperimentKind::noisy_data:
      c.trials = 10;
      c.data.synthetic.alpha = c.data.synthetic.beta = 0.0;
      c.data.partition = Partition::iid;
      c.data.noise_sigma = 3.0;
      c.fed.local_steps = 50;
      c.fed.oracle_mode = true;
      c.data.feature_noise.clear();
      for (int i = 0; i < c.fed.num_clients; ++i) c.data.feature_noise.push_back(0.05 * i);
      c.comfedsv = Estimator::auto_select;
      break;
    case ExperimentKind::noisy_label:
      c.data.synthetic.alpha = c.data.synthetic.beta = 0.0;
      c.data.partition = Partition::iid;
      c.fed.num_clients = 100;
      c.fed.rounds = 30;
      c.data.synthetic.samples_per_client = 50;
      for (ClientId i = 0; i < 100; i += 10) c.data.label_noise_clients.insert(i);
      c.data.flip_fraction = 0.3;
      break;
    case ExperimentKind::rank_study:
      c.fed.oracle_mode = true;
      c.fed.rounds = 50;
      c.comfedsv = Estimator::exact;
      break;
    case ExperimentKind::timing:
      c.participation_rate = 0.3;
      c.fedsv = Estimator::monte_carlo;
      break;
  }
  return c;
}

namespace {

std::string trial_dir(const std::string& root, const std::string& prefix, long long index) {
  std::ostringstream name;
  name << prefix << '_' << std::setw(3) << std::setfill('0') << index;
  return (fs::path(root) / name.str()).string();
}

std::ofstream open_csv(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << std::setprecision(10);
  return out;
}

std::string cell(const json& v) {
  if (v.is_null()) return "nan";
  std::ostringstream s;
  s << std::setprecision(10) << v.get<double>();
  return s.str();
}

double as_double(const json& v) { return v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>(); }

double median(std::vector<double> v) {
  // NaN (undefined difference) sorts as the worst value.
  for (double& x : v)
    if (std::isnan(x)) x = std::numeric_limits<double>::infinity();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// P(d <= t); undefined differences never count.
double ecdf(const std::vector<double>& d, double t) {
  std::size_t hits = 0;
  for (double x : d)
    if (!std::isnan(x) && x <= t) ++hits;
  return d.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(d.size());
}

json run_fairness(const ExperimentConfig& config) {
  require(config.data.duplicate.has_value(), "fairness preset needs data.duplicate");
  const auto [i, j] = *config.data.duplicate;
  const fs::path root(config.output_dir);
  json summary{{"warnings", json::array()}};
  if (config.trials < 10) {
    const std::string w = "trials < 10: the empirical CDF is coarse";
    std::cerr << "warning: " << w << '\n';
    summary["warnings"].push_back(w);
  }

  std::vector<double> d_fedsv, d_comfedsv, d_truth;
  auto csv = open_csv(root / "fairness.csv");
  csv << "trial,d_fedsv,d_comfedsv,d_ground_truth\n";
  for (int trial = 0; trial < config.trials; ++trial) {
    ExperimentConfig c = config;
    c.experiment = ExperimentKind::pipeline;
    c.seed = config.seed + static_cast<std::uint64_t>(trial);
    c.output_dir = trial_dir(config.output_dir, "trial", trial);
    const PipelineResult r = run_pipeline(c);
    const json& d = r.analysis["metrics"]["relative_difference"];
    d_fedsv.push_back(as_double(d["fedsv"]));
    d_comfedsv.push_back(as_double(d["comfedsv"]));
    d_truth.push_back(d.contains("ground_truth") ? as_double(d["ground_truth"]) : std::nan(""));
    csv << trial << ',' << cell(d["fedsv"]) << ',' << cell(d["comfedsv"]) << ','
        << (d.contains("ground_truth") ? cell(d["ground_truth"]) : "nan") << '\n';
  }

  auto cdf = open_csv(root / "fairness_cdf.csv");
  cdf << "t,cdf_fedsv,cdf_comfedsv,cdf_ground_truth\n";
  json grid = json::array();
  for (int g = 0; g <= 20; ++g) {
    const double t = 0.05 * g;
    const double a = ecdf(d_fedsv, t), b = ecdf(d_comfedsv, t), c = ecdf(d_truth, t);
    cdf << t << ',' << a << ',' << b << ',' << c << '\n';
    grid.push_back({{"t", t}, {"fedsv", a}, {"comfedsv", b}, {"ground_truth", c}});
  }
  summary["pair"] = {i, j};
  summary["trials"] = config.trials;
  summary["cdf"] = grid;
  summary["median"] = {{"fedsv", median(d_fedsv)}, {"comfedsv", median(d_comfedsv)}};
  summary["d_fedsv"] = d_fedsv;
  summary["d_comfedsv"] = d_comfedsv;
  return summary;
}

json run_noisy_data(const ExperimentConfig& config) {
  const auto& f = config.data.feature_noise;
  require(static_cast<int>(f.size()) == config.fed.num_clients, "noisy_data preset needs one noise fraction per client");
  for (std::size_t k = 1; k < f.size(); ++k)
    require(f[k] > f[k - 1], "noisy_data preset needs strictly increasing noise fractions (the true ranking is undefined otherwise)");

  const fs::path root(config.output_dir);
  auto csv = open_csv(root / "noisy_data.csv");
  csv << "trial,spearman_ground_truth,spearman_fedsv,spearman_comfedsv\n";
  json rows = json::array();
  for (int trial = 0; trial < config.trials; ++trial) {
    ExperimentConfig c = config;
    c.experiment = ExperimentKind::pipeline;
    c.seed = config.seed + static_cast<std::uint64_t>(trial);
    c.output_dir = trial_dir(config.output_dir, "trial", trial);
    const PipelineResult r = run_pipeline(c);
    const json& s = r.analysis["metrics"]["spearman_vs_noise"];
    const json truth = s.contains("ground_truth") ? s["ground_truth"] : json(nullptr);
    csv << trial << ',' << cell(truth) << ',' << cell(s["fedsv"]) << ',' << cell(s["comfedsv"]) << '\n';
    rows.push_back({{"trial", trial}, {"ground_truth", truth}, {"fedsv", s["fedsv"]}, {"comfedsv", s["comfedsv"]}});
  }
  return {{"trials", config.trials}, {"rows", rows}};
}

json run_noisy_label(const ExperimentConfig& config) {
  const int n = config.fed.num_clients;
  const auto& noisy = config.data.label_noise_clients;
  require(!noisy.empty() && static_cast<int>(noisy.size()) < n,
          "noisy_label preset needs between 1 and N-1 noisy clients");
  const int k = static_cast<int>(noisy.size());
  const std::set<int> planted(noisy.begin(), noisy.end());

  const fs::path root(config.output_dir);
  auto csv = open_csv(root / "noisy_label.csv");
  csv << "participation_percent,clients_per_round,jaccard_fedsv,jaccard_comfedsv\n";
  json rows = json::array();
  for (int p : config.participation_percent) {
    ExperimentConfig c = config;
    c.experiment = ExperimentKind::pipeline;
    c.fed.clients_per_round = std::clamp(static_cast<int>(std::lround(p * n / 100.0)), 1, n);
    c.output_dir = trial_dir(config.output_dir, "participation", p);
    const PipelineResult r = run_pipeline(c, {.write_artifacts = true, .analysis = false});
    const double jf = jaccard(lowest_k(r.fedsv.values, k), planted);
    const double jc = jaccard(lowest_k(r.comfedsv.values, k), planted);
    csv << p << ',' << c.fed.clients_per_round << ',' << jf << ',' << jc << '\n';
    rows.push_back({{"participation_percent", p}, {"K", c.fed.clients_per_round}, {"fedsv", jf}, {"comfedsv", jc}});
  }
  return {{"rows", rows}};
}

json run_rank_study(const ExperimentConfig& config) {
  ExperimentConfig c = config;
  c.experiment = ExperimentKind::pipeline;
  c.fed.oracle_mode = true;
  c.comfedsv = Estimator::exact;
  c.output_dir = (fs::path(config.output_dir) / "pipeline").string();
  const PipelineResult base = run_pipeline(c, {.write_artifacts = true, .analysis = false});
  require(base.ground_truth.has_value(), "rank_study needs the full utility matrix (oracle mode, N <= 15)");

  // The base run saved the full matrix next to its other artifacts.
  const UtilityMatrix full = load_utility((fs::path(c.output_dir) / "full").string(), base.trace.rounds(), c.fed.num_clients);
  const Matrix dense = full.dense();
  const double norm = dense.norm();
  const fs::path root(config.output_dir);

  auto sv = open_csv(root / "singular_values.csv");
  sv << "index,singular_value,energy_fraction\n";
  const Vector s = singular_values(dense);
  for (Eigen::Index q = 0; q < s.size(); ++q) sv << q + 1 << ',' << s(q) << ',' << energy_fraction(dense, static_cast<int>(q + 1)) << '\n';

  auto csv = open_csv(root / "rank_study.csv");
  csv << "rank,relative_error,delta,valuation_error\n";
  json rows = json::array();
  const int limit = std::min(base.observed.rounds(), base.observed.num_columns());
  for (int r : config.ranks) {
    if (r < 1 || r > limit) continue;
    CompletionConfig cc = config.completion;
    cc.rank = r;
    cc.seed = config.seed;
    const FactorPair f = solve(base.observed, cc);
    const double rel = norm > 0 ? (reconstruct(full, f) - dense).norm() / norm : 0.0;
    const double delta = delta_completedness(full, f);
    const Vector v = comfedsv_exact(f, full.num_clients()).values;
    const double err = (v - base.ground_truth->values).cwiseAbs().maxCoeff();
    csv << r << ',' << rel << ',' << delta << ',' << err << '\n';
    rows.push_back({{"rank", r}, {"relative_error", rel}, {"delta", delta}, {"valuation_error", err}});
  }
  return {{"rows", rows}, {"energy_top5", energy_fraction(dense, 5)}};
}

json run_timing(const ExperimentConfig& config) {
  const fs::path root(config.output_dir);
  auto csv = open_csv(root / "timing.csv");
  csv << "N,K,time_fedsv,time_comfedsv,ratio_time,calls_fedsv,calls_comfedsv,ratio_calls\n";
  json rows = json::array();
  for (int n : config.n_grid) {
    ExperimentConfig c = config;
    c.experiment = ExperimentKind::pipeline;
    c.fed.num_clients = n;
    c.fed.clients_per_round = std::clamp(static_cast<int>(std::lround(config.participation_rate * n)), 1, n);
    c.data.duplicate.reset();
    c.data.feature_noise.clear();
    c.data.label_noise_clients.clear();
    c.output_dir = trial_dir(config.output_dir, "n", n);
    const PipelineResult r = run_pipeline(c, {.write_artifacts = true, .analysis = false});
    const double rt = r.comfedsv_seconds > 0 ? r.fedsv_seconds / r.comfedsv_seconds : std::nan("");
    const double rc = r.comfedsv_calls > 0 ? static_cast<double>(r.fedsv_calls) / static_cast<double>(r.comfedsv_calls)
                                           : std::nan("");
    csv << n << ',' << c.fed.clients_per_round << ',' << r.fedsv_seconds << ',' << r.comfedsv_seconds << ',' << rt << ','
        << r.fedsv_calls << ',' << r.comfedsv_calls << ',' << rc << '\n';
    rows.push_back({{"N", n},
                    {"K", c.fed.clients_per_round},
                    {"calls_fedsv", r.fedsv_calls},
                    {"calls_comfedsv", r.comfedsv_calls},
                    {"ratio_calls", rc},
                    {"ratio_time", rt}});
  }
  return {{"rows", rows}};
}

}  // namespace

json run_preset(const ExperimentConfig& config) {
  config.validate();
  fs::create_directories(config.output_dir);
  {
    std::ofstream echo(fs::path(config.output_dir) / "config.json");
    echo << config.to_json().dump(2) << '\n';
  }
  json summary;
  switch (config.experiment) {
    case ExperimentKind::pipeline: {
      const PipelineResult r = run_pipeline(config);
      summary = {{"fedsv", std::vector<double>(r.fedsv.values.begin(), r.fedsv.values.end())},
                 {"comfedsv", std::vector<double>(r.comfedsv.values.begin(), r.comfedsv.values.end())}};
      break;
    }
    case ExperimentKind::fairness: summary = run_fairness(config); break;
    case ExperimentKind::noisy_data: summary = run_noisy_data(config); break;
    case ExperimentKind::noisy_label: summary = run_noisy_label(config); break;
    case ExperimentKind::rank_study: summary = run_rank_study(config); break;
    case ExperimentKind::timing: summary = run_timing(config); break;
  }
  summary["experiment"] = to_string(config.experiment);
  std::ofstream(fs::path(config.output_dir) / "summary.json") << summary.dump(2) << '\n';
  return summary;
}

}  // namespace fedval
