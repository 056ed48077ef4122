#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "fedval/experiment.hpp"

namespace fedval {
namespace {

namespace fs = std::filesystem;

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("fedval_test_" + name);
  fs::remove_all(dir);
  return dir;
}

ExperimentConfig tiny(const std::string& name) {
  ExperimentConfig c;
  c.fed.num_clients = 3;
  c.fed.rounds = 3;
  c.fed.clients_per_round = 2;
  c.data.synthetic.samples_per_client = 30;
  c.data.synthetic.n_features = 5;
  c.data.synthetic.n_classes = 3;
  c.seed = 11;
  c.output_dir = fresh_dir(name).string();
  return c;
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file() || e.path().filename() == "run.log") continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    files[fs::relative(e.path(), dir).string()] = s.str();
  }
  return files;
}

TEST(Config, RoundTripsThroughJson) {
  ExperimentConfig c = tiny("roundtrip");
  c.data.duplicate = std::pair<ClientId, ClientId>{2, 0};
  c.data.label_noise_clients = {1};
  c.comfedsv = Estimator::exact;
  c.fed.schedule = LearningRateSchedule::inverse_decay(0.5, 2.0);
  const ExperimentConfig back = ExperimentConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
}

TEST(Config, UnknownKeysAreErrors) {
  EXPECT_THROW(ExperimentConfig::from_json({{"seeed", 1}}), ConfigError);
  EXPECT_THROW(ExperimentConfig::from_json({{"fed", {{"rounds", 3}, {"round", 4}}}}), ConfigError);
  EXPECT_THROW(ExperimentConfig::from_json({{"fed", {{"rounds", "three"}}}}), ConfigError);
  EXPECT_THROW(ExperimentConfig::from_json({{"experiment", "nope"}}), ConfigError);
  EXPECT_NO_THROW(ExperimentConfig::from_json({{"fed", {{"rounds", 3}}}}));
}

TEST(Config, ValidationGuards) {
  ExperimentConfig c = tiny("guards");
  c.trials = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = tiny("guards");
  c.data.source = DataConfig::Source::csv;
  c.data.csv_path = "/nonexistent/data.csv";
  EXPECT_THROW(c.validate(), ConfigError);
  c = tiny("guards");
  c.data.duplicate = std::pair<ClientId, ClientId>{1, 1};
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Config, DefaultPermutationCount) {
  ExperimentConfig c;
  c.fed.num_clients = 10;
  EXPECT_EQ(c.permutations(), 24);  // ceil(10 ln 10) = ceil(23.03)
  c.M = 7;
  EXPECT_EQ(c.permutations(), 7);
}

TEST(Pipeline, ExhaustiveTwoClientRunMatchesGroundTruth) {
  // A seed whose two sampled permutations are the two orderings of {0, 1}.
  std::uint64_t seed = 0;
  while (sample_permutations(2, 2, seed).permutations[0] == sample_permutations(2, 2, seed).permutations[1]) ++seed;
  ExperimentConfig c = tiny("two_clients");
  c.seed = seed;
  c.fed.num_clients = 2;
  c.fed.clients_per_round = 2;
  c.fed.rounds = 1;
  c.fed.oracle_mode = true;
  c.M = 2;
  c.completion.rank = 1;
  c.completion.lambda = 1e-12;
  c.completion.tolerance = 1e-14;
  c.completion.max_iterations = 2000;
  const PipelineResult r = run_pipeline(c, {.write_artifacts = false, .analysis = false});
  ASSERT_TRUE(r.ground_truth.has_value());
  EXPECT_EQ(r.comfedsv.method, ValuationMethod::comfedsv_mc);
  for (int i = 0; i < 2; ++i) {
    EXPECT_NEAR(r.comfedsv.values[i], r.ground_truth->values[i], 1e-8);
    EXPECT_NEAR(r.fedsv.values[i], r.ground_truth->values[i], 1e-12);
  }
}

TEST(Pipeline, WritesEveryArtifact) {
  ExperimentConfig c = tiny("artifacts");
  c.fed.oracle_mode = true;
  c.data.duplicate = std::pair<ClientId, ClientId>{2, 0};
  run_pipeline(c);
  const fs::path dir(c.output_dir);
  for (const char* f : {"config.json", "run.log", "trace/trace.json", "utility.csv", "columns.json", "W.csv", "H.csv",
                        "completion.json", "valuation_comfedsv_mc.json", "valuation_fedsv.json",
                        "valuation_ground_truth.json", "analysis.json", "full/utility.csv"})
    EXPECT_TRUE(fs::exists(dir / f)) << f;

  std::ifstream in(dir / "config.json");
  const auto echo = nlohmann::json::parse(in);
  EXPECT_EQ(echo["resolved"]["M"], 4);  // ceil(3 ln 3)
  EXPECT_EQ(echo["completion"]["lambda"], 0.05);

  std::ifstream a(dir / "analysis.json");
  const auto analysis = nlohmann::json::parse(a);
  for (const char* k : {"epsilon_rank_curve", "prop_bounds", "unfairness_table", "fairness", "metrics"})
    EXPECT_TRUE(analysis.contains(k)) << k;
  EXPECT_TRUE(analysis["metrics"].contains("relative_difference"));
}

TEST(Pipeline, ArtifactsAreDeterministic) {
  ExperimentConfig c = tiny("determinism");
  c.fed.oracle_mode = true;
  run_pipeline(c);
  const auto first = snapshot(c.output_dir);
  run_pipeline(c);
  const auto second = snapshot(c.output_dir);
  ASSERT_FALSE(first.empty());
  EXPECT_EQ(first, second);
}

TEST(Pipeline, StageFailuresNameTheStage) {
  ExperimentConfig c = tiny("diverge");
  c.objective = ObjectiveKind::ridge_regression;
  c.fed.rounds = 40;
  c.fed.schedule = LearningRateSchedule::constant(1e6);
  try {
    run_pipeline(c);
    FAIL() << "expected divergence";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("stage 'fedavg'"), std::string::npos) << e.what();
  }
  EXPECT_TRUE(fs::exists(fs::path(c.output_dir) / "config.json"));
}

TEST(Presets, NoisyDataNeedsIncreasingFractions) {
  ExperimentConfig c = preset_defaults(ExperimentKind::noisy_data);
  c.data.feature_noise.assign(10, 0.0);
  c.output_dir = fresh_dir("noisy_guard").string();
  EXPECT_THROW(run_preset(c), ConfigError);
}

TEST(Presets, TimingHasOneRowPerN) {
  ExperimentConfig c = preset_defaults(ExperimentKind::timing);
  c.n_grid = {4, 6};
  c.fed.rounds = 3;
  c.data.synthetic.samples_per_client = 20;
  c.output_dir = fresh_dir("timing").string();
  const auto first = run_preset(c);
  const auto second = run_preset(c);
  ASSERT_EQ(first["rows"].size(), 2u);
  for (int k = 0; k < 2; ++k) {
    EXPECT_EQ(first["rows"][k]["calls_fedsv"], second["rows"][k]["calls_fedsv"]);
    EXPECT_EQ(first["rows"][k]["calls_comfedsv"], second["rows"][k]["calls_comfedsv"]);
  }
  EXPECT_TRUE(fs::exists(fs::path(c.output_dir) / "timing.csv"));
}

TEST(Presets, FairnessWritesCdfGrid) {
  ExperimentConfig c = preset_defaults(ExperimentKind::fairness);
  c.trials = 2;
  c.fed.rounds = 3;
  c.data.synthetic.samples_per_client = 20;
  c.output_dir = fresh_dir("fairness").string();
  const auto summary = run_preset(c);
  EXPECT_EQ(summary["cdf"].size(), 21u);
  EXPECT_EQ(summary["warnings"].size(), 1u);
  std::ifstream in(fs::path(c.output_dir) / "fairness.csv");
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) ++lines;
  EXPECT_EQ(lines, 3);
}

int run_cli(const std::string& args) {
  const int status = std::system((std::string(FEDVAL_CLI) + " " + args + " > /dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST(Cli, ExitCodes) {
  const fs::path dir = fresh_dir("cli");
  fs::create_directories(dir);
  const auto write = [&](const std::string& name, const nlohmann::json& doc) {
    std::ofstream(dir / name) << doc.dump();
    return (dir / name).string();
  };
  const nlohmann::json small = tiny("cli_config").to_json();
  const std::string good = write("good.json", small);
  nlohmann::json typo = small;
  typo["fed"]["roundz"] = 3;
  nlohmann::json diverging = small;
  diverging["objective"]["kind"] = "ridge";
  diverging["fed"]["rounds"] = 40;
  diverging["fed"]["schedule"] = {{"kind", "constant"}, {"eta", 1e6}};

  EXPECT_EQ(run_cli("comfedsv --config " + good + " --out " + (dir / "run").string()), 0);
  EXPECT_TRUE(fs::exists(dir / "run" / "valuation_comfedsv_mc.json"));
  EXPECT_EQ(run_cli("train --config " + good + " --seed 4 --out " + (dir / "train").string()), 0);
  std::ifstream echo(dir / "train" / "config.json");
  EXPECT_EQ(nlohmann::json::parse(echo)["seed"], 4);
  EXPECT_EQ(run_cli("comfedsv --config " + write("typo.json", typo)), 2);
  EXPECT_EQ(run_cli("comfedsv --config " + (dir / "missing.json").string()), 2);
  EXPECT_EQ(run_cli("preset nonsense --out " + (dir / "p").string()), 2);
  EXPECT_EQ(run_cli("train --config " + write("diverge.json", diverging) + " --out " + (dir / "d").string()), 3);
}

}  // namespace
}  // namespace fedval
