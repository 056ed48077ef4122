// fedval: command-line driver for the valuation pipeline and experiment presets.
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "fedval/experiment.hpp"
#include "fedval/utility.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config_path, "JSON configuration file")->check(CLI::ExistingFile);
  sub->add_option("--seed", c.seed, "Override the configured seed");
  sub->add_option("--out", c.out, "Output directory");
}

fedval::ExperimentConfig resolve(const Common& c, fedval::ExperimentConfig base) {
  if (!c.config_path.empty()) {
    std::ifstream in(c.config_path);
    json doc;
    try {
      doc = json::parse(in);
    } catch (const json::parse_error& e) {
      throw fedval::ConfigError(c.config_path + ": " + e.what());
    }
    base = fedval::from_json_onto(doc, std::move(base));
  }
  if (c.seed) base.seed = *c.seed;
  if (!c.out.empty()) base.output_dir = c.out;
  base.validate();
  return base;
}

void echo_config(const fedval::ExperimentConfig& config) {
  fs::create_directories(config.output_dir);
  std::ofstream(fs::path(config.output_dir) / "config.json") << config.to_json().dump(2) << '\n';
}

void gen_data(const fedval::ExperimentConfig& config) {
  echo_config(config);
  const auto data = fedval::prepare_data(config);
  const fs::path dir = fs::path(config.output_dir) / "data";
  fs::create_directories(dir);
  for (const auto& client : data.clients)
    fedval::save_csv(client, (dir / ("client_" + std::to_string(client.client_id) + ".csv")).string());
  fedval::save_csv(data.test, (dir / "test.csv").string());
  std::cout << "wrote " << data.clients.size() << " client files and test.csv to " << dir.string() << '\n';
}

void train(const fedval::ExperimentConfig& config) {
  echo_config(config);
  const auto data = fedval::prepare_data(config);
  fedval::FedConfig fed = config.fed;
  fed.seed = config.seed;
  const auto trace = fedval::run_fedavg(fed, data.clients, data.objective, data.test);
  fedval::save_trace(trace, (fs::path(config.output_dir) / "trace").string());
  std::cout << "final test loss " << trace.test_losses.back() << '\n';
}

void fedsv_only(fedval::ExperimentConfig config) {
  echo_config(config);
  const auto data = fedval::prepare_data(config);
  fedval::FedConfig fed = config.fed;
  fed.seed = config.seed;
  const auto trace = fedval::run_fedavg(fed, data.clients, data.objective, data.test);
  fedval::save_trace(trace, (fs::path(config.output_dir) / "trace").string());
  fedval::UtilityEvaluator evaluator(trace, data.objective, data.test);
  const bool exact = config.fedsv == fedval::Estimator::exact ||
                     (config.fedsv == fedval::Estimator::auto_select && config.fed.num_clients <= 15);
  fedval::ValuationReport report;
  if (exact) {
    report = fedval::fedsv(fedval::observe_matrix(evaluator, fedval::ObservationMode::all_subsets_of_selected),
                           trace.selections);
    report.diagnostics["utility_calls"] = evaluator.calls();
  } else {
    report = fedval::fedsv_mc(evaluator, config.seed);
  }
  report.diagnostics["seed"] = config.seed;
  report.save(config.output_dir);
  std::cout << report.to_json()["values"].dump() << '\n';
}

void pipeline(const fedval::ExperimentConfig& config, bool analysis) {
  const auto result = fedval::run_pipeline(config, {.write_artifacts = true, .analysis = analysis});
  std::cout << "comfedsv " << result.comfedsv.to_json()["values"].dump() << '\n';
  std::cout << "fedsv    " << result.fedsv.to_json()["values"].dump() << '\n';
  if (result.ground_truth) std::cout << "truth    " << result.ground_truth->to_json()["values"].dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated data valuation: FedSV and ComFedSV"};
  app.require_subcommand(1);

  Common gen_c, train_c, fedsv_c, comfedsv_c, analyze_c, preset_c;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate or partition client datasets");
  add_common(gen_cmd, gen_c);
  auto* train_cmd = app.add_subcommand("train", "Run FedAvg and save the training trace");
  add_common(train_cmd, train_c);
  auto* fedsv_cmd = app.add_subcommand("fedsv", "Train and compute FedSV");
  add_common(fedsv_cmd, fedsv_c);
  auto* comfedsv_cmd = app.add_subcommand("comfedsv", "Train, complete the utility matrix and compute ComFedSV");
  add_common(comfedsv_cmd, comfedsv_c);
  auto* analyze_cmd = app.add_subcommand("analyze", "Full pipeline in oracle mode with bounds and fairness diagnostics");
  add_common(analyze_cmd, analyze_c);
  auto* preset_cmd = app.add_subcommand("preset", "Run a named experiment preset");
  std::string preset_name;
  preset_cmd->add_option("name", preset_name, "pipeline, fairness, noisy_data, noisy_label, rank_study or timing")
      ->required();
  add_common(preset_cmd, preset_c);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*gen_cmd) {
      gen_data(resolve(gen_c, {}));
    } else if (*train_cmd) {
      train(resolve(train_c, {}));
    } else if (*fedsv_cmd) {
      fedsv_only(resolve(fedsv_c, {}));
    } else if (*comfedsv_cmd) {
      pipeline(resolve(comfedsv_c, {}), false);
    } else if (*analyze_cmd) {
      auto config = resolve(analyze_c, {});
      config.fed.oracle_mode = true;
      pipeline(config, true);
    } else if (*preset_cmd) {
      const auto kind = fedval::parse_experiment_kind(preset_name);
      auto config = resolve(preset_c, fedval::preset_defaults(kind));
      config.experiment = kind;
      std::cout << fedval::run_preset(config).dump(2) << '\n';
    }
  } catch (const fedval::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const fedval::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
