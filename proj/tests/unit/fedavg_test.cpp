#include <gtest/gtest.h>

#include <filesystem>
#include <set>

#include "fedval/fedavg.hpp"
#include "helpers.hpp"

namespace fedval {
namespace {

TEST(Schedule, InverseDecayValues) {
  const auto s = LearningRateSchedule::inverse_decay(0.5, 2.0);
  EXPECT_DOUBLE_EQ(s.rate(1), 2.0 / (0.5 * 3.0));
  EXPECT_DOUBLE_EQ(s.rate(4), 2.0 / (0.5 * 6.0));
  EXPECT_DOUBLE_EQ(LearningRateSchedule::constant(0.3).rate(7), 0.3);
}

TEST(Sampling, UniformSubsetsSorted) {
  Rng rng = make_rng(1);
  std::map<std::vector<ClientId>, int> counts;
  for (int k = 0; k < 20000; ++k) {
    auto s = sample_clients(5, 2, rng);
    ASSERT_TRUE(std::is_sorted(s.begin(), s.end()));
    ASSERT_EQ(std::set<ClientId>(s.begin(), s.end()).size(), 2u);
    ++counts[s];
  }
  ASSERT_EQ(counts.size(), 10u);
  for (const auto& [s, c] : counts) EXPECT_NEAR(c / 20000.0, 0.1, 0.01);
}

// One client, full participation: FedAvg reduces to gradient descent on that
// client's loss, so a long run must reach the closed-form ridge minimizer.
TEST(FedAvg, SingleClientMatchesCentralizedRidge) {
  auto clients = testing::ridge_clients(1, 40, 4, 3);
  const auto obj = LocalObjective::ridge(4, 0.1);
  FedConfig cfg;
  cfg.num_clients = 1;
  cfg.clients_per_round = 1;
  cfg.rounds = 2000;
  cfg.schedule = LearningRateSchedule::constant(0.1);
  const auto trace = run_fedavg(cfg, clients, obj, clients[0]);
  const auto& d = clients[0];
  const double n = static_cast<double>(d.size());
  const Matrix a = d.features.transpose() * d.features / n + 0.1 * Matrix::Identity(4, 4);
  const Vector exact = a.ldlt().solve(d.features.transpose() * d.labels / n);
  EXPECT_LE((trace.global_models.back() - exact).norm(), 1e-3);
}

TEST(FedAvg, GlobalIsMeanOfSelectedLocals) {
  const auto run = testing::small_run(5, 4, 2, 11);
  const auto& tr = run.trace;
  ASSERT_EQ(tr.global_models.size(), 5u);
  ASSERT_EQ(tr.test_losses.size(), 5u);
  EXPECT_EQ(tr.selections[0].size(), 5u);  // everyone heard in the first round
  for (int t = 0; t < tr.rounds(); ++t) {
    Vector mean = Vector::Zero(tr.global_models[0].size());
    for (ClientId i : tr.selections[t]) mean += tr.local_model(t, i);
    mean /= tr.selections[t].size();
    EXPECT_TRUE(mean.isApprox(tr.global_models[t + 1], 1e-14));
    for (ClientId i = 0; i < 5; ++i) {
      const Vector expect = local_update(tr.global_models[t], run.objective, run.clients[i], tr.learning_rates[t]);
      EXPECT_EQ(tr.local_model(t, i), expect);
    }
  }
}

TEST(FedAvg, DeterministicForSeed) {
  const auto a = testing::small_run(6, 5, 2, 21);
  const auto b = testing::small_run(6, 5, 2, 21);
  EXPECT_EQ(a.trace.selections, b.trace.selections);
  for (std::size_t t = 0; t < a.trace.global_models.size(); ++t)
    EXPECT_EQ(a.trace.global_models[t], b.trace.global_models[t]);
}

TEST(FedAvg, NonOracleStoresOnlySelected) {
  auto clients = testing::ridge_clients(4, 10, 3, 5);
  FedConfig cfg;
  cfg.num_clients = 4;
  cfg.clients_per_round = 2;
  cfg.rounds = 3;
  const auto tr = run_fedavg(cfg, clients, LocalObjective::ridge(3, 0.1), clients[0]);
  for (int t = 1; t < 3; ++t) {
    EXPECT_EQ(tr.local_models[t].size(), 2u);
    for (ClientId i = 0; i < 4; ++i) {
      const bool picked = std::count(tr.selections[t].begin(), tr.selections[t].end(), i) > 0;
      EXPECT_EQ(tr.has_local_model(t, i), picked);
      if (!picked) EXPECT_THROW(tr.local_model(t, i), ConfigError);
    }
  }
}

TEST(FedAvg, RejectsBadConfig) {
  auto clients = testing::ridge_clients(3, 5, 2, 1);
  const auto obj = LocalObjective::ridge(2, 0.1);
  FedConfig cfg;
  cfg.num_clients = 3;
  cfg.clients_per_round = 4;
  EXPECT_THROW(run_fedavg(cfg, clients, obj, clients[0]), ConfigError);
  cfg.clients_per_round = 2;
  cfg.num_clients = 4;
  EXPECT_THROW(run_fedavg(cfg, clients, obj, clients[0]), ConfigError);
}

TEST(FedAvg, DivergenceIsNumericError) {
  auto clients = testing::ridge_clients(2, 10, 3, 2);
  for (auto& c : clients) c.features *= 100.0;
  FedConfig cfg;
  cfg.num_clients = 2;
  cfg.clients_per_round = 2;
  cfg.rounds = 200;
  cfg.schedule = LearningRateSchedule::constant(1.0);
  EXPECT_THROW(run_fedavg(cfg, clients, LocalObjective::ridge(3, 0.1), clients[0]), NumericError);
}

TEST(FedAvg, TraceRoundTrip) {
  const auto run = testing::small_run(3, 3, 2, 4);
  const auto dir = std::filesystem::temp_directory_path() / "fedval_trace_roundtrip";
  std::filesystem::remove_all(dir);
  save_trace(run.trace, dir.string());
  const auto back = load_trace(dir.string());
  EXPECT_EQ(back.selections, run.trace.selections);
  EXPECT_EQ(back.learning_rates, run.trace.learning_rates);
  EXPECT_EQ(back.test_losses, run.trace.test_losses);
  for (int t = 0; t < 3; ++t)
    for (ClientId i = 0; i < 3; ++i) EXPECT_EQ(back.local_model(t, i), run.trace.local_model(t, i));
  EXPECT_EQ(back.global_models.back(), run.trace.global_models.back());
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace fedval
