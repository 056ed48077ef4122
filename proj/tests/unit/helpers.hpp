#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "fedval/dataset.hpp"
#include "fedval/fedavg.hpp"
#include "fedval/objective.hpp"

namespace fedval::testing {

/// Small regression problem: y = x . w_true + noise, split across clients.
inline std::vector<ClientDataset> ridge_clients(int num_clients, int rows, int dim, std::uint64_t seed,
                                                double noise = 0.1) {
  Rng rng = make_rng(seed, 99);
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector w_true(dim);
  for (int k = 0; k < dim; ++k) w_true[k] = normal(rng);
  std::vector<ClientDataset> out;
  for (int i = 0; i < num_clients; ++i) {
    ClientDataset d;
    d.client_id = i;
    d.features.resize(rows, dim);
    d.labels.resize(rows);
    for (int r = 0; r < rows; ++r) {
      for (int k = 0; k < dim; ++k) d.features(r, k) = normal(rng) + 0.3 * i;
      d.labels[r] = d.features.row(r).dot(w_true) + noise * normal(rng);
    }
    out.push_back(std::move(d));
  }
  return out;
}

inline ClientDataset pooled(const std::vector<ClientDataset>& parts) {
  ClientDataset all;
  all.client_id = -1;
  Eigen::Index rows = 0;
  for (const auto& p : parts) rows += p.size();
  all.features.resize(rows, parts.front().dim());
  all.labels.resize(rows);
  all.num_classes = parts.front().num_classes;
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    all.features.middleRows(at, p.size()) = p.features;
    all.labels.segment(at, p.size()) = p.labels;
    at += p.size();
  }
  return all;
}

/// Oracle-mode ridge trace on random data.
struct SmallRun {
  std::vector<ClientDataset> clients;
  ClientDataset test;
  LocalObjective objective = LocalObjective::ridge(3, 0.1);
  TrainingTrace trace;
};

inline SmallRun small_run(int num_clients, int rounds, int per_round, std::uint64_t seed, int dim = 3) {
  SmallRun run;
  run.clients = ridge_clients(num_clients, 12, dim, seed);
  run.test = pooled(ridge_clients(1, 30, dim, seed + 1000));
  run.objective = LocalObjective::ridge(dim, 0.1);
  FedConfig cfg;
  cfg.num_clients = num_clients;
  cfg.rounds = rounds;
  cfg.clients_per_round = per_round;
  cfg.schedule = LearningRateSchedule::constant(0.05);
  cfg.seed = seed;
  cfg.oracle_mode = true;
  run.trace = run_fedavg(cfg, run.clients, run.objective, run.test);
  return run;
}

}  // namespace fedval::testing
