#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "fedval/core.hpp"

namespace fedval {

/// One client's local data. Rows of `features` are samples; `labels` holds a
/// class index (stored as a real) or a regression target per row.
struct ClientDataset {
  ClientId client_id = 0;
  Matrix features;
  Vector labels;
  int num_classes = 0;  // 0 for regression targets
  double noise_fraction = 0.0;
  std::optional<ClientId> duplicate_of;

  Eigen::Index size() const { return features.rows(); }
  Eigen::Index dim() const { return features.cols(); }

  /// Throws ConfigError when the row/label counts disagree or noise_fraction
  /// is outside [0,1].
  void validate() const;
};

bool same_data(const ClientDataset& a, const ClientDataset& b);

struct SyntheticSpec {
  double alpha = 1.0;
  double beta = 1.0;
  int num_clients = 10;
  int samples_per_client = 200;
  int n_features = 60;
  int n_classes = 10;
  std::uint64_t seed = 0;
};

/// Softmax-labelled synthetic data with per-client model and feature shift
/// controlled by alpha and beta. alpha = beta = 0 draws every client from one
/// shared generative model.
std::vector<ClientDataset> generate_synthetic(const SyntheticSpec& spec);

enum class Partition { iid, by_label };

Partition parse_partition(const std::string& name);

/// Reads a numeric CSV (last column is the label) and splits it across
/// `num_clients`. A header row is skipped when its first field is not numeric.
std::vector<ClientDataset> load_csv(const std::string& path, Partition partition, int num_clients,
                                    std::uint64_t seed);

/// Same as load_csv for an already parsed table.
std::vector<ClientDataset> partition_rows(const Matrix& features, const Vector& labels, int num_classes,
                                          Partition partition, int num_clients, std::uint64_t seed);

void save_csv(const ClientDataset& data, const std::string& path);

/// Moves the trailing `fraction` of each client's rows into a shared test set.
std::pair<std::vector<ClientDataset>, ClientDataset> hold_out_test(const std::vector<ClientDataset>& datasets,
                                                                   double fraction);

/// Replaces client `target` with a byte-identical copy of client `source`.
void make_duplicate(std::vector<ClientDataset>& datasets, ClientId target, ClientId source);

std::vector<ClientDataset> inject_feature_noise(const std::vector<ClientDataset>& datasets,
                                                const std::vector<double>& fractions, double sigma,
                                                std::uint64_t seed);

std::vector<ClientDataset> inject_label_noise(const std::vector<ClientDataset>& datasets,
                                              const std::set<ClientId>& noisy_clients, double flip_fraction,
                                              std::uint64_t seed);

}  // namespace fedval
