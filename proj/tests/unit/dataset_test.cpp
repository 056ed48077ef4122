#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "fedval/dataset.hpp"
#include "fedval/fedavg.hpp"
#include "helpers.hpp"

namespace fedval {
namespace {

std::vector<double> histogram(const ClientDataset& d) {
  std::vector<double> h(d.num_classes, 0.0);
  for (double y : d.labels) h[static_cast<int>(y)] += 1.0 / d.size();
  return h;
}

TEST(Synthetic, ShapesAndLabels) {
  SyntheticSpec spec;
  spec.num_clients = 1;
  spec.samples_per_client = 17;
  const auto data = generate_synthetic(spec);
  ASSERT_EQ(data.size(), 1u);
  EXPECT_EQ(data[0].size(), 17);
  EXPECT_EQ(data[0].dim(), 60);
  for (double y : data[0].labels) EXPECT_TRUE(y >= 0 && y < 10 && y == std::floor(y));
}

TEST(Synthetic, IidCaseSharesOneModel) {
  SyntheticSpec spec;
  spec.alpha = spec.beta = 0.0;
  spec.num_clients = 3;
  spec.samples_per_client = 4000;
  spec.n_features = 5;
  spec.n_classes = 3;
  const auto data = generate_synthetic(spec);
  // Same generative model: feature means and label histograms agree closely.
  for (int i = 1; i < 3; ++i) {
    EXPECT_LE((data[i].features.colwise().mean() - data[0].features.colwise().mean()).cwiseAbs().maxCoeff(), 0.1);
    const auto a = histogram(data[0]), b = histogram(data[i]);
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(a[c], b[c], 0.05);
  }
}

TEST(Synthetic, HeterogeneousSeedsDiffer) {
  SyntheticSpec spec;
  spec.num_clients = 4;
  spec.samples_per_client = 300;
  spec.seed = 1;
  const auto a = generate_synthetic(spec);
  spec.seed = 2;
  const auto b = generate_synthetic(spec);
  double distance = 0.0;
  for (int i = 0; i < 4; ++i) {
    const auto ha = histogram(a[i]), hb = histogram(b[i]);
    for (int c = 0; c < 10; ++c) distance += std::abs(ha[c] - hb[c]);
  }
  EXPECT_GT(distance, 0.0);
  spec.seed = 1;
  EXPECT_TRUE(same_data(generate_synthetic(spec)[2], a[2]));
}

TEST(Synthetic, RejectsBadDimensions) {
  SyntheticSpec spec;
  spec.n_features = 0;
  EXPECT_THROW(generate_synthetic(spec), ConfigError);
}

std::string write_csv(const std::string& name, const std::string& body) {
  const auto path = std::filesystem::temp_directory_path() / name;
  std::ofstream(path) << body;
  return path.string();
}

TEST(Csv, IidEvenSplitCoversAllRows) {
  std::string body = "x1,x2,label\n";
  for (int r = 0; r < 100; ++r) body += std::to_string(r) + "," + std::to_string(r * 2) + "," + std::to_string(r % 10) + "\n";
  const auto path = write_csv("fedval_iid.csv", body);
  const auto parts = load_csv(path, Partition::iid, 10, 3);
  ASSERT_EQ(parts.size(), 10u);
  std::multiset<double> seen;
  for (const auto& p : parts) {
    EXPECT_EQ(p.size(), 10);
    EXPECT_EQ(p.num_classes, 10);
    for (double x : p.features.col(0)) seen.insert(x);
  }
  std::multiset<double> expect;
  for (int r = 0; r < 100; ++r) expect.insert(r);
  EXPECT_EQ(seen, expect);
  EXPECT_THROW(load_csv(path, Partition::iid, 101, 3), ConfigError);
}

TEST(Csv, ByLabelGivesAtMostTwoClasses) {
  std::string body;
  for (int r = 0; r < 400; ++r) body += std::to_string(r * 0.5) + "," + std::to_string(r % 10) + "\n";
  const auto parts = load_csv(write_csv("fedval_bylabel.csv", body), Partition::by_label, 10, 4);
  std::size_t total = 0;
  for (const auto& p : parts) {
    std::set<double> labels(p.labels.begin(), p.labels.end());
    EXPECT_LE(labels.size(), 2u);
    total += p.size();
  }
  EXPECT_EQ(total, 400u);
}

TEST(Csv, MalformedRowNamesLine) {
  const auto path = write_csv("fedval_bad.csv", "1,2,0\n3,oops,1\n");
  try {
    load_csv(path, Partition::iid, 1, 0);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos) << e.what();
  }
}

TEST(Noise, FeatureNoiseCountsRows) {
  const auto base = testing::ridge_clients(10, 40, 3, 1);
  std::vector<double> fractions;
  for (int i = 0; i < 10; ++i) fractions.push_back(0.05 * i);
  const auto noisy = inject_feature_noise(base, fractions, 1.0, 2);
  for (int i = 0; i < 10; ++i) {
    int changed = 0;
    for (int r = 0; r < 40; ++r) changed += noisy[i].features.row(r) != base[i].features.row(r);
    EXPECT_EQ(changed, std::lround(fractions[i] * 40)) << "client " << i;
    EXPECT_DOUBLE_EQ(noisy[i].noise_fraction, fractions[i]);
  }
  EXPECT_TRUE(same_data(noisy[0], base[0]));
  const auto silent = inject_feature_noise(base, std::vector<double>(10, 1.0), 0.0, 2);
  for (int i = 0; i < 10; ++i) EXPECT_TRUE(same_data(silent[i], base[i]));
  EXPECT_THROW(inject_feature_noise(base, std::vector<double>(10, 1.5), 1.0, 2), ConfigError);
}

TEST(Noise, LabelFlipsOnlyListedClients) {
  SyntheticSpec spec;
  spec.num_clients = 20;
  spec.samples_per_client = 50;
  spec.n_features = 4;
  const auto base = generate_synthetic(spec);
  const std::set<ClientId> noisy{1, 5, 7};
  const auto out = inject_label_noise(base, noisy, 0.3, 9);
  for (int i = 0; i < 20; ++i) {
    int flipped = 0;
    for (int r = 0; r < 50; ++r) flipped += out[i].labels[r] != base[i].labels[r];
    EXPECT_EQ(flipped, noisy.count(i) ? 15 : 0);
  }
  EXPECT_THROW(inject_label_noise(base, {20}, 0.3, 9), ConfigError);
  const auto same = inject_label_noise(base, noisy, 0.0, 9);
  EXPECT_TRUE(same_data(same[5], base[5]));
}

TEST(Noise, BinaryFullFlipInverts) {
  ClientDataset d;
  d.features = Matrix::Zero(6, 1);
  d.labels.resize(6);
  d.labels << 0, 1, 1, 0, 1, 0;
  d.num_classes = 2;
  const auto out = inject_label_noise({d}, {0}, 1.0, 1);
  EXPECT_EQ(out[0].labels, Vector((1.0 - d.labels.array()).matrix()));
}

TEST(Dataset, HoldOutAndDuplicate) {
  auto base = testing::ridge_clients(3, 10, 2, 5);
  auto [train, test] = hold_out_test(base, 0.2);
  EXPECT_EQ(test.size(), 6);
  for (const auto& t : train) EXPECT_EQ(t.size(), 8);
  make_duplicate(train, 2, 0);
  EXPECT_TRUE(same_data(train[2], train[0]));
  EXPECT_EQ(train[2].client_id, 2);
  EXPECT_EQ(train[2].duplicate_of, 0);
  EXPECT_THROW(make_duplicate(train, 1, 1), ConfigError);
}

// F(w) = w^2 / 2 as a ridge loss with no data signal.
ClientDataset quadratic_data() {
  ClientDataset d;
  d.features = Matrix::Zero(1, 1);
  d.labels = Vector::Zero(1);
  return d;
}

TEST(LocalUpdate, QuadraticStep) {
  const auto obj = LocalObjective::ridge(1, 1.0);
  const auto d = quadratic_data();
  EXPECT_NEAR(local_update(Vector::Constant(1, 1.0), obj, d, 0.1)[0], 0.9, 1e-15);
  EXPECT_EQ(local_update(Vector::Zero(1), obj, d, 0.1)[0], 0.0);
  EXPECT_THROW(local_update(Vector::Zero(1), obj, d, 0.0), ConfigError);

  FedConfig cfg;
  cfg.num_clients = 1;
  cfg.clients_per_round = 1;
  cfg.rounds = 1;
  cfg.schedule = LearningRateSchedule::constant(0.1);
  const auto tr = run_fedavg(cfg, {d}, obj, d, Vector::Constant(1, 1.0));
  EXPECT_NEAR(tr.global_models[1][0], 0.9, 1e-15);
}

TEST(FedAvg, IdenticalPairAveragesToLocal) {
  auto clients = testing::ridge_clients(2, 10, 3, 6);
  make_duplicate(clients, 1, 0);
  FedConfig cfg;
  cfg.num_clients = 2;
  cfg.clients_per_round = 2;
  cfg.rounds = 4;
  const auto obj = LocalObjective::ridge(3, 0.1);
  const auto tr = run_fedavg(cfg, clients, obj, clients[0]);
  for (int t = 0; t < 4; ++t) {
    EXPECT_EQ(tr.local_model(t, 0), tr.local_model(t, 1));
    EXPECT_LE((tr.global_models[t + 1] - tr.local_model(t, 0)).cwiseAbs().maxCoeff(), 1e-15);
  }
}

TEST(FedAvg, InverseDecayReachesCentralizedLoss) {
  auto clients = testing::ridge_clients(4, 25, 3, 7);
  const auto all = testing::pooled(clients);
  const double mu = 0.5;
  const auto obj = LocalObjective::ridge(3, mu);
  FedConfig cfg;
  cfg.num_clients = 4;
  cfg.clients_per_round = 4;
  cfg.rounds = 200;
  cfg.schedule = LearningRateSchedule::inverse_decay(mu, 8.0);
  const auto tr = run_fedavg(cfg, clients, obj, all);
  // Centralized minimizer by a long constant-step gradient descent.
  Vector w = Vector::Zero(3);
  for (int k = 0; k < 20000; ++k) w -= 0.05 * obj.gradient(w, all);
  EXPECT_LE(std::abs(tr.test_losses.back() - obj.loss(w, all)), 1e-3);
}

}  // namespace
}  // namespace fedval
