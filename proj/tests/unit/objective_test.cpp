#include <gtest/gtest.h>

#include <cmath>

#include "fedval/objective.hpp"
#include "helpers.hpp"

namespace fedval {
namespace {

// Central differences against the analytic gradient, one coordinate per probe.
void check_gradient(const LocalObjective& obj, const ClientDataset& data, std::uint64_t seed, int probes) {
  Rng rng = make_rng(seed);
  std::normal_distribution<double> normal(0.0, 0.5);
  std::uniform_int_distribution<Eigen::Index> coord(0, obj.num_params() - 1);
  const double h = 1e-5;
  int checked = 0;
  while (checked < probes) {
    Vector w(obj.num_params());
    for (Eigen::Index k = 0; k < w.size(); ++k) w[k] = normal(rng);
    const Vector g = obj.gradient(w, data);
    for (int rep = 0; rep < 10; ++rep, ++checked) {
      const Eigen::Index k = coord(rng);
      Vector up = w, down = w;
      up[k] += h;
      down[k] -= h;
      const double fd = (obj.loss(up, data) - obj.loss(down, data)) / (2 * h);
      EXPECT_LE(std::abs(fd - g[k]), 1e-5 * std::max(1.0, std::abs(g[k]))) << "coordinate " << k;
    }
  }
}

ClientDataset classification_data(int rows, int dim, int classes, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<int> label(0, classes - 1);
  ClientDataset d;
  d.features.resize(rows, dim);
  d.labels.resize(rows);
  d.num_classes = classes;
  for (int r = 0; r < rows; ++r) {
    for (int k = 0; k < dim; ++k) d.features(r, k) = normal(rng);
    d.labels[r] = label(rng);
  }
  return d;
}

TEST(Objective, LogisticGradientMatchesFiniteDifferences) {
  const auto data = classification_data(40, 5, 4, 1);
  check_gradient(LocalObjective::logistic(5, 4, 0.01), data, 2, 120);
}

TEST(Objective, RidgeGradientMatchesFiniteDifferences) {
  const auto data = testing::ridge_clients(1, 30, 6, 3).front();
  check_gradient(LocalObjective::ridge(6, 0.2), data, 4, 120);
}

TEST(Objective, LogisticAtZeroIsLogClasses) {
  const auto data = classification_data(25, 3, 5, 5);
  const auto obj = LocalObjective::logistic(3, 5, 0.0);
  EXPECT_NEAR(obj.loss(Vector::Zero(obj.num_params()), data), std::log(5.0), 1e-12);
}

TEST(Objective, LogisticStableForHugeLogits) {
  const auto data = classification_data(10, 2, 3, 6);
  const auto obj = LocalObjective::logistic(2, 3, 0.0);
  const Vector w = Vector::Constant(obj.num_params(), 400.0);
  EXPECT_TRUE(std::isfinite(obj.loss(w, data)));
  EXPECT_TRUE(obj.gradient(w, data).allFinite());
}

TEST(Objective, LossAndGradientAgree) {
  const auto data = classification_data(20, 4, 3, 7);
  const auto obj = LocalObjective::logistic(4, 3, 0.05);
  const Vector w = Vector::LinSpaced(obj.num_params(), -1, 1);
  Vector g;
  const double l = obj.loss_and_gradient(w, data, g);
  EXPECT_DOUBLE_EQ(l, obj.loss(w, data));
  EXPECT_TRUE(g.isApprox(obj.gradient(w, data)));
}

TEST(Objective, RejectsMismatchedShapes) {
  const auto data = testing::ridge_clients(1, 5, 3, 8).front();
  const auto obj = LocalObjective::ridge(4, 0.1);
  EXPECT_THROW(obj.loss(Vector::Zero(4), data), ConfigError);
}

}  // namespace
}  // namespace fedval
