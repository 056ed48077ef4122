#include "fedval/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>

namespace fedval {

void SmoothnessParams::validate() const {
  require(std::isfinite(L1) && L1 > 0.0, "L1 must be > 0");
  require(std::isfinite(L2) && L2 > 0.0, "L2 must be > 0");
  require(mu >= 0.0 && mu <= L2 * (1.0 + 1e-12), "mu must satisfy 0 <= mu <= L2");
}

nlohmann::json SmoothnessParams::to_json() const {
  return {{"L1", L1},
          {"L2", L2},
          {"mu", mu},
          {"source", source == Source::user_supplied ? "user_supplied" : "empirically_estimated"}};
}

double path_length(const TrainingTrace& trace) {
  double total = 0.0;
  // Models that start a round; the final aggregate does not index any row.
  const std::size_t starts = std::min(trace.global_models.size(), static_cast<std::size_t>(trace.rounds()));
  for (std::size_t t = 0; t + 1 < starts; ++t)
    total += (trace.global_models[t] - trace.global_models[t + 1]).norm();
  return total;
}

SmoothnessParams estimate_smoothness(const TrainingTrace& trace, const LocalObjective& objective,
                                     const std::vector<ClientDataset>& datasets, const ClientDataset& test_set,
                                     int max_points) {
  require(max_points >= 2, "need at least two sample points");
  std::vector<Vector> points;
  for (const auto& w : trace.global_models) points.push_back(w);
  for (const auto& round : trace.local_models)
    for (const auto& [id, w] : round) points.push_back(w);
  require(points.size() >= 2, "trace has fewer than two models");
  if (static_cast<int>(points.size()) > max_points) {
    std::vector<Vector> thinned;
    const double stride = static_cast<double>(points.size() - 1) / (max_points - 1);
    for (int k = 0; k < max_points; ++k)
      thinned.push_back(points[static_cast<std::size_t>(std::lround(k * stride))]);
    points = std::move(thinned);
  }

  std::vector<const ClientDataset*> losses{&test_set};
  for (const auto& d : datasets) losses.push_back(&d);

  double l1 = 0.0;
  double l2 = 0.0;
  double mu = std::numeric_limits<double>::infinity();
  for (const ClientDataset* data : losses) {
    std::vector<double> values;
    std::vector<Vector> grads;
    for (const auto& w : points) {
      Vector grad;
      values.push_back(objective.loss_and_gradient(w, *data, grad));
      l1 = std::max(l1, grad.norm());
      grads.push_back(std::move(grad));
    }
    for (std::size_t a = 0; a < points.size(); ++a)
      for (std::size_t b = a + 1; b < points.size(); ++b) {
        const Vector dx = points[a] - points[b];
        const double dist = dx.norm();
        if (dist < 1e-12) continue;
        l1 = std::max(l1, std::abs(values[a] - values[b]) / dist);
        const Vector dg = grads[a] - grads[b];
        l2 = std::max(l2, dg.norm() / dist);
        mu = std::min(mu, dg.dot(dx) / (dist * dist));
      }
    if (objective.kind() == ObjectiveKind::ridge_regression && data->size() > 0) {
      const Matrix gram = data->features.transpose() * data->features / static_cast<double>(data->size());
      Eigen::SelfAdjointEigenSolver<Matrix> eig(gram, Eigen::EigenvaluesOnly);
      l2 = std::max(l2, eig.eigenvalues().maxCoeff() + objective.mu());
      mu = std::min(mu, eig.eigenvalues().minCoeff() + objective.mu());
    }
  }

  SmoothnessParams out;
  out.source = SmoothnessParams::Source::empirically_estimated;
  out.L1 = l1 > 0.0 ? l1 : 1e-12;
  out.L2 = l2 > 0.0 ? l2 : 1e-12;
  out.mu = std::isfinite(mu) ? std::clamp(mu, 0.0, out.L2) : 0.0;
  return out;
}

namespace {

long long ceil_bound(double value) {
  if (!std::isfinite(value)) throw NumericError("bound evaluated to a non-finite value");
  // Absorb rounding noise so that exact integers are not bumped up.
  return static_cast<long long>(std::ceil(value - 1e-12 * std::max(1.0, std::abs(value))));
}

}  // namespace

long long prop1_bound(const TrainingTrace& trace, const SmoothnessParams& params, double epsilon) {
  params.validate();
  require(epsilon > 0.0, "epsilon must be > 0");
  require(trace.global_models.size() >= 2 && !trace.learning_rates.empty(), "trace needs at least two global models");
  for (std::size_t t = 0; t + 1 < trace.learning_rates.size(); ++t)
    if (trace.learning_rates[t + 1] > trace.learning_rates[t])
      throw NumericError("learning rates increase at round " + std::to_string(t + 1) +
                         "; the bound assumes a non-increasing schedule");
  const double eta_first = trace.learning_rates.front();
  const double eta_last = trace.learning_rates.back();
  const double numerator = (2.0 + eta_first * params.L2) * params.L1 * path_length(trace) +
                           (eta_first - eta_last) * params.L1 * params.L1;
  return ceil_bound(numerator / epsilon);
}

long long prop2_bound(double rounds, const SmoothnessParams& params, double epsilon, double gamma) {
  params.validate();
  require(epsilon > 0.0, "epsilon must be > 0");
  require(rounds >= 1.0, "need at least one round");
  if (params.mu <= 0.0) throw NumericError("the log(T) bound needs a strongly convex loss (mu > 0)");
  if (gamma <= 0.0) gamma = std::max(8.0 * params.mu / params.L2, 1.0);
  const double eta_first = 2.0 / (params.mu * (gamma + 1.0));
  const double eta_last = 2.0 / (params.mu * (gamma + rounds));
  const double value = 2.0 * (2.0 + eta_first * params.L2) * params.L1 * std::log(rounds) /
                           (params.mu * epsilon) +
                       (eta_first - eta_last) * params.L1 * params.L1 / epsilon;
  return ceil_bound(value);
}

}  // namespace fedval
