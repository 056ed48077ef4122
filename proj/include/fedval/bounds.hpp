#pragma once

#include <vector>

#include "fedval/core.hpp"
#include "fedval/dataset.hpp"
#include "fedval/fedavg.hpp"
#include "fedval/objective.hpp"
#include "json.hpp"

namespace fedval {

struct SmoothnessParams {
  enum class Source { user_supplied, empirically_estimated };

  double L1 = 1.0;  // Lipschitz constant of the loss
  double L2 = 1.0;  // gradient Lipschitz constant
  double mu = 0.0;  // strong convexity
  Source source = Source::user_supplied;

  void validate() const;
  nlohmann::json to_json() const;
};

/// Empirical constants along a training trace. L1 is the largest of the
/// loss-difference ratios between sampled trace points and the gradient norms
/// seen there; L2 and mu are the largest and smallest gradient-difference
/// curvatures. For ridge objectives L2 and mu come from the exact Hessian
/// spectrum of each loss instead. Losses considered: every client's local
/// loss and the test loss. Used for plausibility checks, not proofs.
SmoothnessParams estimate_smoothness(const TrainingTrace& trace, const LocalObjective& objective,
                                     const std::vector<ClientDataset>& datasets, const ClientDataset& test_set,
                                     int max_points = 40);

/// ceil(((2 + eta^1 L2) L1 sum_t |w^t - w^{t+1}| + (eta^1 - eta^T) L1^2) / epsilon)
/// with the trace's global path length and learning rates.
long long prop1_bound(const TrainingTrace& trace, const SmoothnessParams& params, double epsilon);

/// ceil(2 (2 + eta^1 L2) L1 ln T / (mu epsilon) + (eta^1 - eta^T) L1^2 / epsilon)
/// for eta^t = 2 / (mu (gamma + t)). gamma <= 0 selects max(8 mu / L2, 1).
/// `rounds` is real so the closed form can be probed between integers.
long long prop2_bound(double rounds, const SmoothnessParams& params, double epsilon, double gamma = 0.0);

/// Euclidean path length sum_{t=1}^{T-1} |w^t - w^{t+1}| over the global
/// models that start a round.
double path_length(const TrainingTrace& trace);

}  // namespace fedval
