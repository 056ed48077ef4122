#pragma once

#include <string>

#include "fedval/core.hpp"
#include "fedval/dataset.hpp"

namespace fedval {

enum class ObjectiveKind { logistic_regression, ridge_regression };

ObjectiveKind parse_objective_kind(const std::string& name);
std::string to_string(ObjectiveKind kind);

/// Differentiable loss l(w; D) shared by every client and the test set.
///
/// Weights are a flat vector. For logistic regression it packs the
/// (n_classes x (n_features + 1)) matrix of class weights and intercepts in
/// column-major order, intercepts in the last column. Ridge regression has no
/// intercept. Both add (mu / 2) * ||w||^2.
class LocalObjective {
 public:
  static LocalObjective logistic(int n_features, int n_classes, double mu);
  static LocalObjective ridge(int n_features, double mu);

  ObjectiveKind kind() const { return kind_; }
  double mu() const { return mu_; }
  int n_features() const { return n_features_; }
  int n_classes() const { return n_classes_; }
  Eigen::Index num_params() const;

  double loss(const Vector& w, const ClientDataset& data) const;
  Vector gradient(const Vector& w, const ClientDataset& data) const;
  double loss_and_gradient(const Vector& w, const ClientDataset& data, Vector& grad) const;

 private:
  LocalObjective(ObjectiveKind kind, int n_features, int n_classes, double mu);
  void check(const Vector& w, const ClientDataset& data) const;

  ObjectiveKind kind_;
  int n_features_;
  int n_classes_;
  double mu_;
};

}  // namespace fedval
