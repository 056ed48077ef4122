#include "fedval/objective.hpp"

#include <cmath>

namespace fedval {

ObjectiveKind parse_objective_kind(const std::string& name) {
  if (name == "logistic_regression" || name == "logistic") return ObjectiveKind::logistic_regression;
  if (name == "ridge_regression" || name == "ridge") return ObjectiveKind::ridge_regression;
  throw ConfigError("unknown objective '" + name + "'");
}

std::string to_string(ObjectiveKind kind) {
  return kind == ObjectiveKind::logistic_regression ? "logistic_regression" : "ridge_regression";
}

LocalObjective::LocalObjective(ObjectiveKind kind, int n_features, int n_classes, double mu)
    : kind_(kind), n_features_(n_features), n_classes_(n_classes), mu_(mu) {
  require(n_features >= 1, "objective needs at least one feature");
  require(mu >= 0.0 && std::isfinite(mu), "regularization mu must be finite and >= 0");
}

LocalObjective LocalObjective::logistic(int n_features, int n_classes, double mu) {
  require(n_classes >= 2, "logistic regression needs at least two classes");
  return LocalObjective(ObjectiveKind::logistic_regression, n_features, n_classes, mu);
}

LocalObjective LocalObjective::ridge(int n_features, double mu) {
  return LocalObjective(ObjectiveKind::ridge_regression, n_features, 0, mu);
}

Eigen::Index LocalObjective::num_params() const {
  return kind_ == ObjectiveKind::logistic_regression ? Eigen::Index{n_classes_} * (n_features_ + 1)
                                                     : Eigen::Index{n_features_};
}

void LocalObjective::check(const Vector& w, const ClientDataset& data) const {
  require(w.size() == num_params(), "weight vector has " + std::to_string(w.size()) + " entries, expected " +
                                        std::to_string(num_params()));
  require(data.dim() == n_features_, "dataset has " + std::to_string(data.dim()) + " features, objective expects " +
                                         std::to_string(n_features_));
  require(data.labels.size() == data.size(), "dataset rows and labels disagree");
}

double LocalObjective::loss(const Vector& w, const ClientDataset& data) const {
  Vector unused;
  return loss_and_gradient(w, data, unused);
}

Vector LocalObjective::gradient(const Vector& w, const ClientDataset& data) const {
  Vector grad;
  loss_and_gradient(w, data, grad);
  return grad;
}

double LocalObjective::loss_and_gradient(const Vector& w, const ClientDataset& data, Vector& grad) const {
  check(w, data);
  const Eigen::Index n = data.size();
  const double inv_n = n > 0 ? 1.0 / static_cast<double>(n) : 0.0;
  double value = 0.5 * mu_ * w.squaredNorm();
  grad = mu_ * w;

  if (kind_ == ObjectiveKind::ridge_regression) {
    if (n == 0) return value;
    const Vector residual = data.features * w - data.labels;
    value += 0.5 * inv_n * residual.squaredNorm();
    grad.noalias() += inv_n * (data.features.transpose() * residual);
    return value;
  }

  const int c = n_classes_;
  const int d = n_features_;
  Eigen::Map<const Matrix> weights(w.data(), c, d + 1);
  Eigen::Map<Matrix> grad_weights(grad.data(), c, d + 1);
  if (n == 0) return value;

  // logits: n x c
  Matrix logits = data.features * weights.leftCols(d).transpose();
  logits.rowwise() += weights.col(d).transpose();
  double nll = 0.0;
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto y = static_cast<Eigen::Index>(data.labels[r]);
    require(y >= 0 && y < c, "label " + std::to_string(y) + " outside [0," + std::to_string(c) + ")");
    const double peak = logits.row(r).maxCoeff();
    const double shifted_label_logit = logits(r, y) - peak;
    logits.row(r).array() = (logits.row(r).array() - peak).exp();
    const double z = logits.row(r).sum();
    logits.row(r) /= z;
    nll += std::log(z) - shifted_label_logit;
    logits(r, y) -= 1.0;  // now softmax - onehot
  }
  value += inv_n * nll;
  grad_weights.leftCols(d).noalias() += inv_n * (logits.transpose() * data.features);
  grad_weights.col(d) += inv_n * logits.colwise().sum().transpose();
  return value;
}

}  // namespace fedval
