#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "fedval/coalition.hpp"
#include "fedval/core.hpp"
#include "fedval/utility.hpp"

namespace fedval {

struct CompletionConfig {
  int rank = 3;
  double lambda = 0.05;
  int max_iterations = 500;
  double tolerance = 1e-6;  // relative objective decrease per iteration
  double init_scale = 0.1;
  std::uint64_t seed = 0;

  void validate(int rows, int columns) const;
};

/// W (rounds x r) and H (coalitions x r) with WH^T approximating the utility
/// matrix. Row k of H belongs to column_keys[k].
struct FactorPair {
  Matrix W;
  Matrix H;
  std::vector<CoalitionKey> column_keys;
  /// Objective at initialisation and after every half-step (row update, then
  /// column update), so it has 1 + 2 * iterations entries.
  std::vector<double> objective_trace;
  int iterations = 0;
  bool converged = false;

  FactorPair() = default;
  FactorPair(Matrix w, Matrix h, std::vector<CoalitionKey> keys);

  std::optional<Eigen::Index> row_of(CoalitionKey key) const;
  /// h_S; throws ConfigError when the coalition has no row.
  Vector h(CoalitionKey key) const;
  double final_objective() const { return objective_trace.empty() ? 0.0 : objective_trace.back(); }

 private:
  std::unordered_map<CoalitionKey, Eigen::Index> row_of_;
};

/// Regularised factorisation
///   min sum_{(t,S) observed} (U_tS - w_t . h_S)^2 + lambda (||W||_F^2 + ||H||_F^2)
/// solved by alternating exact ridge solves over the rows of W and H.
class CompletionProblem {
 public:
  CompletionProblem(const UtilityMatrix& matrix, double lambda);

  int rows() const { return rows_; }
  int columns() const { return columns_; }
  double lambda() const { return lambda_; }

  double objective(const Matrix& W, const Matrix& H) const;
  /// Minimises over W with H fixed. Rows without observations become zero.
  void update_rows(Matrix& W, const Matrix& H) const;
  /// Minimises over H with W fixed.
  void update_columns(const Matrix& W, Matrix& H) const;

 private:
  struct Observation {
    int other;
    double value;
  };
  int rows_;
  int columns_;
  double lambda_;
  std::vector<std::vector<Observation>> by_row_;
  std::vector<std::vector<Observation>> by_column_;
};

FactorPair solve(const UtilityMatrix& matrix, const CompletionConfig& config);

/// Maximum absolute column sum of (X - W H^T), i.e. its induced 1-norm.
template <typename Derived>
double max_abs_column_sum(const Eigen::MatrixBase<Derived>& x) {
  if (x.cols() == 0 || x.rows() == 0) return 0.0;
  return static_cast<double>(x.cwiseAbs().colwise().sum().maxCoeff());
}

/// ||U - W H^T||_1 against a fully observed utility matrix.
double delta_completedness(const UtilityMatrix& full, const FactorPair& factors);

/// Reconstruction W H^T laid out along the matrix's columns.
Matrix reconstruct(const UtilityMatrix& matrix, const FactorPair& factors);

/// Candidate rank with the lowest held-out relative error on an 80/20 split
/// of the fully observed matrix; ranks within 1% of the best resolve to the
/// smallest.
int choose_rank(const UtilityMatrix& full, const std::vector<int>& candidate_ranks, const CompletionConfig& base);

void save_factors(const FactorPair& factors, const std::string& dir);

}  // namespace fedval
