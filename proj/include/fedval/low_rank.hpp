#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/SVD>

#include "fedval/core.hpp"

namespace fedval {

/// Singular values in descending order.
template <typename Derived>
Vector singular_values(const Eigen::MatrixBase<Derived>& x) {
  if (x.size() == 0) return Vector();
  Eigen::JacobiSVD<Matrix> svd(x.derived().template cast<double>());
  return svd.singularValues();
}

/// Fraction of squared Frobenius mass carried by the top `k` singular values.
template <typename Derived>
double energy_fraction(const Eigen::MatrixBase<Derived>& x, int k) {
  const Vector s = singular_values(x);
  const double total = s.squaredNorm();
  if (total == 0.0) return 1.0;
  const auto take = std::min<Eigen::Index>(std::max(k, 0), s.size());
  return s.head(take).squaredNorm() / total;
}

/// Certified upper bound on the epsilon-rank (smallest rank of a matrix within
/// epsilon of X in the entrywise max norm). Minimum of
///  (a) the smallest k whose truncated SVD X_k has |X - X_k|_max <= epsilon;
///  (b) the number of groups when consecutive rows are grouped greedily while
///      each stays within epsilon (max norm) of the group's first row.
template <typename Derived>
int epsilon_rank_upper(const Eigen::MatrixBase<Derived>& x, double epsilon) {
  require(epsilon > 0.0, "epsilon must be > 0");
  const Matrix m = x.derived().template cast<double>();
  if (!m.allFinite()) throw NumericError("epsilon_rank_upper: matrix has non-finite entries");
  if (m.size() == 0 || m.cwiseAbs().maxCoeff() <= epsilon) return 0;

  // (b) row grouping; rows within epsilon of zero need no representative.
  int groups = 0;
  Eigen::Index start = 0;
  while (start < m.rows()) {
    Eigen::Index end = start + 1;
    while (end < m.rows() && (m.row(end) - m.row(start)).cwiseAbs().maxCoeff() <= epsilon) ++end;
    bool all_small = true;
    for (Eigen::Index r = start; r < end && all_small; ++r) all_small = m.row(r).cwiseAbs().maxCoeff() <= epsilon;
    if (!all_small) ++groups;
    start = end;
  }

  // (a) truncated SVD, growing k until the max-norm residual fits.
  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  Matrix approx = Matrix::Zero(m.rows(), m.cols());
  int svd_rank = static_cast<int>(s.size());
  for (Eigen::Index k = 0; k < s.size() && k < groups; ++k) {
    approx.noalias() += s[k] * svd.matrixU().col(k) * svd.matrixV().col(k).transpose();
    if ((m - approx).cwiseAbs().maxCoeff() <= epsilon) {
      svd_rank = static_cast<int>(k + 1);
      break;
    }
  }
  return std::min(groups, svd_rank);
}

}  // namespace fedval
