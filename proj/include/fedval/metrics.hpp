#pragma once

#include <set>
#include <vector>

#include "fedval/core.hpp"

namespace fedval {

/// |a - b| / max(a, b); 0 when both are 0. Throws NumericError when the
/// larger value is negative (the ratio loses its meaning).
double relative_difference(double a, double b);
double relative_difference(const Vector& values, ClientId i, ClientId j);

/// 1-based ranks, ties sharing their average rank.
std::vector<double> average_ranks(const std::vector<double>& values);

/// Pearson correlation of the average ranks of `a` and `b`.
double spearman(const std::vector<double>& a, const std::vector<double>& b);

/// |A n B| / |A u B|; 1 when both are empty.
double jaccard(const std::set<int>& a, const std::set<int>& b);

/// Ids of the `k` smallest values; ties broken by lower id.
std::set<int> lowest_k(const Vector& values, int k);

}  // namespace fedval
