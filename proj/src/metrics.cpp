#include "fedval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace fedval {

double relative_difference(double a, double b) {
  const double top = std::max(a, b);
  if (a == 0.0 && b == 0.0) return 0.0;
  if (top <= 0.0)
    throw NumericError("relative difference undefined for non-positive values (" + std::to_string(a) + ", " +
                       std::to_string(b) + ")");
  return std::abs(a - b) / top;
}

double relative_difference(const Vector& values, ClientId i, ClientId j) {
  require(i >= 0 && j >= 0 && i < values.size() && j < values.size(), "client id out of range");
  return relative_difference(values[i], values[j]);
}

std::vector<double> average_ranks(const std::vector<double>& values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return values[x] < values[y]; });
  std::vector<double> ranks(n);
  std::size_t k = 0;
  while (k < n) {
    std::size_t end = k + 1;
    while (end < n && values[order[end]] == values[order[k]]) ++end;
    const double rank = (static_cast<double>(k + 1) + static_cast<double>(end)) / 2.0;
    for (std::size_t q = k; q < end; ++q) ranks[order[q]] = rank;
    k = end;
  }
  return ranks;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  require(a.size() == b.size(), "spearman: length mismatch");
  require(a.size() >= 2, "spearman needs at least two items");
  const std::vector<double> ra = average_ranks(a);
  const std::vector<double> rb = average_ranks(b);
  const Eigen::Map<const Vector> x(ra.data(), static_cast<Eigen::Index>(ra.size()));
  const Eigen::Map<const Vector> y(rb.data(), static_cast<Eigen::Index>(rb.size()));
  const Vector cx = x.array() - x.mean();
  const Vector cy = y.array() - y.mean();
  const double denom = std::sqrt(cx.squaredNorm() * cy.squaredNorm());
  if (denom == 0.0) throw NumericError("spearman undefined for constant input");
  return cx.dot(cy) / denom;
}

double jaccard(const std::set<int>& a, const std::set<int>& b) {
  if (a.empty() && b.empty()) return 1.0;
  std::size_t common = 0;
  for (int x : a) common += b.count(x);
  return static_cast<double>(common) / static_cast<double>(a.size() + b.size() - common);
}

std::set<int> lowest_k(const Vector& values, int k) {
  require(k >= 0 && k <= values.size(), "k out of range");
  std::vector<int> ids(static_cast<std::size_t>(values.size()));
  std::iota(ids.begin(), ids.end(), 0);
  std::stable_sort(ids.begin(), ids.end(), [&](int x, int y) { return values[x] < values[y]; });
  return {ids.begin(), ids.begin() + k};
}

}  // namespace fedval
