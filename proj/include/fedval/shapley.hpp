#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "fedval/coalition.hpp"
#include "fedval/core.hpp"

namespace fedval {

/// Exact C(n, k) for n <= 62.
std::uint64_t binomial(int n, int k);

/// weights[k] = 1 / C(n - 1, k) for k = 0..n-1.
std::vector<double> inverse_binomial_weights(int n);

/// v(i) = c * sum_{S subset of I \ {i}} [U(S + i) - U(S)] / C(N-1, |S|)
/// where set_values[mask] = U(coalition with that bitmask), so it has 2^N
/// entries. c = 1/N gives the standard Shapley value.
template <typename Derived>
Vector classic_shapley(const Eigen::DenseBase<Derived>& set_values, int num_clients, double c);

/// Same, evaluating U on all 2^N coalitions. Throws ConfigError for N > 20,
/// where sampled permutations should be used instead.
Vector classic_shapley(int num_clients, const std::function<double(CoalitionKey)>& utility, double c);

// -- implementation ----------------------------------------------------------

namespace detail {
void check_enumerable(int num_clients);
}

template <typename Derived>
Vector classic_shapley(const Eigen::DenseBase<Derived>& set_values, int num_clients, double c) {
  detail::check_enumerable(num_clients);
  const std::uint64_t count = std::uint64_t{1} << num_clients;
  require(static_cast<std::uint64_t>(set_values.size()) == count, "set function must have 2^N values");
  const std::vector<double> weight = inverse_binomial_weights(num_clients);
  Vector out = Vector::Zero(num_clients);
  for (int i = 0; i < num_clients; ++i) {
    const std::uint64_t bit = std::uint64_t{1} << i;
    double acc = 0.0;
    for (std::uint64_t m = 0; m < count; ++m) {
      if (m & bit) continue;
      const auto size = static_cast<std::size_t>(CoalitionKey(m).size());
      acc += weight[size] * (static_cast<double>(set_values[static_cast<Eigen::Index>(m | bit)]) -
                             static_cast<double>(set_values[static_cast<Eigen::Index>(m)]));
    }
    out[i] = c * acc;
  }
  return out;
}

}  // namespace fedval
