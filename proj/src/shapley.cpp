#include "fedval/shapley.hpp"

#include <algorithm>
#include <numeric>
#include <string>

namespace fedval {

std::uint64_t binomial(int n, int k) {
  require(n >= 0 && n <= 62, "binomial defined here for 0 <= n <= 62");
  if (k < 0 || k > n) return 0;
  k = std::min(k, n - k);
  std::uint64_t result = 1;
  // result * (n - k + j) / j is integral; dividing by the gcd first keeps the
  // product below C(62, 31).
  for (int j = 1; j <= k; ++j) {
    const std::uint64_t num = static_cast<std::uint64_t>(n - k + j);
    const std::uint64_t g = std::gcd(result, static_cast<std::uint64_t>(j));
    result = (result / g) * (num / (static_cast<std::uint64_t>(j) / g));
  }
  return result;
}

std::vector<double> inverse_binomial_weights(int n) {
  require(n >= 1, "need at least one client");
  std::vector<double> out(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) out[static_cast<std::size_t>(k)] = 1.0 / static_cast<double>(binomial(n - 1, k));
  return out;
}

namespace detail {
void check_enumerable(int num_clients) {
  require(num_clients >= 1, "need at least one client");
  require(num_clients <= 20,
          "exact Shapley enumeration limited to N <= 20 (got " + std::to_string(num_clients) +
              "); use the Monte-Carlo permutation estimator instead");
}
}  // namespace detail

Vector classic_shapley(int num_clients, const std::function<double(CoalitionKey)>& utility, double c) {
  detail::check_enumerable(num_clients);
  const std::uint64_t count = std::uint64_t{1} << num_clients;
  Vector values(static_cast<Eigen::Index>(count));
  for (std::uint64_t m = 0; m < count; ++m) values[static_cast<Eigen::Index>(m)] = utility(CoalitionKey(m));
  return classic_shapley(values, num_clients, c);
}

}  // namespace fedval
