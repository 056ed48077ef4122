#include "fedval/unfairness.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "fedval/core.hpp"

namespace fedval {

namespace {

constexpr int kExactLimit = 64;

// T! / (x! y! z!) with x + y + z = T; exact in 128-bit integers up to T = 64
// (the largest value, 64! / (21! 21! 22!), is below 2^102).
double multinomial(int x, int y, int z) {
  const int total = x + y + z;
  if (total <= kExactLimit) {
    static const std::vector<std::vector<unsigned __int128>> pascal = [] {
      std::vector<std::vector<unsigned __int128>> c(kExactLimit + 1);
      for (int n = 0; n <= kExactLimit; ++n) {
        c[static_cast<std::size_t>(n)].assign(static_cast<std::size_t>(n + 1), 1);
        for (int k = 1; k < n; ++k)
          c[static_cast<std::size_t>(n)][static_cast<std::size_t>(k)] =
              c[static_cast<std::size_t>(n - 1)][static_cast<std::size_t>(k - 1)] +
              c[static_cast<std::size_t>(n - 1)][static_cast<std::size_t>(k)];
      }
      return c;
    }();
    const unsigned __int128 value = pascal[static_cast<std::size_t>(total)][static_cast<std::size_t>(x)] *
                                    pascal[static_cast<std::size_t>(total - x)][static_cast<std::size_t>(y)];
    return static_cast<double>(value);
  }
  return std::exp(std::lgamma(total + 1.0) - std::lgamma(x + 1.0) - std::lgamma(y + 1.0) - std::lgamma(z + 1.0));
}

// p^k with 0^0 = 1.
double power(double base, int k) { return k == 0 ? 1.0 : std::pow(base, k); }

double walk_term(int rounds, double p, int a, int b) {
  const int zeros = rounds - a - 2 * b;
  return multinomial(b, zeros, b + a) * power(p, 2 * b + a) * power(1.0 - 2.0 * p, zeros);
}

}  // namespace

double selection_gap_probability(int num_clients, int per_round) {
  require(num_clients >= 2, "need at least two clients");
  require(per_round >= 1 && per_round < num_clients, "need 1 <= m < N");
  return static_cast<double>(per_round) * (num_clients - per_round) /
         (static_cast<double>(num_clients) * (num_clients - 1));
}

double selection_walk_pmf(int rounds, double p, int d) {
  require(rounds >= 0, "rounds must be >= 0");
  require(p >= 0.0 && p <= 0.5, "step probability must lie in [0, 1/2]");
  const int a = std::abs(d);
  if (a > rounds) return 0.0;
  double total = 0.0;
  for (int b = 0; b <= (rounds - a) / 2; ++b) total += walk_term(rounds, p, a, b);
  return total;
}

double unfairness_probability(int rounds, int num_clients, int per_round, int s) {
  require(rounds >= 1, "rounds must be >= 1");
  require(s >= 0, "s must be >= 0");
  const double p = selection_gap_probability(num_clients, per_round);
  double total = 0.0;
  for (int a = s; a <= rounds; ++a)
    for (int b = 0; b <= (rounds - a) / 2; ++b) total += walk_term(rounds, p, a, b);
  return total;
}

}  // namespace fedval
