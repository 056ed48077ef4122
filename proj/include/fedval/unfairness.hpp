#pragma once

namespace fedval {

/// Probability that a fixed client is selected and another fixed client is
/// not, when m of N clients are drawn uniformly: m (N - m) / (N (N - 1)).
double selection_gap_probability(int num_clients, int per_round);

/// Probability that the per-round selection gap between two identical
/// clients accumulates to at least s in one direction over T rounds, where
/// each round contributes +1 or -1 with probability p each and 0 otherwise:
///   sum_{a=s}^{T} sum_{b=0}^{floor((T-a)/2)} T! / (b! (T-a-2b)! (b+a)!)
///       p^{2b+a} (1-2p)^{T-a-2b}.
/// Lower-bounds the chance that FedSV separates the pair by s units.
double unfairness_probability(int rounds, int num_clients, int per_round, int s);

/// Point mass P(sum = d) of the same trinomial walk, for d in [-T, T].
double selection_walk_pmf(int rounds, double p, int d);

}  // namespace fedval
