#pragma once

#include <bit>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fedval/core.hpp"

namespace fedval {

/// A set of clients encoded as a bitmask (bit i set iff client i is a member).
/// Equal member sets always produce equal keys, so coalitions reached through
/// different permutations deduplicate naturally.
class CoalitionKey {
 public:
  static constexpr int kMaxClients = 62;

  constexpr CoalitionKey() = default;
  constexpr explicit CoalitionKey(std::uint64_t mask) : mask_(mask) {}

  static CoalitionKey of(const std::vector<ClientId>& members);
  static constexpr CoalitionKey empty() { return CoalitionKey(0); }
  static CoalitionKey all(int num_clients);

  constexpr std::uint64_t mask() const { return mask_; }
  int size() const { return std::popcount(mask_); }
  bool is_empty() const { return mask_ == 0; }
  bool contains(ClientId i) const { return (mask_ >> i) & 1u; }
  bool subset_of(CoalitionKey other) const { return (mask_ & ~other.mask_) == 0; }

  CoalitionKey with(ClientId i) const { return CoalitionKey(mask_ | (std::uint64_t{1} << i)); }
  CoalitionKey without(ClientId i) const { return CoalitionKey(mask_ & ~(std::uint64_t{1} << i)); }

  /// Members in ascending order.
  std::vector<ClientId> members() const;

  /// Lowercase hex without prefix, e.g. "1f".
  std::string hex() const;
  static CoalitionKey from_hex(const std::string& text);

  friend constexpr bool operator==(CoalitionKey a, CoalitionKey b) = default;
  friend constexpr auto operator<=>(CoalitionKey a, CoalitionKey b) = default;

 private:
  std::uint64_t mask_ = 0;
};

}  // namespace fedval

template <>
struct std::hash<fedval::CoalitionKey> {
  std::size_t operator()(fedval::CoalitionKey k) const noexcept {
    return std::hash<std::uint64_t>{}(k.mask());
  }
};
