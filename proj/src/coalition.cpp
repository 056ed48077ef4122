#include "fedval/coalition.hpp"

#include <cstdio>

namespace fedval {

CoalitionKey CoalitionKey::of(const std::vector<ClientId>& members) {
  std::uint64_t mask = 0;
  for (ClientId i : members) {
    require(i >= 0 && i < kMaxClients, "client id out of range for coalition key: " + std::to_string(i));
    mask |= std::uint64_t{1} << i;
  }
  return CoalitionKey(mask);
}

CoalitionKey CoalitionKey::all(int num_clients) {
  require(num_clients >= 0 && num_clients <= kMaxClients, "coalition keys support at most 62 clients");
  return CoalitionKey((std::uint64_t{1} << num_clients) - 1);
}

std::vector<ClientId> CoalitionKey::members() const {
  std::vector<ClientId> out;
  out.reserve(size());
  for (std::uint64_t m = mask_; m != 0; m &= m - 1) out.push_back(std::countr_zero(m));
  return out;
}

std::string CoalitionKey::hex() const {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%llx", static_cast<unsigned long long>(mask_));
  return buf;
}

CoalitionKey CoalitionKey::from_hex(const std::string& text) {
  require(!text.empty() && text.size() <= 16, "bad coalition key '" + text + "'");
  std::size_t pos = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(text, &pos, 16);
  } catch (const std::exception&) {
    pos = 0;
  }
  require(pos == text.size(), "bad coalition key '" + text + "'");
  return CoalitionKey(v);
}

}  // namespace fedval
