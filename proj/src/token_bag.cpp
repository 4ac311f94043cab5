#include "sapp/token_bag.hpp"

#include <algorithm>

namespace sapp {

void TokenBag::add(std::string_view token, std::uint32_t count) {
  if (count == 0) return;
  total_ += count;
  // Sorted input (deserialization, merges) appends at the end.
  if (entries_.empty() || entries_.rbegin()->first < token) {
    entries_.emplace_hint(entries_.end(), std::string(token), count);
    return;
  }
  auto it = entries_.find(token);
  if (it == entries_.end()) {
    entries_.emplace(std::string(token), count);
  } else {
    it->second += count;
  }
}

void TokenBag::merge(const TokenBag& other) {
  for (const auto& [token, n] : other.entries_) add(token, n);
}

std::uint32_t TokenBag::count(std::string_view token) const {
  auto it = entries_.find(token);
  return it == entries_.end() ? 0 : it->second;
}

bool TokenBag::is_submultiset_of(const TokenBag& other) const {
  return std::all_of(entries_.begin(), entries_.end(),
                     [&](const auto& e) { return e.second <= other.count(e.first); });
}

std::uint64_t overlap(const TokenBag& a, const TokenBag& b) {
  // Merge walk over the two sorted entry maps.
  std::uint64_t sum = 0;
  auto ia = a.entries().begin();
  auto ib = b.entries().begin();
  while (ia != a.entries().end() && ib != b.entries().end()) {
    const int cmp = ia->first.compare(ib->first);
    if (cmp < 0) {
      ++ia;
    } else if (cmp > 0) {
      ++ib;
    } else {
      sum += std::min(ia->second, ib->second);
      ++ia;
      ++ib;
    }
  }
  return sum;
}

}  // namespace sapp
