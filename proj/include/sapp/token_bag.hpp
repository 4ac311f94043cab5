#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <string_view>

namespace sapp {

/// Multiset of normalized tokens. Iteration order is lexicographic by token.
class TokenBag {
 public:
  using Entries = std::map<std::string, std::uint32_t, std::less<>>;

  TokenBag() = default;

  void add(std::string_view token, std::uint32_t count = 1);
  /// Adds every entry of other.
  void merge(const TokenBag& other);

  std::uint32_t count(std::string_view token) const;
  std::uint64_t total() const { return total_; }
  std::size_t distinct() const { return entries_.size(); }
  bool empty() const { return total_ == 0; }
  const Entries& entries() const { return entries_; }

  /// True when every token's count here is ≤ its count in other.
  bool is_submultiset_of(const TokenBag& other) const;

  friend bool operator==(const TokenBag& a, const TokenBag& b) {
    return a.total_ == b.total_ && a.entries_ == b.entries_;
  }

 private:
  Entries entries_;
  std::uint64_t total_ = 0;
};

/// Σ over shared tokens of min(freq_a, freq_b).
std::uint64_t overlap(const TokenBag& a, const TokenBag& b);

}  // namespace sapp
