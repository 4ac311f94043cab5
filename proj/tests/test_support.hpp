#pragma once

#include <unistd.h>

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "sapp/code_block.hpp"
#include "sapp/corpus.hpp"
#include "sapp/util.hpp"

namespace testing {

/// Directory removed on scope exit.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("sapp-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  std::filesystem::path path_;
};

inline void write(const std::filesystem::path& p, const std::string& text) {
  std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  out << text;
}

inline std::filesystem::path fixture_dir() { return SAPP_FIXTURE_DIR; }

/// Block built straight from a token multiset; line span chosen by the caller.
inline sapp::CodeBlock make_block(const std::string& corpus_id, std::uint64_t id,
                                  const std::map<std::string, std::uint32_t>& bag, std::uint32_t lines = 5,
                                  const std::string& license = "MIT") {
  sapp::CodeBlock b;
  b.corpus_id = corpus_id;
  b.block_id = id;
  b.locator.path = corpus_id + "/b" + std::to_string(id) + ".py";
  b.locator.start_line = 1;
  b.locator.end_line = lines;
  for (const auto& [t, n] : bag) b.tokens.add(t, n);
  b.license.id = license;
  return b;
}

/// Unordered identity of a result pair, independent of the engine's types.
using PairKey = std::tuple<std::string, std::uint64_t, std::string, std::uint64_t>;

/// Independent brute force: for theta = k/10 the threshold is the exact
/// rational ceiling (k*t + 9) / 10, and overlap is recomputed from counts.
inline std::set<PairKey> brute_force(const std::vector<sapp::CodeBlock>& query,
                                     const std::vector<sapp::CodeBlock>& corpus, int theta_tenths,
                                     std::uint64_t min_tokens, bool exclude_self) {
  auto counts = [](const sapp::CodeBlock& b) {
    std::map<std::string, std::uint64_t> m;
    std::uint64_t total = 0;
    for (const auto& [t, n] : b.tokens.entries()) {
      m[t] += n;
      total += n;
    }
    return std::pair{m, total};
  };
  std::set<PairKey> out;
  for (const auto& q : query) {
    const auto [qm, qt] = counts(q);
    if (qt < min_tokens) continue;
    for (const auto& c : corpus) {
      const auto [cm, ct] = counts(c);
      if (ct < min_tokens) continue;
      if (exclude_self && q.corpus_id == c.corpus_id && q.block_id == c.block_id) continue;
      std::uint64_t shared = 0;
      for (const auto& [t, n] : qm) {
        auto it = cm.find(t);
        if (it != cm.end()) shared += std::min(n, it->second);
      }
      const std::uint64_t big = std::max(qt, ct);
      const std::uint64_t required = std::max<std::uint64_t>(1, (theta_tenths * big + 9) / 10);
      if (shared >= required) out.insert({q.corpus_id, q.block_id, c.corpus_id, c.block_id});
    }
  }
  return out;
}

/// Random corpus with planted near-duplicates so that clone pairs exist at
/// every threshold. Totals fall in [lo, hi].
inline std::vector<sapp::CodeBlock> random_blocks(std::mt19937_64& rng, const std::string& corpus_id,
                                                  std::size_t count, std::uint64_t lo, std::uint64_t hi,
                                                  std::vector<sapp::CodeBlock>* seeds = nullptr) {
  std::vector<sapp::CodeBlock> out;
  const int vocab = 40;
  auto token = [&](std::mt19937_64& r) {
    // Skewed vocabulary: low ids are common, high ids rare.
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double x = u(r);
    return "t" + std::to_string(static_cast<int>(x * x * vocab));
  };
  for (std::size_t i = 0; i < count; ++i) {
    std::map<std::string, std::uint32_t> bag;
    const bool have_seeds = seeds != nullptr && !seeds->empty();
    const bool derive = (have_seeds || !out.empty()) && rng() % 3 != 0;
    if (derive) {
      const bool from_seeds = have_seeds && (out.empty() || rng() % 2 == 0);
      const auto& pool = from_seeds ? *seeds : out;
      const auto& base = pool[rng() % pool.size()];
      std::vector<std::string> flat;
      for (const auto& [t, n] : base.tokens.entries()) flat.insert(flat.end(), n, t);
      // Replace, drop or add up to ~30% of the tokens.
      const std::size_t edits = rng() % (flat.size() * 3 / 10 + 1);
      for (std::size_t e = 0; e < edits; ++e) {
        const auto kind = rng() % 3;
        if (kind == 0 && !flat.empty()) flat[rng() % flat.size()] = token(rng);
        else if (kind == 1 && flat.size() > lo) flat.erase(flat.begin() + static_cast<long>(rng() % flat.size()));
        else if (flat.size() < hi) flat.push_back(token(rng));
      }
      for (const auto& t : flat) ++bag[t];
    } else {
      const std::uint64_t total = lo + rng() % (hi - lo + 1);
      for (std::uint64_t k = 0; k < total; ++k) ++bag[token(rng)];
    }
    out.push_back(make_block(corpus_id, i + 1, bag, 1 + static_cast<std::uint32_t>(rng() % 30)));
  }
  return out;
}

}  // namespace testing
