#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "sapp/code_block.hpp"
#include "sapp/corpus.hpp"
#include "sapp/license.hpp"
#include "sapp/token_bag.hpp"

namespace sapp {

/// Which block's size the threshold is taken against.
enum class Denominator {
  max_size,    // ceil(theta * max(|a|, |b|)), symmetric
  query_size,  // ceil(theta * |query|); disables prefix pruning
};

struct DetectionConfig {
  double theta = 0.8;
  std::uint64_t min_tokens = 23;
  bool exclude_self_pairs = true;
  Denominator denominator = Denominator::max_size;
  /// Worker threads for detection; 0 uses the hardware concurrency.
  unsigned threads = 0;

  /// Throws ErrorKind::config unless 0 < theta <= 1 and min_tokens >= 1.
  void validate() const;
  nlohmann::json to_json() const;
  static DetectionConfig from_json(const nlohmann::json& j);
};

/// ceil(theta * size), computed so that decimal thetas like 0.7 do not pick up
/// an extra token from binary rounding. Never below 1.
std::uint64_t required_overlap(double theta, std::uint64_t size);

/// Tokens of a block of this size that must be indexed: size - required + 1.
std::uint64_t prefix_length(double theta, std::uint64_t size);

/// overlap(a, b) >= ceil(theta * max(a.total, b.total)).
bool is_clone(const TokenBag& a, const TokenBag& b, double theta);

enum class SizeClass { small, medium, large };

/// 1-10 lines small, 11-20 medium, more than 20 large.
SizeClass size_class(std::uint32_t line_count);
std::string_view to_string(SizeClass c);
SizeClass parse_size_class(std::string_view text);

/// One side of a clone pair, detached from its corpus.
struct BlockRef {
  BlockKey key;
  SourceLocator locator;
  Granularity granularity = Granularity::file;
  LicenseTag license;
  std::optional<std::int64_t> last_modified;
  std::uint64_t total_tokens = 0;
  std::string raw_text;

  static BlockRef of(const CodeBlock& b);
  friend bool operator==(const BlockRef&, const BlockRef&) = default;
};

struct ClonePair {
  BlockRef query;
  BlockRef corpus;
  std::uint64_t overlap = 0;
  std::uint64_t required = 0;
  double similarity = 0.0;
  SizeClass size = SizeClass::small;
  Verdict verdict = Verdict::unknown;

  friend bool operator==(const ClonePair&, const ClonePair&) = default;
};

/// Pair ordering: (query key, corpus key).
bool pair_less(const ClonePair& a, const ClonePair& b);

nlohmann::json to_json(const BlockRef& b);
BlockRef block_ref_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ClonePair& p);
ClonePair clone_pair_from_json(const nlohmann::json& j);

/// Token and frequency of one entry in rank space.
struct RankedEntry {
  std::uint32_t rank;
  std::uint32_t freq;
  friend bool operator==(const RankedEntry&, const RankedEntry&) = default;
};

struct Posting {
  std::uint32_t block;  // position among indexed blocks
  std::uint32_t freq;
  friend bool operator==(const Posting&, const Posting&) = default;
};

/// Everything an index consists of besides the corpus it points into.
struct IndexData {
  double theta = 0.8;
  std::uint64_t min_tokens = 23;
  std::string tokenizer_version;
  std::string corpus_hash;
  /// Dictionary in global order: ascending document frequency, then token.
  std::vector<std::string> tokens;
  /// Corpus positions of indexed blocks, ordered by block key.
  std::vector<std::uint32_t> indexed;
  /// Per indexed block: entries sorted by rank.
  std::vector<std::vector<RankedEntry>> bags;
  std::vector<std::uint64_t> sizes;
  /// Per rank: indexed blocks whose prefix contains the token.
  std::vector<std::vector<Posting>> postings;

  friend bool operator==(const IndexData&, const IndexData&) = default;
};

/// Immutable after construction; safe to query from many threads.
class InvertedIndex {
 public:
  InvertedIndex(std::shared_ptr<const Corpus> corpus, IndexData data);

  const Corpus& corpus() const { return *corpus_; }
  std::shared_ptr<const Corpus> corpus_ptr() const { return corpus_; }
  const IndexData& data() const { return data_; }
  double theta() const { return data_.theta; }
  std::uint64_t min_tokens() const { return data_.min_tokens; }
  std::size_t indexed_count() const { return data_.indexed.size(); }

  std::optional<std::uint32_t> rank_of(const std::string& token) const;
  /// Number of prefix tokens each indexed block contributed to postings
  /// (counting multiplicity).
  std::uint64_t prefix_contribution(std::size_t indexed_block) const;

 private:
  std::shared_ptr<const Corpus> corpus_;
  IndexData data_;
  std::unordered_map<std::string, std::uint32_t> rank_;
};

/// Indexes the blocks with at least config.min_tokens tokens. For a block of
/// size t the first t - ceil(theta*t) + 1 token occurrences in global order
/// go into the postings (prefix filtering).
InvertedIndex build_index(std::shared_ptr<const Corpus> corpus, const DetectionConfig& config);

/// All pairs (q, c) with is_clone true, both sides at least min_tokens, and
/// q != c when exclude_self_pairs is set. Sorted by (query key, corpus key).
/// Throws ErrorKind::config when theta differs from the index's, or
/// min_tokens is below it.
std::vector<ClonePair> detect_clones(const std::vector<CodeBlock>& query, const InvertedIndex& index,
                                     const DetectionConfig& config,
                                     const CompatibilityMatrix& matrix = CompatibilityMatrix::shipped_default());

}  // namespace sapp
