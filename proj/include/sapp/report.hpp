#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "sapp/clone_engine.hpp"
#include "sapp/corpus.hpp"

namespace sapp {

/// Pair counts per verdict; conflicts split by the license of the side that
/// is not a StackExchange post (the query side when neither or both are).
struct LicenseStats {
  std::uint64_t total = 0;
  std::map<std::string, std::uint64_t> conflicts;
  std::uint64_t compatible = 0;
  std::uint64_t lack_of_licensing = 0;
  std::uint64_t unknown = 0;

  struct Row {
    std::string label;
    std::uint64_t count;
    std::string percent;  // "75.00"
  };
  /// Total row first, conflicts by descending count (then id), then the rest.
  std::vector<Row> rows() const;
  nlohmann::json to_json() const;
  static LicenseStats from_json(const nlohmann::json& j);
  friend bool operator==(const LicenseStats&, const LicenseStats&) = default;
};

LicenseStats aggregate_license_stats(const std::vector<ClonePair>& pairs);

/// count/total as a percentage with two decimals, rounded half up.
std::string percent_2dp(std::uint64_t count, std::uint64_t total);

/// Plain-text table: License | Clone Pairs | Percent of Clones.
std::string render_stats_table(const LicenseStats& stats);

struct ShardResult {
  std::string apprentice_id;
  std::string base_url;
  std::optional<std::string> corpus_hash;
  bool ok = true;
  std::string error;
  std::uint64_t pair_count = 0;
  friend bool operator==(const ShardResult&, const ShardResult&) = default;
};

struct CloneReport {
  std::string report_id;
  std::string query_set_id;
  std::vector<ShardResult> apprentices;
  bool partial = false;
  nlohmann::json config = nlohmann::json::object();
  std::vector<ClonePair> pairs;
  LicenseStats stats;
  std::int64_t created_at = 0;

  nlohmann::json to_json() const;
  static CloneReport from_json(const nlohmann::json& j);
  friend bool operator==(const CloneReport&, const CloneReport&) = default;
};

/// Sorts by (query key, corpus key), drops repeated keys, recomputes stats and
/// derives the report id from the content.
void finalize_report(CloneReport& report);

/// Single-process run of one query set against one index, shaped like a
/// dispatched report with a single "local" shard.
CloneReport make_local_report(const Corpus& query, const InvertedIndex& index, const nlohmann::json& run_config,
                              const DetectionConfig& detection, const CompatibilityMatrix& matrix);

/// Self-contained HTML page: stats table, then each pair side by side.
std::string render_html(const CloneReport& report);

struct SampleResult {
  std::vector<ClonePair> pairs;
  std::uint64_t population = 0;
  /// Population was smaller than the requested size.
  bool is_short = false;
};

/// Uniform sample without replacement among pairs of the given size class.
/// Deterministic for a seed on every platform. n must be >= 1.
SampleResult sample_pairs(const std::vector<ClonePair>& pairs, std::uint64_t n, std::optional<SizeClass> filter,
                          std::uint64_t seed);

/// A text searched for attribution, e.g. a whole post body.
struct AttributionDoc {
  std::string id;
  std::optional<std::string> url;
  std::string text;
};

struct AttributionMatch {
  std::string id;
  std::optional<std::string> url;
  std::string pattern;
  std::size_t offset = 0;
  std::string snippet;
  nlohmann::json to_json() const;
};

/// Case-insensitive search. Patterns starting with "re:" are ECMAScript regular
/// expressions; the rest are literal substrings. Each match carries up to 80
/// bytes of context either side. Throws ErrorKind::config on no patterns or a
/// bad expression.
std::vector<AttributionMatch> scan_attribution(const std::vector<AttributionDoc>& docs,
                                               const std::vector<std::string>& patterns);

/// One doc per block, keyed "<corpus_id>:<block_id>", with the block's raw text.
std::vector<AttributionDoc> attribution_docs(const Corpus& corpus);

/// One doc per post in a StackExchange dump, with tags stripped from the body.
std::vector<AttributionDoc> attribution_docs_from_posts(std::istream& xml, std::string_view answer_url_template,
                                                        std::string_view question_url_template);

}  // namespace sapp
