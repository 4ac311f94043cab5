#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include <json.hpp>

#include "sapp/clone_engine.hpp"
#include "sapp/corpus.hpp"
#include "sapp/index_cache.hpp"

namespace sapp {

struct BenchOptions {
  /// A source tree (directory or archive) to ingest, or a corpus .jsonl file.
  std::filesystem::path corpus_source;
  IngestConfig ingest;
  std::vector<CodeBlock> query;
  DetectionConfig detection;
  std::filesystem::path store;
  unsigned runs = 5;
};

struct BenchResult {
  std::vector<double> cold_seconds;  // ingest + index build + query
  std::vector<double> warm_seconds;  // cache load by hash + query
  double cold_mean = 0.0;
  double warm_mean = 0.0;
  std::uint64_t pairs = 0;
  std::uint64_t corpus_blocks = 0;
  CacheMetrics cache;

  /// warm_mean / cold_mean.
  double ratio() const { return cold_mean > 0.0 ? warm_mean / cold_mean : 0.0; }
  nlohmann::json to_json() const;
};

/// Each cold run evicts the entry and starts from the source; each warm run
/// opens the store afresh and loads by corpus hash, as a restarted service
/// would. Throws ErrorKind::config when runs is 0, and ErrorKind::io when a
/// warm run misses or the two paths disagree on the pair set.
BenchResult run_bench(const BenchOptions& options);

/// Reads a corpus .jsonl, or ingests anything else as a source tree.
Corpus load_or_ingest(const std::filesystem::path& source, const IngestConfig& config);

}  // namespace sapp
