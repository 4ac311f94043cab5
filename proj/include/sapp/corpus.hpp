#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sapp/block_extractor.hpp"
#include "sapp/code_block.hpp"
#include "sapp/license.hpp"

namespace sapp {

class SourceTree;

struct Corpus {
  std::string corpus_id;
  std::vector<CodeBlock> blocks;
  std::string content_hash;
  std::int64_t created_at = 0;
};

struct IngestConfig {
  std::string corpus_id = "corpus";
  std::set<std::string> extensions{".py"};
  GranularitySet granularities{Granularity::file};
  std::uint64_t min_tokens = 23;
  SourceKind source_kind = SourceKind::filesystem;
  /// Applied when neither a header nor a package file names a license.
  std::optional<std::string> default_license;
  /// nullptr selects RuleSet::shipped_default().
  const RuleSet* rules = nullptr;
  unsigned threads = 0;

  nlohmann::json to_json() const;
};

struct IngestLog {
  std::vector<std::pair<std::string, std::string>> skipped;  // (path or row, reason)
  std::vector<std::string> degraded;                         // parsed at file level only
  std::size_t rows_seen = 0;
  std::size_t malformed_rows = 0;

  nlohmann::json to_json() const;
};

struct IngestResult {
  Corpus corpus;
  IngestLog log;
};

/// Recursively ingests a directory, .zip or .tar.gz. Files are tokenized in
/// parallel; block ids follow path order so results are deterministic.
IngestResult ingest_directory(const std::filesystem::path& path, const IngestConfig& config);
IngestResult ingest_tree(const SourceTree& tree, const IngestConfig& config);

/// SHA-256 over the corpus id and every block's canonical record, excluding
/// last_modified so that an archive and its unpacked directory hash alike.
std::string compute_content_hash(std::string_view corpus_id, const std::vector<CodeBlock>& blocks);

/// Sets content_hash and created_at.
void seal(Corpus& corpus);

/// Checks the block invariants (line spans, post ids, unique ids per corpus).
void validate(const Corpus& corpus);

nlohmann::json block_to_json(const CodeBlock& block);
/// Throws ErrorKind::parse on missing fields or violated invariants.
CodeBlock block_from_json(const nlohmann::json& j);

void write_corpus_jsonl(std::ostream& out, const Corpus& corpus);
std::string corpus_to_jsonl(const Corpus& corpus);
/// Parses, validates and seals. An empty input is an empty corpus.
Corpus parse_corpus_jsonl(std::string_view text, std::string_view corpus_id_hint = {});
Corpus load_corpus_file(const std::filesystem::path& path);
void save_corpus_file(const std::filesystem::path& path, const Corpus& corpus);

}  // namespace sapp
