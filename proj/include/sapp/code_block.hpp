#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "sapp/token_bag.hpp"

namespace sapp {

enum class SourceKind { filesystem, stackexchange_post, doc_file };
enum class Granularity { file, module, function };

std::string_view to_string(SourceKind kind);
std::string_view to_string(Granularity g);
SourceKind parse_source_kind(std::string_view text);
Granularity parse_granularity(std::string_view text);

struct SourceLocator {
  SourceKind kind = SourceKind::filesystem;
  std::string path;  // relative file path, or the decimal post id
  std::uint32_t start_line = 1;
  std::uint32_t end_line = 1;
  std::optional<std::string> url;

  std::uint32_t line_span() const { return end_line - start_line + 1; }
  friend bool operator==(const SourceLocator&, const SourceLocator&) = default;
};

inline constexpr std::string_view kLicenseNone = "NONE";
inline constexpr std::string_view kLicenseUnknown = "UNKNOWN";

enum class LicenseProvenance { header, package_file, inherited, corpus_default };

std::string_view to_string(LicenseProvenance p);
LicenseProvenance parse_provenance(std::string_view text);

struct LicenseTag {
  std::string id{kLicenseNone};
  LicenseProvenance provenance = LicenseProvenance::header;

  bool is_none() const { return id == kLicenseNone; }
  bool is_unknown() const { return id == kLicenseUnknown; }
  bool is_concrete() const { return !is_none() && !is_unknown(); }
  friend bool operator==(const LicenseTag&, const LicenseTag&) = default;
};

/// Identity of a block across corpora.
struct BlockKey {
  std::string corpus_id;
  std::uint64_t block_id = 0;
  friend auto operator<=>(const BlockKey&, const BlockKey&) = default;
};

struct CodeBlock {
  std::uint64_t block_id = 0;
  std::string corpus_id;
  SourceLocator locator;
  Granularity granularity = Granularity::file;
  std::string raw_text;
  TokenBag tokens;
  std::optional<std::int64_t> last_modified;
  LicenseTag license;

  std::uint64_t total_tokens() const { return tokens.total(); }
  std::uint32_t line_count() const { return locator.line_span(); }
  BlockKey key() const { return {corpus_id, block_id}; }
  friend bool operator==(const CodeBlock&, const CodeBlock&) = default;
};

}  // namespace sapp
