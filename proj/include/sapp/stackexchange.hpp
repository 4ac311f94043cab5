#pragma once

#include <cstdint>
#include <functional>
#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sapp/corpus.hpp"
#include "sapp/error.hpp"

namespace sapp {

struct StackExchangeConfig {
  IngestConfig ingest;
  /// Exact tag to keep ("python"); empty keeps every question and answer.
  std::string tag_filter;
  std::string answer_url_template = "https://stackoverflow.com/a/{id}";
  std::string question_url_template = "https://stackoverflow.com/q/{id}";
};

/// One parsed `<row>` of a Posts.xml dump.
struct PostRow {
  std::uint64_t id = 0;
  int post_type = 0;  // 1 question, 2 answer
  std::optional<std::uint64_t> parent_id;
  std::string body;  // unescaped HTML
  std::string tags;
  std::optional<std::int64_t> created;
};

/// Streams `<row>` elements to on_row. Rows missing Id/PostTypeId/Body, or
/// with non-numeric ids, are counted in malformed and skipped. A stream that
/// ends before the document closes throws ErrorKind::truncated after every
/// completed row has been delivered.
void read_posts(std::istream& xml, const std::function<void(const PostRow&)>& on_row, std::size_t& malformed);

/// Text of each `<code>` element of an HTML body, entity-decoded.
std::vector<std::string> extract_code_elements(std::string_view html);

/// Body text with tags removed and entities decoded.
std::string strip_html(std::string_view html);

/// Splits "<python><list>" or "|python|list|" into tag names.
std::vector<std::string> split_tags(std::string_view tags);

std::string instantiate_url(std::string_view url_template, std::uint64_t id);

/// Thrown on a truncated dump; carries the corpus assembled from completed rows.
class TruncatedDump : public Error {
 public:
  TruncatedDump(const std::string& what, IngestResult partial)
      : Error(ErrorKind::truncated, what), partial_(std::move(partial)) {}
  const IngestResult& partial() const { return partial_; }

 private:
  IngestResult partial_;
};

/// Questions whose tags contain the filter are kept; answers inherit their
/// question's match through an in-stream id → match set (one entry per
/// matching question). Every code element becomes one candidate file text.
IngestResult ingest_stackexchange_dump(std::istream& xml, const StackExchangeConfig& config);

}  // namespace sapp
