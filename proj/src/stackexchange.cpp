#include "sapp/stackexchange.hpp"

#include <expat.h>

#include <cctype>
#include <charconv>
#include <cstring>
#include <memory>
#include <unordered_set>

#include "sapp/util.hpp"

namespace sapp {

namespace {

std::optional<std::uint64_t> parse_id(const char* s) {
  if (s == nullptr || *s == '\0') return std::nullopt;
  std::uint64_t v = 0;
  const char* end = s + std::strlen(s);
  auto [ptr, ec] = std::from_chars(s, end, v);
  if (ec != std::errc() || ptr != end) return std::nullopt;
  return v;
}

struct ParseState {
  const std::function<void(const PostRow&)>* on_row;
  std::size_t* malformed;
  std::exception_ptr failure;
};

void on_start(void* user, const XML_Char* name, const XML_Char** atts) {
  auto* st = static_cast<ParseState*>(user);
  if (st->failure || std::strcmp(name, "row") != 0) return;
  const char* id = nullptr;
  const char* type = nullptr;
  const char* parent = nullptr;
  const char* body = nullptr;
  const char* tags = nullptr;
  const char* created = nullptr;
  for (std::size_t i = 0; atts[i] != nullptr; i += 2) {
    const char* key = atts[i];
    const char* value = atts[i + 1];
    if (std::strcmp(key, "Id") == 0) id = value;
    else if (std::strcmp(key, "PostTypeId") == 0) type = value;
    else if (std::strcmp(key, "ParentId") == 0) parent = value;
    else if (std::strcmp(key, "Body") == 0) body = value;
    else if (std::strcmp(key, "Tags") == 0) tags = value;
    else if (std::strcmp(key, "CreationDate") == 0) created = value;
  }
  const auto pid = parse_id(id);
  const auto ptype = parse_id(type);
  if (!pid || !ptype || body == nullptr) {
    ++*st->malformed;
    return;
  }
  PostRow row;
  row.id = *pid;
  row.post_type = static_cast<int>(*ptype);
  row.parent_id = parse_id(parent);
  row.body = body;
  if (tags != nullptr) row.tags = tags;
  if (created != nullptr) row.created = parse_utc(created);
  try {
    (*st->on_row)(row);
  } catch (...) {
    st->failure = std::current_exception();
  }
}

}  // namespace

void read_posts(std::istream& xml, const std::function<void(const PostRow&)>& on_row, std::size_t& malformed) {
  std::unique_ptr<XML_ParserStruct, void (*)(XML_Parser)> parser(XML_ParserCreate("UTF-8"), XML_ParserFree);
  if (!parser) throw Error(ErrorKind::io, "cannot create XML parser");
  ParseState state{&on_row, &malformed, nullptr};
  XML_SetUserData(parser.get(), &state);
  XML_SetStartElementHandler(parser.get(), on_start);

  constexpr std::size_t kChunk = 1 << 16;
  bool done = false;
  while (!done) {
    void* buf = XML_GetBuffer(parser.get(), kChunk);
    if (buf == nullptr) throw Error(ErrorKind::io, "XML buffer allocation failed");
    xml.read(static_cast<char*>(buf), kChunk);
    const auto got = xml.gcount();
    done = got < static_cast<std::streamsize>(kChunk);
    if (XML_ParseBuffer(parser.get(), static_cast<int>(got), done ? 1 : 0) == XML_STATUS_ERROR) {
      const auto code = XML_GetErrorCode(parser.get());
      const std::string where = " at line " + std::to_string(XML_GetCurrentLineNumber(parser.get()));
      const bool premature_end = code == XML_ERROR_NO_ELEMENTS || code == XML_ERROR_UNCLOSED_TOKEN ||
                                 code == XML_ERROR_PARTIAL_CHAR || code == XML_ERROR_UNCLOSED_CDATA_SECTION;
      throw Error(premature_end ? ErrorKind::truncated : ErrorKind::parse,
                  std::string(premature_end ? "truncated posts stream: " : "malformed posts XML: ") +
                      XML_ErrorString(code) + where);
    }
    if (state.failure) std::rethrow_exception(state.failure);
  }
}

std::vector<std::string> extract_code_elements(std::string_view html) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    auto open = html.find("<code", pos);
    if (open == std::string_view::npos) break;
    const char after = open + 5 < html.size() ? html[open + 5] : '\0';
    if (after != '>' && after != ' ' && after != '\t' && after != '\n') {
      pos = open + 5;
      continue;
    }
    const auto content = html.find('>', open);
    if (content == std::string_view::npos) break;
    const auto close = html.find("</code>", content + 1);
    if (close == std::string_view::npos) break;
    out.push_back(html_unescape(html.substr(content + 1, close - content - 1)));
    pos = close + 7;
  }
  return out;
}

std::string strip_html(std::string_view html) {
  static const std::unordered_set<std::string> kBlockTags{"p",  "br", "div", "pre", "li", "ul", "ol", "h1",
                                                          "h2", "h3", "h4",  "h5",  "h6", "blockquote", "tr",
                                                          "td", "th", "hr",  "table"};
  std::string text;
  text.reserve(html.size());
  std::size_t i = 0;
  while (i < html.size()) {
    if (html[i] != '<') {
      text.push_back(html[i++]);
      continue;
    }
    const auto close = html.find('>', i);
    if (close == std::string_view::npos) break;
    std::string name;
    for (std::size_t k = i + 1; k < close; ++k) {
      const char c = html[k];
      if (c == '/' && name.empty()) continue;
      if (!std::isalnum(static_cast<unsigned char>(c))) break;
      name.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    if (kBlockTags.contains(name)) text.push_back(' ');
    i = close + 1;
  }
  const std::string decoded = html_unescape(text);
  std::string out;
  out.reserve(decoded.size());
  for (char c : decoded) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!out.empty() && out.back() != ' ') out.push_back(' ');
    } else {
      out.push_back(c);
    }
  }
  if (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

std::vector<std::string> split_tags(std::string_view tags) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : tags) {
    if (c == '<' || c == '>' || c == '|') {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::string instantiate_url(std::string_view url_template, std::uint64_t id) {
  std::string out(url_template);
  const std::string sid = std::to_string(id);
  for (auto p = out.find("{id}"); p != std::string::npos; p = out.find("{id}", p + sid.size())) {
    out.replace(p, 4, sid);
  }
  return out;
}

IngestResult ingest_stackexchange_dump(std::istream& xml, const StackExchangeConfig& config) {
  const IngestConfig& ic = config.ingest;
  if (ic.granularities.empty()) throw Error(ErrorKind::config, "ingest: no granularity requested");
  const RuleSet& rules = ic.rules != nullptr ? *ic.rules : RuleSet::shipped_default();

  IngestResult result;
  result.corpus.corpus_id = ic.corpus_id;
  std::unordered_set<std::uint64_t> matching_questions;
  std::uint64_t next_id = 1;

  auto keep = [&](const PostRow& row) {
    if (config.tag_filter.empty()) return row.post_type == 1 || row.post_type == 2;
    if (row.post_type == 1) {
      for (const auto& t : split_tags(row.tags)) {
        if (t == config.tag_filter) {
          matching_questions.insert(row.id);
          return true;
        }
      }
      return false;
    }
    return row.post_type == 2 && row.parent_id && matching_questions.contains(*row.parent_id);
  };

  auto on_row = [&](const PostRow& row) {
    ++result.log.rows_seen;
    if (!keep(row)) return;
    const std::string url =
        instantiate_url(row.post_type == 1 ? config.question_url_template : config.answer_url_template, row.id);
    const auto snippets = extract_code_elements(row.body);
    for (std::size_t k = 0; k < snippets.size(); ++k) {
      SourceLocator base{SourceKind::stackexchange_post, std::to_string(row.id), 1, 1, url};
      auto extracted = extract_blocks(snippets[k], base, ic.granularities, ic.min_tokens);
      if (extracted.degraded) {
        result.log.degraded.push_back("post " + std::to_string(row.id) + " code " + std::to_string(k) + ": " +
                                      extracted.error);
      }
      if (extracted.blocks.empty()) continue;
      LicenseTag tag = detect_header_license(snippets[k], rules);
      if (!tag.is_concrete() && ic.default_license) tag = {*ic.default_license, LicenseProvenance::corpus_default};
      for (auto& b : extracted.blocks) {
        b.block_id = next_id++;
        b.corpus_id = ic.corpus_id;
        b.last_modified = row.created;
        b.license = tag;
        if (b.granularity != Granularity::file && tag.provenance == LicenseProvenance::header) {
          b.license.provenance = LicenseProvenance::inherited;
        }
        result.corpus.blocks.push_back(std::move(b));
      }
    }
  };

  std::size_t malformed = 0;
  try {
    read_posts(xml, on_row, malformed);
  } catch (const Error& e) {
    result.log.malformed_rows = malformed;
    seal(result.corpus);
    throw TruncatedDump(e.what(), std::move(result));
  }
  result.log.malformed_rows = malformed;
  if (malformed > 0) log(LogLevel::warn, std::to_string(malformed) + " malformed post rows skipped");
  seal(result.corpus);
  return result;
}

}  // namespace sapp
