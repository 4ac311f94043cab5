#include "sapp/corpus.hpp"

#include <algorithm>
#include <map>
#include <ostream>
#include <sstream>

#include "sapp/error.hpp"
#include "sapp/parallel.hpp"
#include "sapp/source_tree.hpp"
#include "sapp/util.hpp"

namespace sapp {

using nlohmann::json;

namespace {

struct FileOutcome {
  std::vector<CodeBlock> blocks;
  std::optional<std::string> skip_reason;
  std::optional<std::string> degraded;
};

bool looks_binary(std::string_view bytes) {
  return bytes.find('\0') != std::string_view::npos || !is_valid_utf8(bytes);
}

bool is_decimal(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

}  // namespace

json IngestConfig::to_json() const {
  json g = json::array();
  for (auto x : granularities) g.push_back(to_string(x));
  return {{"corpus_id", corpus_id},
          {"extensions", extensions},
          {"granularities", g},
          {"min_tokens", min_tokens},
          {"source_kind", to_string(source_kind)},
          {"default_license", default_license ? json(*default_license) : json(nullptr)}};
}

json IngestLog::to_json() const {
  json skip = json::array();
  for (const auto& [what, why] : skipped) skip.push_back({{"source", what}, {"reason", why}});
  return {{"skipped", skip}, {"degraded", degraded}, {"rows_seen", rows_seen}, {"malformed_rows", malformed_rows}};
}

IngestResult ingest_directory(const std::filesystem::path& path, const IngestConfig& config) {
  return ingest_tree(SourceTree::load(path, config.extensions), config);
}

IngestResult ingest_tree(const SourceTree& tree, const IngestConfig& config) {
  if (config.granularities.empty()) throw Error(ErrorKind::config, "ingest: no granularity requested");
  const RuleSet& rules = config.rules != nullptr ? *config.rules : RuleSet::shipped_default();
  LicenseResolver resolver(rules, tree, config.default_license);

  const auto paths = tree.source_paths();
  std::vector<FileOutcome> outcomes(paths.size());
  parallel_for(paths.size(), config.threads, [&](std::size_t i) {
    const auto& path = paths[i];
    const SourceFile& file = tree.files().at(path);
    auto& out = outcomes[i];
    if (looks_binary(file.bytes)) {
      out.skip_reason = "binary or non-UTF-8 content";
      return;
    }
    SourceLocator base{config.source_kind, path, 1, 1, std::nullopt};
    auto extracted = extract_blocks(file.bytes, base, config.granularities, config.min_tokens);
    if (extracted.degraded) out.degraded = path + ": " + extracted.error;
    if (extracted.blocks.empty()) return;

    const LicenseTag file_tag = resolver.resolve(file.bytes, path);
    for (auto& b : extracted.blocks) {
      b.corpus_id = config.corpus_id;
      b.last_modified = file.mtime;
      b.license = file_tag;
      if (b.granularity != Granularity::file && file_tag.provenance == LicenseProvenance::header) {
        b.license.provenance = LicenseProvenance::inherited;
      }
    }
    out.blocks = std::move(extracted.blocks);
  });

  IngestResult result;
  result.corpus.corpus_id = config.corpus_id;
  for (const auto& [path, why] : tree.unreadable()) result.log.skipped.emplace_back(path, why);
  std::uint64_t next_id = 1;
  for (std::size_t i = 0; i < paths.size(); ++i) {
    auto& o = outcomes[i];
    if (o.skip_reason) {
      result.log.skipped.emplace_back(paths[i], *o.skip_reason);
      log(LogLevel::warn, "skipped " + paths[i] + ": " + *o.skip_reason);
    }
    if (o.degraded) result.log.degraded.push_back(*o.degraded);
    for (auto& b : o.blocks) {
      b.block_id = next_id++;
      result.corpus.blocks.push_back(std::move(b));
    }
  }
  for (const auto& bad : resolver.unreadable()) result.log.skipped.emplace_back(bad, "unreadable license file");
  seal(result.corpus);
  return result;
}

json block_to_json(const CodeBlock& b) {
  json tokens = json::object();
  for (const auto& [tok, n] : b.tokens.entries()) tokens[tok] = n;
  return {{"block_id", b.block_id},
          {"corpus_id", b.corpus_id},
          {"kind", to_string(b.locator.kind)},
          {"path", b.locator.path},
          {"start_line", b.locator.start_line},
          {"end_line", b.locator.end_line},
          {"url", b.locator.url ? json(*b.locator.url) : json(nullptr)},
          {"granularity", to_string(b.granularity)},
          {"tokens", std::move(tokens)},
          {"total_tokens", b.tokens.total()},
          {"line_count", b.line_count()},
          {"last_modified", b.last_modified ? json(*b.last_modified) : json(nullptr)},
          {"license", b.license.id},
          {"license_provenance", to_string(b.license.provenance)},
          {"raw_text", b.raw_text}};
}

CodeBlock block_from_json(const json& j) {
  CodeBlock b;
  try {
    b.block_id = j.at("block_id").get<std::uint64_t>();
    b.corpus_id = j.at("corpus_id").get<std::string>();
    b.locator.kind = parse_source_kind(j.at("kind").get<std::string>());
    b.locator.path = j.at("path").get<std::string>();
    b.locator.start_line = j.at("start_line").get<std::uint32_t>();
    b.locator.end_line = j.at("end_line").get<std::uint32_t>();
    if (j.contains("url") && !j.at("url").is_null()) b.locator.url = j.at("url").get<std::string>();
    b.granularity = parse_granularity(j.at("granularity").get<std::string>());
    for (const auto& [tok, n] : j.at("tokens").items()) {
      const auto count = n.get<std::int64_t>();
      if (count < 1) throw Error(ErrorKind::parse, "token frequency must be >= 1 for '" + tok + "'");
      b.tokens.add(tok, static_cast<std::uint32_t>(count));
    }
    if (j.contains("last_modified") && !j.at("last_modified").is_null()) {
      b.last_modified = j.at("last_modified").get<std::int64_t>();
    }
    b.license.id = j.value("license", std::string(kLicenseNone));
    b.license.provenance = parse_provenance(j.value("license_provenance", std::string("header")));
    b.raw_text = j.value("raw_text", std::string());

    if (b.locator.start_line < 1 || b.locator.end_line < b.locator.start_line) {
      throw Error(ErrorKind::parse, "block " + std::to_string(b.block_id) + ": bad line span");
    }
    if (j.contains("total_tokens") && j.at("total_tokens").get<std::uint64_t>() != b.tokens.total()) {
      throw Error(ErrorKind::parse, "block " + std::to_string(b.block_id) + ": total_tokens != sum of frequencies");
    }
    if (j.contains("line_count") && j.at("line_count").get<std::uint32_t>() != b.line_count()) {
      throw Error(ErrorKind::parse, "block " + std::to_string(b.block_id) + ": line_count != locator span");
    }
    if (b.locator.kind == SourceKind::stackexchange_post && (!is_decimal(b.locator.path) || !b.locator.url)) {
      throw Error(ErrorKind::parse, "block " + std::to_string(b.block_id) + ": post blocks need a numeric id and url");
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::parse, std::string("malformed block record: ") + e.what());
  }
  return b;
}

std::string compute_content_hash(std::string_view corpus_id, const std::vector<CodeBlock>& blocks) {
  Sha256 h;
  h.update(corpus_id);
  h.update("\n");
  for (const auto& b : blocks) {
    json j = block_to_json(b);
    j.erase("last_modified");
    h.update(j.dump());
    h.update("\n");
  }
  return h.hex_digest();
}

void seal(Corpus& corpus) {
  corpus.content_hash = compute_content_hash(corpus.corpus_id, corpus.blocks);
  corpus.created_at = now_seconds();
}

void validate(const Corpus& corpus) {
  std::map<std::string, std::set<std::uint64_t>> seen;
  for (const auto& b : corpus.blocks) {
    if (!seen[b.corpus_id].insert(b.block_id).second) {
      throw Error(ErrorKind::parse, "duplicate block_id " + std::to_string(b.block_id) + " in corpus " + b.corpus_id);
    }
    if (b.locator.end_line < b.locator.start_line) throw Error(ErrorKind::parse, "bad line span");
  }
}

void write_corpus_jsonl(std::ostream& out, const Corpus& corpus) {
  for (const auto& b : corpus.blocks) out << block_to_json(b).dump() << '\n';
}

std::string corpus_to_jsonl(const Corpus& corpus) {
  std::ostringstream ss;
  write_corpus_jsonl(ss, corpus);
  return std::move(ss).str();
}

Corpus parse_corpus_jsonl(std::string_view text, std::string_view corpus_id_hint) {
  Corpus corpus;
  corpus.corpus_id = std::string(corpus_id_hint);
  std::size_t line_no = 0;
  for (std::size_t pos = 0; pos < text.size();) {
    const auto nl = text.find('\n', pos);
    const auto end = nl == std::string_view::npos ? text.size() : nl;
    const auto line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw Error(ErrorKind::parse, "line " + std::to_string(line_no) + ": " + e.what());
    }
    corpus.blocks.push_back(block_from_json(j));
  }
  if (corpus.corpus_id.empty() && !corpus.blocks.empty()) corpus.corpus_id = corpus.blocks.front().corpus_id;
  validate(corpus);
  seal(corpus);
  return corpus;
}

Corpus load_corpus_file(const std::filesystem::path& path) { return parse_corpus_jsonl(read_file(path)); }

void save_corpus_file(const std::filesystem::path& path, const Corpus& corpus) {
  write_file_atomic(path, corpus_to_jsonl(corpus));
}

}  // namespace sapp
