#include "sapp/report.hpp"

#include <algorithm>
#include <cstdio>
#include <random>
#include <regex>
#include <sstream>

#include "sapp/error.hpp"
#include "sapp/stackexchange.hpp"
#include "sapp/util.hpp"

namespace sapp {

using nlohmann::json;

std::string percent_2dp(std::uint64_t count, std::uint64_t total) {
  if (total == 0) return "0.00";
  const std::uint64_t bp = (count * 20000 + total) / (2 * total);  // basis points, half up
  char buf[32];
  std::snprintf(buf, sizeof buf, "%llu.%02llu", static_cast<unsigned long long>(bp / 100),
                static_cast<unsigned long long>(bp % 100));
  return buf;
}

namespace {

const std::string& stats_license(const ClonePair& p) {
  const bool query_is_post = p.query.locator.kind == SourceKind::stackexchange_post;
  const bool corpus_is_post = p.corpus.locator.kind == SourceKind::stackexchange_post;
  return query_is_post && !corpus_is_post ? p.corpus.license.id : p.query.license.id;
}

}  // namespace

LicenseStats aggregate_license_stats(const std::vector<ClonePair>& pairs) {
  LicenseStats s;
  s.total = pairs.size();
  for (const auto& p : pairs) {
    switch (p.verdict) {
      case Verdict::conflict: ++s.conflicts[stats_license(p)]; break;
      case Verdict::compatible: ++s.compatible; break;
      case Verdict::lack_of_licensing: ++s.lack_of_licensing; break;
      case Verdict::unknown: ++s.unknown; break;
    }
  }
  return s;
}

std::vector<LicenseStats::Row> LicenseStats::rows() const {
  std::vector<Row> out;
  out.push_back({"Total clones", total, percent_2dp(total, total == 0 ? 1 : total)});
  if (total == 0) out.back().percent = "0.00";
  std::vector<std::pair<std::string, std::uint64_t>> c(conflicts.begin(), conflicts.end());
  std::stable_sort(c.begin(), c.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  for (const auto& [id, n] : c) out.push_back({id + " conflicts", n, percent_2dp(n, total)});
  out.push_back({"Compatible", compatible, percent_2dp(compatible, total)});
  out.push_back({"Lack of licensing", lack_of_licensing, percent_2dp(lack_of_licensing, total)});
  out.push_back({"Unknown license", unknown, percent_2dp(unknown, total)});
  return out;
}

json LicenseStats::to_json() const {
  json rows_json = json::array();
  for (const auto& r : rows()) rows_json.push_back({{"license", r.label}, {"clone_pairs", r.count}, {"percent", r.percent}});
  return {{"total", total},
          {"conflicts", conflicts},
          {"compatible", compatible},
          {"lack_of_licensing", lack_of_licensing},
          {"unknown", unknown},
          {"table", std::move(rows_json)}};
}

LicenseStats LicenseStats::from_json(const json& j) {
  LicenseStats s;
  try {
    s.total = j.at("total").get<std::uint64_t>();
    s.conflicts = j.at("conflicts").get<std::map<std::string, std::uint64_t>>();
    s.compatible = j.at("compatible").get<std::uint64_t>();
    s.lack_of_licensing = j.at("lack_of_licensing").get<std::uint64_t>();
    s.unknown = j.at("unknown").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::parse, std::string("malformed stats: ") + e.what());
  }
  return s;
}

std::string render_stats_table(const LicenseStats& stats) {
  const auto rows = stats.rows();
  std::size_t w0 = std::string_view("License").size(), w1 = std::string_view("Clone Pairs").size(),
              w2 = std::string_view("Percent of Clones").size();
  for (const auto& r : rows) {
    w0 = std::max(w0, r.label.size());
    w1 = std::max(w1, std::to_string(r.count).size());
    w2 = std::max(w2, r.percent.size() + 1);
  }
  auto pad_right = [](std::string s, std::size_t w) { return s + std::string(w - s.size(), ' '); };
  auto pad_left = [](std::string s, std::size_t w) { return std::string(w - s.size(), ' ') + s; };
  std::ostringstream out;
  out << pad_right("License", w0) << " | " << pad_right("Clone Pairs", w1) << " | " << "Percent of Clones\n";
  out << std::string(w0, '-') << "-|-" << std::string(w1, '-') << "-|-" << std::string(w2, '-') << "\n";
  for (const auto& r : rows) {
    out << pad_right(r.label, w0) << " | " << pad_left(std::to_string(r.count), w1) << " | "
        << pad_left(r.percent + "%", w2) << "\n";
  }
  return out.str();
}

json CloneReport::to_json() const {
  json shards = json::array();
  for (const auto& s : apprentices) {
    shards.push_back({{"apprentice_id", s.apprentice_id},
                      {"base_url", s.base_url},
                      {"corpus_hash", s.corpus_hash ? json(*s.corpus_hash) : json(nullptr)},
                      {"ok", s.ok},
                      {"error", s.error},
                      {"pair_count", s.pair_count}});
  }
  json pairs_json = json::array();
  for (const auto& p : pairs) pairs_json.push_back(sapp::to_json(p));
  return {{"report_id", report_id},
          {"query_set_id", query_set_id},
          {"created_at", format_utc(created_at)},
          {"partial", partial},
          {"config", config},
          {"apprentices", std::move(shards)},
          {"stats", stats.to_json()},
          {"pairs", std::move(pairs_json)}};
}

CloneReport CloneReport::from_json(const json& j) {
  CloneReport r;
  try {
    r.report_id = j.at("report_id").get<std::string>();
    r.query_set_id = j.at("query_set_id").get<std::string>();
    const auto created = parse_utc(j.at("created_at").get<std::string>());
    if (!created) throw Error(ErrorKind::parse, "report: bad created_at");
    r.created_at = *created;
    r.partial = j.at("partial").get<bool>();
    r.config = j.at("config");
    for (const auto& s : j.at("apprentices")) {
      ShardResult sr;
      sr.apprentice_id = s.at("apprentice_id").get<std::string>();
      sr.base_url = s.at("base_url").get<std::string>();
      if (!s.at("corpus_hash").is_null()) sr.corpus_hash = s.at("corpus_hash").get<std::string>();
      sr.ok = s.at("ok").get<bool>();
      sr.error = s.at("error").get<std::string>();
      sr.pair_count = s.at("pair_count").get<std::uint64_t>();
      r.apprentices.push_back(std::move(sr));
    }
    for (const auto& p : j.at("pairs")) r.pairs.push_back(clone_pair_from_json(p));
    r.stats = LicenseStats::from_json(j.at("stats"));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::parse, std::string("malformed report: ") + e.what());
  }
  return r;
}

void finalize_report(CloneReport& report) {
  std::stable_sort(report.pairs.begin(), report.pairs.end(), pair_less);
  auto same_key = [](const ClonePair& a, const ClonePair& b) {
    return a.query.key == b.query.key && a.corpus.key == b.corpus.key;
  };
  report.pairs.erase(std::unique(report.pairs.begin(), report.pairs.end(), same_key), report.pairs.end());
  report.stats = aggregate_license_stats(report.pairs);

  Sha256 h;
  h.update(report.query_set_id);
  h.update("\n");
  h.update(report.config.dump());
  h.update("\n");
  for (const auto& s : report.apprentices) h.update(s.apprentice_id + "@" + s.corpus_hash.value_or("-") + "\n");
  for (const auto& p : report.pairs) {
    h.update(p.query.key.corpus_id + ":" + std::to_string(p.query.key.block_id) + "~" + p.corpus.key.corpus_id + ":" +
             std::to_string(p.corpus.key.block_id) + "\n");
  }
  report.report_id = "r-" + h.hex_digest().substr(0, 16);
}

CloneReport make_local_report(const Corpus& query, const InvertedIndex& index, const json& run_config,
                              const DetectionConfig& detection, const CompatibilityMatrix& matrix) {
  CloneReport r;
  r.query_set_id = "qs-" + (query.content_hash.empty() ? compute_content_hash(query.corpus_id, query.blocks)
                                                       : query.content_hash)
                               .substr(0, 16);
  r.config = run_config;
  r.created_at = now_seconds();
  r.pairs = detect_clones(query.blocks, index, detection, matrix);
  r.apprentices.push_back({"local", "local", index.data().corpus_hash, true, "", r.pairs.size()});
  finalize_report(r);
  return r;
}

namespace {

std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

void render_side(std::ostringstream& out, const BlockRef& b) {
  const std::string where = b.locator.path + ":" + std::to_string(b.locator.start_line) + "-" +
                            std::to_string(b.locator.end_line);
  out << "<td class=\"side\">\n<div class=\"where\">";
  if (b.locator.url) {
    out << "<a href=\"" << html_escape(*b.locator.url) << "\">" << html_escape(where) << "</a>";
  } else {
    out << html_escape(where);
  }
  out << " <span class=\"kind\">" << to_string(b.locator.kind) << ", " << to_string(b.granularity) << ", block "
      << html_escape(b.key.corpus_id) << ":" << b.key.block_id << "</span></div>\n";
  out << "<div class=\"license\">" << html_escape(b.license.id) << " <span class=\"prov\">("
      << to_string(b.license.provenance) << ")</span></div>\n";
  out << "<div class=\"time\">last modified: "
      << (b.last_modified ? format_utc(*b.last_modified) : std::string("unknown")) << "</div>\n";
  out << "<pre><code>" << html_escape(b.raw_text) << "</code></pre>\n</td>\n";
}

}  // namespace

std::string render_html(const CloneReport& report) {
  std::ostringstream out;
  out << "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n<title>Clone report "
      << html_escape(report.report_id) << "</title>\n"
      << "<style>\n"
         "body{font-family:sans-serif;margin:2em}\n"
         "table{border-collapse:collapse}\n"
         "th,td{border:1px solid #bbb;padding:4px 8px;vertical-align:top}\n"
         "td.num{text-align:right}\n"
         "td.side{width:45%}\n"
         "pre{background:#f6f6f6;padding:6px;overflow-x:auto;max-height:30em}\n"
         ".prov,.kind,.time{color:#666;font-size:90%}\n"
         ".verdict-conflict{color:#b00}\n"
         "</style>\n</head>\n<body>\n";
  out << "<h1>Clone report " << html_escape(report.report_id) << "</h1>\n";
  out << "<p>Query set " << html_escape(report.query_set_id) << ", created " << format_utc(report.created_at) << ", "
      << report.pairs.size() << " pairs" << (report.partial ? ", <strong>partial</strong>" : "") << "</p>\n";
  if (!report.apprentices.empty()) {
    out << "<ul class=\"shards\">\n";
    for (const auto& s : report.apprentices) {
      out << "<li>" << html_escape(s.apprentice_id) << " " << html_escape(s.base_url) << " corpus "
          << html_escape(s.corpus_hash.value_or("-")) << ": "
          << (s.ok ? std::to_string(s.pair_count) + " pairs" : "failed: " + html_escape(s.error)) << "</li>\n";
    }
    out << "</ul>\n";
  }
  out << "<table class=\"stats\">\n<thead><tr><th>License</th><th>Clone Pairs</th><th>Percent of Clones</th></tr></thead>\n"
         "<tbody>\n";
  for (const auto& r : report.stats.rows()) {
    out << "<tr><td>" << html_escape(r.label) << "</td><td class=\"num\">" << r.count << "</td><td class=\"num\">"
        << r.percent << "%</td></tr>\n";
  }
  out << "</tbody>\n</table>\n";
  out << "<h2>Clone pairs</h2>\n<table class=\"pairs\">\n<thead><tr><th>#</th><th>Query block</th><th>Corpus "
         "block</th><th>Similarity</th><th>Verdict</th></tr></thead>\n<tbody>\n";
  std::size_t n = 0;
  for (const auto& p : report.pairs) {
    ++n;
    out << "<tr id=\"pair-" << n << "\">\n<td class=\"num\">" << n << "</td>\n";
    render_side(out, p.query);
    render_side(out, p.corpus);
    out << "<td class=\"num\">" << fixed4(p.similarity) << "<br><span class=\"kind\">" << p.overlap << "/"
        << p.required << " tokens, " << to_string(p.size) << "</span></td>\n";
    out << "<td class=\"verdict-" << to_string(p.verdict) << "\">" << to_string(p.verdict) << "</td>\n</tr>\n";
  }
  out << "</tbody>\n</table>\n</body>\n</html>\n";
  return out.str();
}

namespace {

std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t bound) {
  const std::uint64_t threshold = (0 - bound) % bound;
  for (;;) {
    const std::uint64_t x = rng();
    if (x >= threshold) return x % bound;
  }
}

}  // namespace

SampleResult sample_pairs(const std::vector<ClonePair>& pairs, std::uint64_t n, std::optional<SizeClass> filter,
                          std::uint64_t seed) {
  if (n < 1) throw Error(ErrorKind::config, "sample size must be >= 1");
  std::vector<std::size_t> population;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (!filter || pairs[i].size == *filter) population.push_back(i);
  }
  SampleResult r;
  r.population = population.size();
  if (population.size() <= n) {
    r.is_short = population.size() < n;
  } else {
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < n; ++i) {
      const auto j = i + uniform_below(rng, population.size() - i);
      std::swap(population[i], population[j]);
    }
    population.resize(n);
    std::sort(population.begin(), population.end());
  }
  for (auto i : population) r.pairs.push_back(pairs[i]);
  return r;
}

json AttributionMatch::to_json() const {
  return {{"id", id}, {"url", url ? json(*url) : json(nullptr)}, {"pattern", pattern}, {"offset", offset},
          {"snippet", snippet}};
}

namespace {

bool is_continuation(char c) { return (static_cast<unsigned char>(c) & 0xC0) == 0x80; }

std::string context_around(const std::string& text, std::size_t begin, std::size_t end) {
  std::size_t from = begin > 80 ? begin - 80 : 0;
  std::size_t to = std::min(text.size(), end + 80);
  while (from > 0 && from < text.size() && is_continuation(text[from])) --from;
  while (to < text.size() && is_continuation(text[to])) ++to;
  return normalize_space(std::string_view(text).substr(from, to - from));
}

}  // namespace

std::vector<AttributionMatch> scan_attribution(const std::vector<AttributionDoc>& docs,
                                               const std::vector<std::string>& patterns) {
  if (patterns.empty()) throw Error(ErrorKind::config, "attribution scan needs at least one pattern");
  struct Compiled {
    std::string pattern;
    std::optional<std::regex> re;
    std::string needle;
  };
  std::vector<Compiled> compiled;
  for (const auto& p : patterns) {
    if (p.empty()) throw Error(ErrorKind::config, "empty attribution pattern");
    Compiled c{p, std::nullopt, {}};
    if (p.rfind("re:", 0) == 0) {
      try {
        c.re.emplace(p.substr(3), std::regex::ECMAScript | std::regex::icase);
      } catch (const std::regex_error& e) {
        throw Error(ErrorKind::config, "bad attribution pattern '" + p + "': " + e.what());
      }
    } else {
      c.needle = to_lower(p);
    }
    compiled.push_back(std::move(c));
  }

  std::vector<AttributionMatch> out;
  for (const auto& d : docs) {
    if (d.text.empty()) continue;
    const std::string lowered = to_lower(d.text);
    for (const auto& c : compiled) {
      auto emit = [&](std::size_t begin, std::size_t end) {
        out.push_back({d.id, d.url, c.pattern, begin, context_around(d.text, begin, end)});
      };
      if (c.re) {
        for (auto it = std::sregex_iterator(d.text.begin(), d.text.end(), *c.re); it != std::sregex_iterator(); ++it) {
          if (it->length(0) == 0) continue;
          const auto pos = static_cast<std::size_t>(it->position(0));
          emit(pos, pos + static_cast<std::size_t>(it->length(0)));
        }
      } else {
        for (auto pos = lowered.find(c.needle); pos != std::string::npos;
             pos = lowered.find(c.needle, pos + c.needle.size())) {
          emit(pos, pos + c.needle.size());
        }
      }
    }
  }
  return out;
}

std::vector<AttributionDoc> attribution_docs(const Corpus& corpus) {
  std::vector<AttributionDoc> docs;
  docs.reserve(corpus.blocks.size());
  for (const auto& b : corpus.blocks) {
    docs.push_back({b.corpus_id + ":" + std::to_string(b.block_id), b.locator.url, b.raw_text});
  }
  return docs;
}

std::vector<AttributionDoc> attribution_docs_from_posts(std::istream& xml, std::string_view answer_url_template,
                                                        std::string_view question_url_template) {
  std::vector<AttributionDoc> docs;
  std::size_t malformed = 0;
  read_posts(
      xml,
      [&](const PostRow& row) {
        const auto& tmpl = row.post_type == 1 ? question_url_template : answer_url_template;
        docs.push_back({std::to_string(row.id), instantiate_url(tmpl, row.id), strip_html(row.body)});
      },
      malformed);
  return docs;
}

}  // namespace sapp
