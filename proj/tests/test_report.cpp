#include <doctest.h>

#include <cstdlib>
#include <algorithm>
#include <fstream>
#include <sstream>

#include "sapp/error.hpp"
#include "sapp/report.hpp"
#include "sapp/util.hpp"
#include "test_support.hpp"

using namespace sapp;
using nlohmann::json;

#ifndef SAPP_GOLDEN_DIR
#define SAPP_GOLDEN_DIR "tests/golden"
#endif

namespace {

BlockRef side(const std::string& corpus, std::uint64_t id, const std::string& license, bool post = false,
              std::uint32_t lines = 5) {
  BlockRef b;
  b.key = {corpus, id};
  b.locator.start_line = 1;
  b.locator.end_line = lines;
  if (post) {
    b.locator.kind = SourceKind::stackexchange_post;
    b.locator.path = std::to_string(id);
    b.locator.url = "https://stackoverflow.com/a/" + std::to_string(id);
    b.license = {license, LicenseProvenance::corpus_default};
  } else {
    b.locator.path = "pkg/m" + std::to_string(id) + ".py";
    b.license = {license, LicenseProvenance::package_file};
  }
  b.total_tokens = 30;
  return b;
}

ClonePair make_pair(BlockRef q, BlockRef c, Verdict v, SizeClass size = SizeClass::small) {
  ClonePair p;
  p.query = std::move(q);
  p.corpus = std::move(c);
  p.overlap = 27;
  p.required = 24;
  p.similarity = 0.9;
  p.size = size;
  p.verdict = v;
  return p;
}

// Half-up percentage with two decimals, from integer arithmetic on the
// decimal expansion.
std::string expected_percent(std::uint64_t count, std::uint64_t total) {
  if (total == 0) return "0.00";
  const std::uint64_t thousandths = count * 100000 / total;  // percent * 1000, truncated
  std::uint64_t hundredths = thousandths / 10;
  if (thousandths % 10 >= 5) ++hundredths;
  std::ostringstream out;
  out << hundredths / 100 << "." << (hundredths % 100 < 10 ? "0" : "") << hundredths % 100;
  return out.str();
}

}  // namespace

TEST_CASE("three MIT conflicts and one lack of licensing") {
  std::vector<ClonePair> pairs;
  for (std::uint64_t i = 1; i <= 3; ++i) {
    pairs.push_back(make_pair(side("so", 100 + i, "CC-BY-SA-3.0", true), side("pkg", i, "MIT"), Verdict::conflict));
  }
  pairs.push_back(make_pair(side("so", 200, "CC-BY-SA-3.0", true), side("pkg", 9, "NONE"), Verdict::lack_of_licensing));
  const auto s = aggregate_license_stats(pairs);
  CHECK(s.total == 4);
  CHECK(s.conflicts.at("MIT") == 3);
  CHECK(s.lack_of_licensing == 1);
  const auto rows = s.rows();
  REQUIRE(rows.size() == 5);
  CHECK(rows[0].label == "Total clones");
  CHECK(rows[0].count == 4);
  CHECK(rows[0].percent == "100.00");
  CHECK(rows[1].label == "MIT conflicts");
  CHECK(rows[1].percent == "75.00");
  CHECK(rows[2].label == "Compatible");
  CHECK(rows[2].percent == "0.00");
  CHECK(rows[3].label == "Lack of licensing");
  CHECK(rows[3].percent == "25.00");
  CHECK(rows[4].label == "Unknown license");
}

TEST_CASE("zero pairs give all zeros") {
  const auto s = aggregate_license_stats({});
  CHECK(s.total == 0);
  CHECK(s.conflicts.empty());
  for (const auto& r : s.rows()) {
    CHECK(r.count == 0);
    CHECK(r.percent == "0.00");
  }
}

TEST_CASE("conflicts are keyed by the side that is not a post") {
  std::vector<ClonePair> pairs{
      make_pair(side("pkg", 1, "GPL-3.0"), side("so", 5, "CC-BY-SA-3.0", true), Verdict::conflict),
      make_pair(side("so", 6, "CC-BY-SA-3.0", true), side("pkg", 2, "Apache-2.0"), Verdict::conflict),
      make_pair(side("a", 1, "GPL-2.0"), side("b", 1, "Apache-2.0"), Verdict::conflict),
      make_pair(side("pkg", 3, "MIT"), side("pkg", 4, "MIT"), Verdict::compatible),
      make_pair(side("pkg", 3, "UNKNOWN"), side("pkg", 4, "MIT"), Verdict::unknown)};
  const auto s = aggregate_license_stats(pairs);
  CHECK(s.conflicts.at("GPL-3.0") == 1);
  CHECK(s.conflicts.at("Apache-2.0") == 1);
  CHECK(s.conflicts.at("GPL-2.0") == 1);
  CHECK(s.compatible == 1);
  CHECK(s.unknown == 1);
}

TEST_CASE("conflict rows are ordered by descending count then id") {
  LicenseStats s;
  s.total = 10;
  s.conflicts = {{"Apache-2.0", 2}, {"MIT", 5}, {"BSD-3-Clause", 2}};
  s.compatible = 1;
  const auto rows = s.rows();
  CHECK(rows[1].label == "MIT conflicts");
  CHECK(rows[2].label == "Apache-2.0 conflicts");
  CHECK(rows[3].label == "BSD-3-Clause conflicts");
}

TEST_CASE("percentages round half up to two decimals") {
  CHECK(percent_2dp(1, 3) == "33.33");
  CHECK(percent_2dp(2, 3) == "66.67");
  CHECK(percent_2dp(1, 8) == "12.50");
  CHECK(percent_2dp(1, 80000) == "0.00");   // 0.00125
  CHECK(percent_2dp(1, 40000) == "0.00");   // 0.0025
  CHECK(percent_2dp(1, 20000) == "0.01");   // 0.005 rounds up
  CHECK(percent_2dp(7, 7) == "100.00");
  CHECK(percent_2dp(0, 0) == "0.00");
  for (std::uint64_t total = 1; total <= 300; ++total) {
    for (std::uint64_t count = 0; count <= total; ++count) REQUIRE(percent_2dp(count, total) == expected_percent(count, total));
  }
}

TEST_CASE("stats table mirrors the license / clone pairs / percent layout") {
  LicenseStats s;
  s.total = 4;
  s.conflicts = {{"MIT", 3}};
  s.lack_of_licensing = 1;
  const std::string table = render_stats_table(s);
  std::istringstream in(table);
  std::string header, rule, total, mit;
  std::getline(in, header);
  std::getline(in, rule);
  std::getline(in, total);
  std::getline(in, mit);
  CHECK(header.find("License") == 0);
  CHECK(header.find("| Clone Pairs |") != std::string::npos);
  CHECK(header.ends_with("Percent of Clones"));
  CHECK(rule.find_first_not_of("-|") == std::string::npos);
  CHECK(total.find("Total clones") == 0);
  CHECK(total.ends_with("100.00%"));
  CHECK(mit.find("MIT conflicts") == 0);
  CHECK(mit.ends_with("75.00%"));
  CHECK(table.find("Lack of licensing") != std::string::npos);
}

TEST_CASE("stats json round trip") {
  LicenseStats s;
  s.total = 9;
  s.conflicts = {{"MIT", 4}, {"GPL-3.0", 1}};
  s.compatible = 2;
  s.lack_of_licensing = 1;
  s.unknown = 1;
  const auto j = s.to_json();
  CHECK(j.at("table").size() == 6);
  CHECK(LicenseStats::from_json(json::parse(j.dump())) == s);
}

TEST_CASE("sample of 63 from 1000 medium pairs") {
  std::vector<ClonePair> pairs;
  for (std::uint64_t i = 1; i <= 1200; ++i) {
    const auto size = i <= 1000 ? SizeClass::medium : SizeClass::small;
    pairs.push_back(make_pair(side("q", i, "MIT"), side("c", i, "MIT"), Verdict::compatible, size));
  }
  const auto s = sample_pairs(pairs, 63, SizeClass::medium, 2024);
  CHECK(s.population == 1000);
  CHECK_FALSE(s.is_short);
  REQUIRE(s.pairs.size() == 63);
  std::set<std::uint64_t> ids;
  for (const auto& p : s.pairs) {
    ids.insert(p.query.key.block_id);
    CHECK(p.size == SizeClass::medium);
  }
  CHECK(ids.size() == 63);
  CHECK(sample_pairs(pairs, 63, SizeClass::medium, 2024).pairs == s.pairs);
  CHECK(sample_pairs(pairs, 63, SizeClass::medium, 2025).pairs != s.pairs);
  CHECK(sample_pairs(pairs, 63, std::nullopt, 1).population == 1200);
}

TEST_CASE("sample larger than the population returns everything, flagged") {
  std::vector<ClonePair> pairs;
  for (std::uint64_t i = 1; i <= 10; ++i) pairs.push_back(make_pair(side("q", i, "MIT"), side("c", i, "MIT"), Verdict::compatible));
  const auto s = sample_pairs(pairs, 63, std::nullopt, 1);
  CHECK(s.is_short);
  CHECK(s.population == 10);
  CHECK(s.pairs == pairs);
  CHECK_FALSE(sample_pairs(pairs, 10, std::nullopt, 1).is_short);
  CHECK(sample_pairs(pairs, 5, SizeClass::large, 1).pairs.empty());
  CHECK_THROWS_AS(sample_pairs(pairs, 0, std::nullopt, 1), Error);
}

TEST_CASE("property: sampling one of ten is roughly uniform") {
  std::vector<ClonePair> pairs;
  for (std::uint64_t i = 1; i <= 10; ++i) pairs.push_back(make_pair(side("q", i, "MIT"), side("c", i, "MIT"), Verdict::compatible));
  std::map<std::uint64_t, int> hits;
  for (std::uint64_t seed = 0; seed < 5000; ++seed) ++hits[sample_pairs(pairs, 1, std::nullopt, seed).pairs[0].query.key.block_id];
  REQUIRE(hits.size() == 10);
  // Expected 500 each; 5 standard deviations is about 106.
  for (const auto& [id, n] : hits) CHECK(std::abs(n - 500) < 110);
}

TEST_CASE("attribution scan") {
  const std::vector<AttributionDoc> docs{
      {"1", "https://stackoverflow.com/a/1", "This snippet is from the Python Software Foundation docs."},
      {"2", std::nullopt, ""},
      {"3", std::nullopt, "Released under the PSF license, see python.org."},
      {"4", std::nullopt, "psf and PSF twice"}};
  auto m = scan_attribution(docs, {"python software foundation"});
  REQUIRE(m.size() == 1);
  CHECK(m[0].id == "1");
  CHECK(m[0].url.value() == "https://stackoverflow.com/a/1");
  CHECK(m[0].offset == std::string("This snippet is from the ").size());
  CHECK(m[0].snippet.find("Python Software Foundation") != std::string::npos);

  m = scan_attribution(docs, {"PSF"});
  REQUIRE(m.size() == 3);
  CHECK(m[0].id == "3");
  CHECK(m[1].id == "4");
  CHECK(m[2].offset == 8);

  m = scan_attribution(docs, {"re:psf\\s+licen[cs]e"});
  REQUIRE(m.size() == 1);
  CHECK(m[0].id == "3");

  CHECK(scan_attribution({{"e", std::nullopt, ""}}, {"x"}).empty());
  CHECK_THROWS_AS(scan_attribution(docs, {}), Error);
  CHECK_THROWS_AS(scan_attribution(docs, {"re:("}), Error);
}

TEST_CASE("attribution snippets carry bounded context") {
  const std::string pad(200, 'a');
  const auto m = scan_attribution({{"x", std::nullopt, pad + " PSF " + pad}}, {"psf"});
  REQUIRE(m.size() == 1);
  CHECK(m[0].snippet.size() <= 80 + 3 + 80);
  CHECK(m[0].snippet.find("PSF") != std::string::npos);

  // Multi-byte characters are never cut in half.
  std::string wide;
  for (int i = 0; i < 60; ++i) wide += "\xC3\xA9";  // é
  const auto u = scan_attribution({{"u", std::nullopt, wide + "PSF" + wide}}, {"psf"});
  REQUIRE(u.size() == 1);
  CHECK(u[0].snippet.size() % 2 == 1);
}

TEST_CASE("attribution docs from a posts dump") {
  std::istringstream xml(
      "<posts>\n"
      "<row Id=\"7\" PostTypeId=\"2\" ParentId=\"1\" Body=\"&lt;p&gt;Copyright &lt;b&gt;Python&lt;/b&gt; Software "
      "Foundation&lt;/p&gt;\" />\n"
      "<row Id=\"8\" PostTypeId=\"1\" Body=\"&lt;p&gt;nothing&lt;/p&gt;\" Tags=\"&lt;python&gt;\" />\n"
      "</posts>\n");
  const auto docs = attribution_docs_from_posts(xml, "https://stackoverflow.com/a/{id}", "https://stackoverflow.com/q/{id}");
  REQUIRE(docs.size() == 2);
  CHECK(docs[0].url.value() == "https://stackoverflow.com/a/7");
  CHECK(docs[1].url.value() == "https://stackoverflow.com/q/8");
  const auto m = scan_attribution(docs, {"Python Software Foundation"});
  REQUIRE(m.size() == 1);
  CHECK(m[0].id == "7");
}

namespace {

CloneReport fixture_report() {
  CloneReport r;
  r.query_set_id = "qs-0123456789abcdef";
  r.config = {{"theta", 0.8}, {"min_tokens", 23}};
  r.created_at = 1700000000;
  r.apprentices.push_back({"a1", "http://127.0.0.1:9001", std::string("feedface"), true, "", 2});
  auto q = side("so", 3271650, "CC-BY-SA-3.0", true, 12);
  q.raw_text = "def evil():\n    return \"<script>alert(1)</script>\" & 1\n";
  q.last_modified = 1279272672;
  auto c = side("pkg", 4, "MIT", false, 14);
  c.raw_text = "def evil():\n    return '<b>' & 2\n";
  r.pairs.push_back(make_pair(q, c, Verdict::conflict, SizeClass::medium));
  auto q2 = side("so", 3271651, "CC-BY-SA-3.0", true);
  auto c2 = side("pkg", 5, "NONE");
  r.pairs.push_back(make_pair(q2, c2, Verdict::lack_of_licensing));
  finalize_report(r);
  return r;
}

}  // namespace

TEST_CASE("finalize sorts, drops repeated keys and ignores created_at in the id") {
  auto r = fixture_report();
  const std::string id = r.report_id;
  CHECK(id.size() == 18);
  CHECK(id.rfind("r-", 0) == 0);
  auto again = r;
  again.pairs.push_back(again.pairs[0]);
  std::reverse(again.pairs.begin(), again.pairs.end());
  again.created_at = 42;
  finalize_report(again);
  CHECK(again.pairs == r.pairs);
  CHECK(again.report_id == id);
  again.pairs.pop_back();
  finalize_report(again);
  CHECK(again.report_id != id);
  CHECK(again.stats.total == 1);
}

TEST_CASE("report json round trip") {
  const auto r = fixture_report();
  const auto back = CloneReport::from_json(json::parse(r.to_json().dump()));
  CHECK(back == r);
  CHECK(r.to_json().at("created_at") == "2023-11-14T22:13:20Z");
  CHECK(aggregate_license_stats(back.pairs) == back.stats);
  CHECK_THROWS_AS(CloneReport::from_json(json{{"report_id", "x"}}), Error);
}

TEST_CASE("html links the post and escapes code") {
  const std::string html = render_html(fixture_report());
  CHECK(html.find("href=\"https://stackoverflow.com/a/3271650\"") != std::string::npos);
  CHECK(html.find("<script>") == std::string::npos);
  CHECK(html.find("&lt;script&gt;") != std::string::npos);
  CHECK(html.find("CC-BY-SA-3.0 <span class=\"prov\">(corpus-default)</span>") != std::string::npos);
  CHECK(html.find("MIT <span class=\"prov\">(package-file)</span>") != std::string::npos);
  CHECK(html.find("2010-07-16T09:31:12Z") != std::string::npos);
  CHECK(html.find("Percent of Clones") < html.find("Clone pairs"));
}

TEST_CASE("html for an empty report has an empty pairs table") {
  CloneReport r;
  r.query_set_id = "qs-empty";
  finalize_report(r);
  const std::string html = render_html(r);
  const auto table = html.find("<table class=\"pairs\">");
  REQUIRE(table != std::string::npos);
  const auto body = html.find("<tbody>\n", table);
  CHECK(html.compare(body, 17, "<tbody>\n</tbody>\n") == 0);
  CHECK(html.ends_with("</html>\n"));
}

TEST_CASE("html golden file") {
  const std::string html = render_html(fixture_report());
  const std::filesystem::path golden = std::filesystem::path(SAPP_GOLDEN_DIR) / "report.html";
  if (const char* update = std::getenv("SAPP_UPDATE_GOLDEN"); update != nullptr && *update == '1') {
    write_file_atomic(golden, html);
  }
  REQUIRE(std::filesystem::exists(golden));
  CHECK(read_file(golden) == html);
}
