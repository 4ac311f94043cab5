#include <doctest.h>

#include <sstream>

#include "sapp/error.hpp"
#include "sapp/stackexchange.hpp"

using namespace sapp;

namespace {

// Escaped "<pre><code>...</code></pre>" holding a 25-token function.
const char* kCodeBody =
    "&lt;p&gt;Try this:&lt;/p&gt;&lt;pre&gt;&lt;code&gt;def pairs(items):&#xA;"
    "    out = []&#xA;    for i in range(len(items) - 1):&#xA;"
    "        out.append((items[i], items[i + 1]))&#xA;    return out&#xA;"
    "&lt;/code&gt;&lt;/pre&gt;";

std::string row(int id, int type, const std::string& body, const std::string& extra = "") {
  return "  <row Id=\"" + std::to_string(id) + "\" PostTypeId=\"" + std::to_string(type) + "\" Body=\"" + body +
         "\" CreationDate=\"2010-07-16T09:31:12.340\"" + extra + " />\n";
}

std::string dump(const std::string& rows) {
  return "<?xml version=\"1.0\" encoding=\"utf-8\"?>\n<posts>\n" + rows + "</posts>\n";
}

StackExchangeConfig config(const std::string& tag = "") {
  StackExchangeConfig c;
  c.ingest.corpus_id = "so";
  c.tag_filter = tag;
  return c;
}

IngestResult run(const std::string& xml, const StackExchangeConfig& c) {
  std::istringstream in(xml);
  return ingest_stackexchange_dump(in, c);
}

}  // namespace

TEST_CASE("single question row with one code element") {
  const auto r = run(dump(row(42, 1, kCodeBody, " Tags=\"&lt;python&gt;\"")), config());
  REQUIRE(r.corpus.blocks.size() == 1);
  const auto& b = r.corpus.blocks[0];
  CHECK(b.locator.kind == SourceKind::stackexchange_post);
  CHECK(b.locator.path == "42");
  CHECK(b.locator.url.value() == "https://stackoverflow.com/q/42");
  CHECK(b.total_tokens() >= 23);
  CHECK(b.raw_text.find("def pairs(items):") == 0);
  // 2010-07-16T09:31:12Z
  CHECK(b.last_modified.value() == 1279272672);
}

TEST_CASE("row without code gives no blocks") {
  const auto r = run(dump(row(7, 1, "&lt;p&gt;no code here&lt;/p&gt;", " Tags=\"&lt;python&gt;\"")), config());
  CHECK(r.corpus.blocks.empty());
  CHECK(r.log.rows_seen == 1);
}

TEST_CASE("answer url uses the answer template") {
  const auto r = run(dump(row(3271650, 2, kCodeBody, " ParentId=\"1\"")), config());
  REQUIRE(r.corpus.blocks.size() == 1);
  const std::string url = r.corpus.blocks[0].locator.url.value();
  CHECK(url == "https://stackoverflow.com/a/3271650");
  CHECK(url.ends_with("/a/3271650"));
}

TEST_CASE("tag filter keeps tagged questions and their answers") {
  const std::string xml = dump(row(1, 1, kCodeBody, " Tags=\"&lt;python&gt;&lt;list&gt;\"") +
                               row(2, 1, kCodeBody, " Tags=\"&lt;java&gt;\"") +
                               row(3, 2, kCodeBody, " ParentId=\"1\"") + row(4, 2, kCodeBody, " ParentId=\"2\"") +
                               row(5, 1, kCodeBody, " Tags=\"|python|\""));
  const auto r = run(xml, config("python"));
  std::vector<std::string> ids;
  for (const auto& b : r.corpus.blocks) ids.push_back(b.locator.path);
  CHECK(ids == std::vector<std::string>{"1", "3", "5"});
  CHECK(r.log.rows_seen == 5);

  const auto all = run(xml, config());
  CHECK(all.corpus.blocks.size() == 5);
}

TEST_CASE("tag match is exact, not a prefix") {
  const auto r = run(dump(row(1, 1, kCodeBody, " Tags=\"&lt;python-3.x&gt;\"")), config("python"));
  CHECK(r.corpus.blocks.empty());
}

TEST_CASE("each code element is its own candidate") {
  std::string body = kCodeBody;
  body += body;
  const auto r = run(dump(row(9, 2, body, " ParentId=\"1\"")), config());
  CHECK(r.corpus.blocks.size() == 2);
  CHECK(r.corpus.blocks[0].block_id == 1);
  CHECK(r.corpus.blocks[1].block_id == 2);
}

TEST_CASE("malformed rows are counted and skipped") {
  const std::string xml = dump("  <row PostTypeId=\"1\" Body=\"x\" />\n"
                               "  <row Id=\"abc\" PostTypeId=\"1\" Body=\"x\" />\n"
                               "  <row Id=\"5\" PostTypeId=\"2\" />\n" +
                               row(6, 2, kCodeBody, " ParentId=\"1\""));
  const auto r = run(xml, config());
  CHECK(r.log.malformed_rows == 3);
  CHECK(r.corpus.blocks.size() == 1);
}

TEST_CASE("truncated stream keeps completed rows then fails") {
  std::string xml = dump(row(1, 2, kCodeBody, " ParentId=\"9\"") + row(2, 2, kCodeBody, " ParentId=\"9\""));
  xml = xml.substr(0, xml.rfind("<row") + 20);
  try {
    run(xml, config());
    FAIL("expected truncation");
  } catch (const TruncatedDump& e) {
    CHECK(e.kind() == ErrorKind::truncated);
    CHECK(e.partial().corpus.blocks.size() == 1);
    CHECK(e.partial().corpus.blocks[0].locator.path == "1");
  }
}

TEST_CASE("corpus default license applies to headerless snippets") {
  auto c = config();
  c.ingest.default_license = "CC-BY-SA-3.0";
  const auto r = run(dump(row(1, 2, kCodeBody, " ParentId=\"9\"")), c);
  REQUIRE(r.corpus.blocks.size() == 1);
  CHECK(r.corpus.blocks[0].license.id == "CC-BY-SA-3.0");
  CHECK(r.corpus.blocks[0].license.provenance == LicenseProvenance::corpus_default);
}

TEST_CASE("html helpers") {
  CHECK(extract_code_elements("<p>a</p><code>x &lt; 1 &amp;&amp; y</code><code></code>") ==
        std::vector<std::string>{"x < 1 && y", ""});
  CHECK(strip_html("<p>Python <b>Software</b> Foundation &amp; co</p>") == "Python Software Foundation & co");
  CHECK(split_tags("<python><list>") == std::vector<std::string>{"python", "list"});
  CHECK(split_tags("|python|list|") == std::vector<std::string>{"python", "list"});
  CHECK(instantiate_url("https://x/a/{id}", 3271650) == "https://x/a/3271650");
}

TEST_CASE("ingest of the same dump is deterministic") {
  const std::string xml = dump(row(1, 1, kCodeBody, " Tags=\"&lt;python&gt;\"") + row(2, 2, kCodeBody, " ParentId=\"1\""));
  CHECK(run(xml, config()).corpus.content_hash == run(xml, config()).corpus.content_hash);
}
