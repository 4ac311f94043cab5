#include <doctest.h>

#include <algorithm>
#include <random>

#include "sapp/clone_engine.hpp"
#include "sapp/error.hpp"
#include "test_support.hpp"

using namespace sapp;
using testing::PairKey;

namespace {

std::shared_ptr<const Corpus> make_corpus(const std::string& id, std::vector<CodeBlock> blocks) {
  auto c = std::make_shared<Corpus>();
  c->corpus_id = id;
  c->blocks = std::move(blocks);
  seal(*c);
  return c;
}

DetectionConfig cfg(double theta, std::uint64_t min_tokens = 1, bool exclude_self = true) {
  DetectionConfig c;
  c.theta = theta;
  c.min_tokens = min_tokens;
  c.exclude_self_pairs = exclude_self;
  return c;
}

std::set<PairKey> keys(const std::vector<ClonePair>& pairs) {
  std::set<PairKey> out;
  for (const auto& p : pairs) out.insert({p.query.key.corpus_id, p.query.key.block_id, p.corpus.key.corpus_id, p.corpus.key.block_id});
  return out;
}

// Bag of n distinct tokens "<prefix>0".."<prefix>n-1".
std::map<std::string, std::uint32_t> distinct(const std::string& prefix, int n) {
  std::map<std::string, std::uint32_t> m;
  for (int i = 0; i < n; ++i) m[prefix + std::to_string(i)] = 1;
  return m;
}

// Two size-10 bags sharing exactly `shared` tokens.
std::pair<CodeBlock, CodeBlock> pair_with_overlap(int shared) {
  auto a = distinct("s", shared);
  auto b = a;
  for (const auto& [t, n] : distinct("a", 10 - shared)) a[t] = n;
  for (const auto& [t, n] : distinct("b", 10 - shared)) b[t] = n;
  return {testing::make_block("q", 1, a), testing::make_block("c", 1, b)};
}

}  // namespace

TEST_CASE("required overlap equals the exact rational ceiling") {
  for (int k = 1; k <= 10; ++k) {
    for (std::uint64_t t = 1; t <= 500; ++t) {
      const std::uint64_t expect = std::max<std::uint64_t>(1, (k * t + 9) / 10);
      REQUIRE(required_overlap(k / 10.0, t) == expect);
      REQUIRE(prefix_length(k / 10.0, t) == t - expect + 1);
    }
  }
  CHECK(required_overlap(0.8, 10) == 8);
  CHECK(required_overlap(0.7, 10) == 7);
}

TEST_CASE("is_clone at totals 10 and 10") {
  for (int shared = 0; shared <= 10; ++shared) {
    const auto [q, c] = pair_with_overlap(shared);
    CHECK(overlap(q.tokens, c.tokens) == static_cast<std::uint64_t>(shared));
    CHECK(is_clone(q.tokens, c.tokens, 0.8) == (shared >= 8));
    CHECK(is_clone(q.tokens, c.tokens, 0.8) == is_clone(c.tokens, q.tokens, 0.8));
  }
  const auto [q, c] = pair_with_overlap(10);
  for (double theta : {0.1, 0.5, 0.99, 1.0}) CHECK(is_clone(q.tokens, q.tokens, theta));
}

TEST_CASE("detection at totals 10 and 10 reports overlaps of 8 and more") {
  for (int shared = 7; shared <= 10; ++shared) {
    const auto [q, c] = pair_with_overlap(shared);
    const auto index = build_index(make_corpus("c", {c}), cfg(0.8));
    const auto pairs = detect_clones({q}, index, cfg(0.8));
    CHECK(pairs.size() == (shared >= 8 ? 1u : 0u));
    if (!pairs.empty()) {
      CHECK(pairs[0].overlap == static_cast<std::uint64_t>(shared));
      CHECK(pairs[0].required == 8);
      CHECK(pairs[0].similarity == doctest::Approx(shared / 10.0));
    }
  }
}

TEST_CASE("prefix lengths 3 at theta 0.8 and 1 at theta 1.0") {
  const auto block = testing::make_block("c", 1, distinct("t", 10));
  const auto at08 = build_index(make_corpus("c", {block}), cfg(0.8));
  REQUIRE(at08.indexed_count() == 1);
  CHECK(at08.prefix_contribution(0) == 3);

  const auto at10 = build_index(make_corpus("c", {block}), cfg(1.0));
  CHECK(at10.prefix_contribution(0) == 1);

  // Repeated tokens count by occurrence.
  const auto heavy = testing::make_block("c", 1, {{"x", 6}, {"y", 4}});
  CHECK(build_index(make_corpus("c", {heavy}), cfg(0.8)).prefix_contribution(0) == 3);
}

TEST_CASE("identical blocks contribute identical postings") {
  const auto a = testing::make_block("c", 1, distinct("t", 12));
  const auto b = testing::make_block("c", 2, distinct("t", 12));
  const auto index = build_index(make_corpus("c", {a, b}), cfg(0.8));
  const auto& d = index.data();
  CHECK(d.bags[0] == d.bags[1]);
  for (const auto& list : d.postings) {
    if (list.empty()) continue;
    REQUIRE(list.size() == 2);
    CHECK(list[0].freq == list[1].freq);
  }
}

TEST_CASE("global order is ascending document frequency then token") {
  const auto a = testing::make_block("c", 1, {{"common", 1}, {"zeta", 1}, {"alpha", 1}});
  const auto b = testing::make_block("c", 2, {{"common", 3}, {"mid", 1}});
  const auto c = testing::make_block("c", 3, {{"common", 1}, {"mid", 1}});
  const auto index = build_index(make_corpus("c", {a, b, c}), cfg(0.8));
  CHECK(index.data().tokens == std::vector<std::string>{"alpha", "zeta", "mid", "common"});
  CHECK(index.rank_of("alpha").value() == 0);
  CHECK_FALSE(index.rank_of("absent").has_value());
}

TEST_CASE("self pairs toggle") {
  const auto block = testing::make_block("c", 1, distinct("t", 30));
  const auto corpus = make_corpus("c", {block});
  const auto index = build_index(corpus, cfg(0.8));
  CHECK(detect_clones(corpus->blocks, index, cfg(0.8, 1, true)).empty());
  const auto pairs = detect_clones(corpus->blocks, index, cfg(0.8, 1, false));
  REQUIRE(pairs.size() == 1);
  CHECK(pairs[0].similarity == 1.0);
}

TEST_CASE("empty query and empty corpus") {
  const auto corpus = make_corpus("c", {testing::make_block("c", 1, distinct("t", 30))});
  CHECK(detect_clones({}, build_index(corpus, cfg(0.8)), cfg(0.8)).empty());
  const auto empty = build_index(make_corpus("e", {}), cfg(0.8));
  CHECK(empty.indexed_count() == 0);
  CHECK(detect_clones(corpus->blocks, empty, cfg(0.8)).empty());
}

TEST_CASE("size class boundaries") {
  CHECK(size_class(1) == SizeClass::small);
  CHECK(size_class(10) == SizeClass::small);
  CHECK(size_class(11) == SizeClass::medium);
  CHECK(size_class(20) == SizeClass::medium);
  CHECK(size_class(21) == SizeClass::large);
  for (auto c : {SizeClass::small, SizeClass::medium, SizeClass::large}) CHECK(parse_size_class(to_string(c)) == c);
}

TEST_CASE("pair size class uses the longer side") {
  auto q = testing::make_block("q", 1, distinct("t", 30), 4);
  auto c = testing::make_block("c", 1, distinct("t", 30), 15);
  const auto pairs = detect_clones({q}, build_index(make_corpus("c", {c}), cfg(0.8)), cfg(0.8));
  REQUIRE(pairs.size() == 1);
  CHECK(pairs[0].size == SizeClass::medium);
}

TEST_CASE("22 and 23 token twins under min tokens 23") {
  auto small = distinct("t", 22);
  auto big = small;
  big["extra"] = 1;
  const auto corpus =
      make_corpus("c", {testing::make_block("c", 1, small), testing::make_block("c", 2, big), testing::make_block("c", 3, big)});
  const auto index = build_index(corpus, cfg(0.8, 23));
  CHECK(index.indexed_count() == 2);
  const auto pairs = detect_clones(corpus->blocks, index, cfg(0.8, 23));
  REQUIRE(pairs.size() == 2);
  for (const auto& p : pairs) {
    CHECK(p.query.key.block_id != 1);
    CHECK(p.corpus.key.block_id != 1);
    CHECK(p.query.total_tokens >= 23);
  }
}

TEST_CASE("configuration mismatches are rejected") {
  const auto corpus = make_corpus("c", {testing::make_block("c", 1, distinct("t", 30))});
  const auto index = build_index(corpus, cfg(0.8, 10));
  auto expect_config = [&](const DetectionConfig& c) {
    try {
      detect_clones(corpus->blocks, index, c);
      FAIL("expected a config error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::config);
    }
  };
  expect_config(cfg(0.7, 10));
  expect_config(cfg(0.8, 5));
  CHECK_NOTHROW(detect_clones(corpus->blocks, index, cfg(0.8, 20)));
  CHECK_THROWS_AS(cfg(0.0).validate(), Error);
  CHECK_THROWS_AS(cfg(1.01).validate(), Error);
  CHECK_THROWS_AS(cfg(0.8, 0).validate(), Error);
}

TEST_CASE("property: prefix filtering matches the brute force oracle") {
  std::mt19937_64 rng(20240601);
  int compared = 0;
  for (int round = 0; round < 40; ++round) {
    const int tenths = std::array{5, 7, 8, 10}[round % 4];
    auto corpus_blocks = testing::random_blocks(rng, "c", 50, 23, 120);
    auto query_blocks = testing::random_blocks(rng, "q", 20, 23, 120, &corpus_blocks);
    const auto corpus = make_corpus("c", corpus_blocks);
    const auto index = build_index(corpus, cfg(tenths / 10.0, 23));
    const auto got = keys(detect_clones(query_blocks, index, cfg(tenths / 10.0, 23)));
    const auto want = testing::brute_force(query_blocks, corpus_blocks, tenths, 23, true);
    CHECK(got == want);
    compared += static_cast<int>(want.size());

    // Intra-set run with self-pair exclusion.
    const auto intra = keys(detect_clones(corpus->blocks, index, cfg(tenths / 10.0, 23)));
    CHECK(intra == testing::brute_force(corpus_blocks, corpus_blocks, tenths, 23, true));
  }
  CHECK(compared > 40);  // the generator plants enough clones to make this meaningful
}

TEST_CASE("property: reported pairs carry consistent numbers") {
  std::mt19937_64 rng(99);
  auto corpus_blocks = testing::random_blocks(rng, "c", 60, 23, 80);
  const auto corpus = make_corpus("c", corpus_blocks);
  const auto index = build_index(corpus, cfg(0.7, 23));
  for (const auto& p : detect_clones(corpus->blocks, index, cfg(0.7, 23))) {
    const auto& q = corpus->blocks[p.query.key.block_id - 1];
    const auto& c = corpus->blocks[p.corpus.key.block_id - 1];
    CHECK(p.overlap == overlap(q.tokens, c.tokens));
    CHECK(p.overlap >= p.required);
    CHECK(p.required == required_overlap(0.7, std::max(q.total_tokens(), c.total_tokens())));
    CHECK(p.similarity >= 0.7);
    CHECK(p.similarity <= 1.0);
    CHECK(p.size == size_class(std::max(q.line_count(), c.line_count())));
  }
}

TEST_CASE("property: raising theta never adds pairs") {
  std::mt19937_64 rng(5);
  auto blocks = testing::random_blocks(rng, "c", 80, 23, 100);
  const auto corpus = make_corpus("c", blocks);
  std::set<PairKey> previous;
  bool first = true;
  for (int tenths = 10; tenths >= 3; --tenths) {
    const double theta = tenths / 10.0;
    const auto now = keys(detect_clones(corpus->blocks, build_index(corpus, cfg(theta, 23)), cfg(theta, 23)));
    if (!first) CHECK(std::includes(now.begin(), now.end(), previous.begin(), previous.end()));
    previous = now;
    first = false;
  }
}

TEST_CASE("property: overlap one below required is never reported") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const int t = 23 + static_cast<int>(rng() % 100);
    const int tenths = 5 + static_cast<int>(rng() % 6);
    const int req = static_cast<int>((tenths * t + 9) / 10);
    const int shared = req - 1;
    auto a = distinct("s", shared);
    auto b = a;
    for (const auto& [tok, n] : distinct("a", t - shared)) a[tok] = n;
    for (const auto& [tok, n] : distinct("b", t - shared)) b[tok] = n;
    const auto q = testing::make_block("q", 1, a);
    const auto c = testing::make_block("c", 1, b);
    const double theta = tenths / 10.0;
    const auto index = build_index(make_corpus("c", {c}), cfg(theta, 23));
    CHECK(detect_clones({q}, index, cfg(theta, 23)).empty());
  }
}

TEST_CASE("query denominator matches its own oracle") {
  std::mt19937_64 rng(77);
  auto corpus_blocks = testing::random_blocks(rng, "c", 40, 23, 120);
  auto query_blocks = testing::random_blocks(rng, "q", 15, 23, 120, &corpus_blocks);
  DetectionConfig c = cfg(0.8, 23);
  c.denominator = Denominator::query_size;
  const auto index = build_index(make_corpus("c", corpus_blocks), c);
  const auto got = keys(detect_clones(query_blocks, index, c));
  std::set<PairKey> want;
  for (const auto& q : query_blocks) {
    for (const auto& b : corpus_blocks) {
      if (overlap(q.tokens, b.tokens) * 10 >= 8 * q.total_tokens()) want.insert({"q", q.block_id, "c", b.block_id});
    }
  }
  CHECK(got == want);
  // The looser reading never reports fewer pairs than the symmetric one.
  const auto strict = keys(detect_clones(query_blocks, index, cfg(0.8, 23)));
  CHECK(std::includes(got.begin(), got.end(), strict.begin(), strict.end()));
}

TEST_CASE("thread count does not change the result") {
  std::mt19937_64 rng(3);
  auto blocks = testing::random_blocks(rng, "c", 120, 23, 150);
  const auto corpus = make_corpus("c", blocks);
  DetectionConfig one = cfg(0.7, 23);
  one.threads = 1;
  DetectionConfig many = one;
  many.threads = 8;
  const auto index = build_index(corpus, one);
  const auto a = detect_clones(corpus->blocks, index, one);
  const auto b = detect_clones(corpus->blocks, index, many);
  CHECK(a == b);
  CHECK(std::is_sorted(a.begin(), a.end(), pair_less));
}

TEST_CASE("verdicts are attached from the matrix") {
  auto q = testing::make_block("q", 1, distinct("t", 30), 5, "CC-BY-SA-3.0");
  auto c = testing::make_block("c", 1, distinct("t", 30), 5, "MIT");
  auto n = testing::make_block("c", 2, distinct("t", 30), 5, "NONE");
  const auto pairs = detect_clones({q}, build_index(make_corpus("c", {c, n}), cfg(0.8)), cfg(0.8));
  REQUIRE(pairs.size() == 2);
  CHECK(pairs[0].verdict == Verdict::conflict);
  CHECK(pairs[1].verdict == Verdict::lack_of_licensing);
}

TEST_CASE("clone pair json round trip") {
  auto q = testing::make_block("q", 1, distinct("t", 30), 5, "GPL-3.0");
  q.locator.url = "https://stackoverflow.com/a/3271650";
  q.last_modified = 1279272672;
  q.raw_text = "x = 1\n";
  const auto c = testing::make_block("c", 7, distinct("t", 30), 12);
  const auto pairs = detect_clones({q}, build_index(make_corpus("c", {c}), cfg(0.8)), cfg(0.8));
  REQUIRE(pairs.size() == 1);
  const auto j = to_json(pairs[0]);
  for (const char* key : {"query_block_id", "corpus_block_id", "overlap", "required", "similarity", "size_class", "verdict"}) {
    CHECK_MESSAGE(j.contains(key), key);
  }
  CHECK(clone_pair_from_json(nlohmann::json::parse(j.dump())) == pairs[0]);
  CHECK(DetectionConfig::from_json(cfg(0.7, 9, false).to_json()).theta == 0.7);
}
