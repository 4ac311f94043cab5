#include <doctest.h>

#include <chrono>
#include <fstream>
#include <random>
#include <thread>

#include "sapp/error.hpp"
#include "sapp/index_cache.hpp"
#include "sapp/util.hpp"
#include "test_support.hpp"

using namespace sapp;
using testing::TempDir;

namespace {

std::shared_ptr<const Corpus> random_corpus(std::uint64_t seed, const std::string& id = "c", std::size_t n = 60) {
  std::mt19937_64 rng(seed);
  auto c = std::make_shared<Corpus>();
  c->corpus_id = id;
  c->blocks = testing::random_blocks(rng, id, n, 23, 90);
  for (auto& b : c->blocks) b.raw_text = "# block " + std::to_string(b.block_id) + "\n";
  seal(*c);
  return c;
}

DetectionConfig cfg(double theta = 0.8) {
  DetectionConfig c;
  c.theta = theta;
  c.min_tokens = 23;
  return c;
}

std::size_t store_size(const std::filesystem::path& store) {
  std::size_t n = 0;
  for (const auto& e : std::filesystem::directory_iterator(store)) n += e.is_directory() ? 1 : 0;
  return n;
}

void age(const std::filesystem::path& p, int seconds) {
  std::filesystem::last_write_time(p, std::filesystem::file_time_type::clock::now() - std::chrono::seconds(seconds));
}

}  // namespace

TEST_CASE("second call with the same corpus and config is a hit with no build") {
  TempDir tmp;
  IndexCache cache(tmp.path());
  const auto corpus = random_corpus(1);
  const auto first = cache.get_or_build(corpus, cfg());
  CHECK(cache.metrics().builds == 1);
  CHECK(cache.metrics().misses == 1);
  const auto second = cache.get_or_build(corpus, cfg());
  CHECK(cache.metrics().builds == 1);
  CHECK(cache.metrics().hits == 1);
  CHECK(first->data() == second->data());
  CHECK(std::filesystem::exists(cache.entry_path(corpus->content_hash)));
}

TEST_CASE("a fresh cache object warms from the store") {
  TempDir tmp;
  const auto corpus = random_corpus(2);
  IndexCache(tmp.path()).get_or_build(corpus, cfg());
  IndexCache warm(tmp.path());
  const auto idx = warm.load(corpus->content_hash, cfg());
  REQUIRE(idx != nullptr);
  CHECK(warm.metrics().hits == 1);
  CHECK(warm.metrics().builds == 0);
  CHECK(idx->corpus().blocks == corpus->blocks);
  CHECK(idx->corpus().content_hash == corpus->content_hash);
}

TEST_CASE("changed theta is a miss") {
  TempDir tmp;
  IndexCache cache(tmp.path());
  const auto corpus = random_corpus(3);
  cache.get_or_build(corpus, cfg(0.8));
  CHECK(cache.load(corpus->content_hash, cfg(0.7)) == nullptr);
  cache.get_or_build(corpus, cfg(0.7));
  CHECK(cache.metrics().builds == 2);
  CHECK(cache.metrics().hits == 0);
  DetectionConfig other = cfg(0.7);
  other.min_tokens = 30;
  CHECK(cache.load(corpus->content_hash, other) == nullptr);
}

TEST_CASE("evict then get_or_build rebuilds") {
  TempDir tmp;
  IndexCache cache(tmp.path());
  const auto corpus = random_corpus(4);
  cache.get_or_build(corpus, cfg());
  cache.evict(corpus->content_hash);
  CHECK_FALSE(std::filesystem::exists(cache.entry_path(corpus->content_hash)));
  cache.get_or_build(corpus, cfg());
  CHECK(cache.metrics().builds == 2);
}

TEST_CASE("evict of an unknown hash is a no-op") {
  TempDir tmp;
  IndexCache cache(tmp.path());
  const auto corpus = random_corpus(5);
  cache.get_or_build(corpus, cfg());
  CHECK_NOTHROW(cache.evict("0000000000000000"));
  CHECK_NOTHROW(cache.evict(corpus->content_hash));
  CHECK_NOTHROW(cache.evict(corpus->content_hash));
  CHECK(cache.entries().empty());
  // Names that would leave the store are ignored.
  TempDir outside;
  testing::write(outside / "entry.bin", "keep");
  CHECK_NOTHROW(cache.evict("../" + outside.path().filename().string()));
  CHECK(std::filesystem::exists(outside / "entry.bin"));
}

TEST_CASE("evict shrinks the store by exactly one entry") {
  TempDir tmp;
  IndexCache cache(tmp.path());
  std::vector<std::shared_ptr<const Corpus>> corpora;
  for (int i = 0; i < 4; ++i) {
    corpora.push_back(random_corpus(10 + i, "c" + std::to_string(i), 20));
    cache.get_or_build(corpora.back(), cfg());
  }
  CHECK(store_size(tmp.path()) == 4);
  cache.evict(corpora[1]->content_hash);
  CHECK(store_size(tmp.path()) == 3);
  CHECK(cache.entries().size() == 3);
}

TEST_CASE("corrupt entry is evicted and rebuilt") {
  TempDir tmp;
  IndexCache cache(tmp.path());
  const auto corpus = random_corpus(6);
  cache.get_or_build(corpus, cfg());
  const auto path = cache.entry_path(corpus->content_hash);
  {
    std::string bytes = read_file(path);
    bytes[bytes.size() - 10] ^= 0x5a;
    std::ofstream(path, std::ios::binary | std::ios::trunc) << bytes;
  }
  const auto idx = cache.get_or_build(corpus, cfg());
  REQUIRE(idx != nullptr);
  CHECK(cache.metrics().corrupt == 1);
  CHECK(cache.metrics().builds == 2);
  // The rebuilt entry is sound again.
  IndexCache again(tmp.path());
  CHECK(again.load(corpus->content_hash, cfg()) != nullptr);
}

TEST_CASE("truncated or garbage entries are never served") {
  TempDir tmp;
  IndexCache cache(tmp.path());
  const auto corpus = random_corpus(7);
  cache.get_or_build(corpus, cfg());
  const auto path = cache.entry_path(corpus->content_hash);
  const std::string bytes = read_file(path);
  std::ofstream(path, std::ios::binary | std::ios::trunc) << bytes.substr(0, bytes.size() / 2);
  CHECK(cache.load(corpus->content_hash, cfg()) == nullptr);
  CHECK(cache.metrics().corrupt == 1);
  CHECK_FALSE(std::filesystem::exists(path));

  CHECK_THROWS_AS(deserialize_entry("SAPPIDX1"), Error);
  CHECK_THROWS_AS(deserialize_entry("not an entry at all"), Error);
}

TEST_CASE("stray temp files are not entries") {
  TempDir tmp;
  IndexCache cache(tmp.path());
  testing::write(tmp / "abc" / "entry.bin.tmp", "partial");
  CHECK(cache.entries().empty());
  CHECK(cache.load("abc", cfg()) == nullptr);
}

TEST_CASE("serialization round trip") {
  const auto corpus = random_corpus(8);
  const auto idx = build_index(corpus, cfg(0.7));
  const std::string bytes = serialize_entry(idx);
  const auto back = deserialize_entry(bytes);
  CHECK(back.data() == idx.data());
  CHECK(back.corpus().blocks == corpus->blocks);
  const auto header = read_entry_header(bytes);
  CHECK(header.at("corpus_hash") == corpus->content_hash);
  CHECK(header.at("block_count") == corpus->blocks.size());
  CHECK(header.at("fingerprint").at("theta") == 0.7);
  CHECK(serialize_entry(back) == bytes);
}

TEST_CASE("cache transparency: cached and fresh indexes give identical pairs") {
  TempDir tmp;
  const auto corpus = random_corpus(9, "c", 100);
  const auto fresh = build_index(corpus, cfg());
  IndexCache(tmp.path()).get_or_build(corpus, cfg());
  const auto cached = IndexCache(tmp.path()).load(corpus->content_hash, cfg());
  REQUIRE(cached != nullptr);
  const auto a = detect_clones(corpus->blocks, fresh, cfg());
  const auto b = detect_clones(cached->corpus().blocks, *cached, cfg());
  CHECK(a == b);
  std::string ja, jb;
  for (const auto& p : a) ja += to_json(p).dump() + "\n";
  for (const auto& p : b) jb += to_json(p).dump() + "\n";
  CHECK(ja == jb);
}

TEST_CASE("least recently used entry is dropped past capacity") {
  TempDir tmp;
  IndexCache cache(tmp.path(), 2);
  const auto a = random_corpus(20, "a", 15);
  const auto b = random_corpus(21, "b", 15);
  const auto c = random_corpus(22, "c", 15);
  cache.get_or_build(a, cfg());
  cache.get_or_build(b, cfg());
  age(cache.entry_path(a->content_hash), 100);
  age(cache.entry_path(b->content_hash), 50);
  cache.get_or_build(a, cfg());  // hit refreshes a
  cache.get_or_build(c, cfg());
  const auto left = cache.entries();
  CHECK(left.size() == 2);
  CHECK(std::find(left.begin(), left.end(), b->content_hash) == left.end());
  CHECK(cache.metrics().evictions >= 1);
}

TEST_CASE("concurrent callers share one build") {
  TempDir tmp;
  IndexCache cache(tmp.path());
  const auto corpus = random_corpus(30, "c", 200);
  std::vector<std::thread> threads;
  std::vector<std::shared_ptr<const InvertedIndex>> got(8);
  for (int i = 0; i < 8; ++i) threads.emplace_back([&, i] { got[i] = cache.get_or_build(corpus, cfg()); });
  for (auto& t : threads) t.join();
  CHECK(cache.metrics().builds == 1);
  for (const auto& g : got) CHECK(g->data() == got[0]->data());
}
