#include "sapp/bench.hpp"

#include <chrono>
#include <numeric>

#include "sapp/error.hpp"

namespace sapp {

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double mean(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

nlohmann::json BenchResult::to_json() const {
  return {{"runs", cold_seconds.size()},
          {"cold_seconds", cold_seconds},
          {"warm_seconds", warm_seconds},
          {"cold_mean_seconds", cold_mean},
          {"warm_mean_seconds", warm_mean},
          {"warm_over_cold", ratio()},
          {"pairs", pairs},
          {"corpus_blocks", corpus_blocks},
          {"cache", cache.to_json()}};
}

Corpus load_or_ingest(const std::filesystem::path& source, const IngestConfig& config) {
  if (source.extension() == ".jsonl" && std::filesystem::is_regular_file(source)) {
    Corpus c = load_corpus_file(source);
    if (c.corpus_id.empty()) c.corpus_id = config.corpus_id;
    return c;
  }
  return ingest_directory(source, config).corpus;
}

BenchResult run_bench(const BenchOptions& options) {
  if (options.runs == 0) throw Error(ErrorKind::config, "bench needs at least one run");
  BenchResult r;
  std::string hash;
  std::vector<ClonePair> cold_pairs;
  std::uint64_t hits = 0, misses = 0, builds = 0;

  for (unsigned i = 0; i < options.runs; ++i) {
    IndexCache cache(options.store);
    if (!hash.empty()) cache.evict(hash);
    const auto t0 = std::chrono::steady_clock::now();
    auto corpus = std::make_shared<const Corpus>(load_or_ingest(options.corpus_source, options.ingest));
    auto index = cache.get_or_build(corpus, options.detection);
    auto pairs = detect_clones(options.query, *index, options.detection);
    r.cold_seconds.push_back(seconds_since(t0));
    hash = corpus->content_hash;
    r.corpus_blocks = corpus->blocks.size();
    cold_pairs = std::move(pairs);
    const auto m = cache.metrics();
    hits += m.hits;
    misses += m.misses;
    builds += m.builds;
  }

  for (unsigned i = 0; i < options.runs; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    IndexCache cache(options.store);
    auto index = cache.load(hash, options.detection);
    if (!index) throw Error(ErrorKind::io, "warm run missed the cache for " + hash);
    auto pairs = detect_clones(options.query, *index, options.detection);
    r.warm_seconds.push_back(seconds_since(t0));
    if (pairs != cold_pairs) throw Error(ErrorKind::io, "warm and cold runs disagree on the pair set");
    const auto m = cache.metrics();
    hits += m.hits;
    misses += m.misses;
    builds += m.builds;
  }

  r.cold_mean = mean(r.cold_seconds);
  r.warm_mean = mean(r.warm_seconds);
  r.pairs = cold_pairs.size();
  r.cache.hits = hits;
  r.cache.misses = misses;
  r.cache.builds = builds;
  return r;
}

}  // namespace sapp
