#include "sapp/clone_engine.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sapp/error.hpp"
#include "sapp/parallel.hpp"
#include "sapp/tokenizer.hpp"

namespace sapp {

using nlohmann::json;

void DetectionConfig::validate() const {
  if (!(theta > 0.0 && theta <= 1.0)) throw Error(ErrorKind::config, "theta must be in (0, 1]");
  if (min_tokens < 1) throw Error(ErrorKind::config, "min_tokens must be >= 1");
}

json DetectionConfig::to_json() const {
  return {{"theta", theta},
          {"min_tokens", min_tokens},
          {"exclude_self_pairs", exclude_self_pairs},
          {"denominator", denominator == Denominator::max_size ? "max" : "query"}};
}

DetectionConfig DetectionConfig::from_json(const json& j) {
  DetectionConfig c;
  try {
    c.theta = j.value("theta", c.theta);
    c.min_tokens = j.value("min_tokens", c.min_tokens);
    c.exclude_self_pairs = j.value("exclude_self_pairs", c.exclude_self_pairs);
    const std::string denom = j.value("denominator", std::string("max"));
    if (denom == "max") c.denominator = Denominator::max_size;
    else if (denom == "query") c.denominator = Denominator::query_size;
    else throw Error(ErrorKind::config, "denominator must be 'max' or 'query'");
  } catch (const json::exception& e) {
    throw Error(ErrorKind::config, std::string("malformed detection config: ") + e.what());
  }
  c.validate();
  return c;
}

std::uint64_t required_overlap(double theta, std::uint64_t size) {
  const long double exact = static_cast<long double>(theta) * static_cast<long double>(size);
  const auto r = static_cast<std::uint64_t>(std::ceil(exact - 1e-9L));
  return std::max<std::uint64_t>(r, 1);
}

std::uint64_t prefix_length(double theta, std::uint64_t size) {
  const std::uint64_t req = required_overlap(theta, size);
  return req > size ? 0 : size - req + 1;
}

bool is_clone(const TokenBag& a, const TokenBag& b, double theta) {
  return overlap(a, b) >= required_overlap(theta, std::max(a.total(), b.total()));
}

SizeClass size_class(std::uint32_t line_count) {
  if (line_count <= 10) return SizeClass::small;
  if (line_count <= 20) return SizeClass::medium;
  return SizeClass::large;
}

std::string_view to_string(SizeClass c) {
  switch (c) {
    case SizeClass::small: return "small";
    case SizeClass::medium: return "medium";
    case SizeClass::large: return "large";
  }
  return "small";
}

SizeClass parse_size_class(std::string_view text) {
  if (text == "small") return SizeClass::small;
  if (text == "medium") return SizeClass::medium;
  if (text == "large") return SizeClass::large;
  throw Error(ErrorKind::parse, "unknown size class '" + std::string(text) + "'");
}

BlockRef BlockRef::of(const CodeBlock& b) {
  return {b.key(), b.locator, b.granularity, b.license, b.last_modified, b.total_tokens(), b.raw_text};
}

bool pair_less(const ClonePair& a, const ClonePair& b) {
  if (a.query.key != b.query.key) return a.query.key < b.query.key;
  return a.corpus.key < b.corpus.key;
}

json to_json(const BlockRef& b) {
  return {{"corpus_id", b.key.corpus_id},
          {"block_id", b.key.block_id},
          {"kind", to_string(b.locator.kind)},
          {"path", b.locator.path},
          {"start_line", b.locator.start_line},
          {"end_line", b.locator.end_line},
          {"url", b.locator.url ? json(*b.locator.url) : json(nullptr)},
          {"granularity", to_string(b.granularity)},
          {"license", b.license.id},
          {"license_provenance", to_string(b.license.provenance)},
          {"last_modified", b.last_modified ? json(*b.last_modified) : json(nullptr)},
          {"total_tokens", b.total_tokens},
          {"line_count", b.locator.line_span()},
          {"raw_text", b.raw_text}};
}

BlockRef block_ref_from_json(const json& j) {
  BlockRef b;
  try {
    b.key.corpus_id = j.at("corpus_id").get<std::string>();
    b.key.block_id = j.at("block_id").get<std::uint64_t>();
    b.locator.kind = parse_source_kind(j.at("kind").get<std::string>());
    b.locator.path = j.at("path").get<std::string>();
    b.locator.start_line = j.at("start_line").get<std::uint32_t>();
    b.locator.end_line = j.at("end_line").get<std::uint32_t>();
    if (!j.at("url").is_null()) b.locator.url = j.at("url").get<std::string>();
    b.granularity = parse_granularity(j.value("granularity", std::string("file")));
    b.license.id = j.at("license").get<std::string>();
    b.license.provenance = parse_provenance(j.at("license_provenance").get<std::string>());
    if (!j.at("last_modified").is_null()) b.last_modified = j.at("last_modified").get<std::int64_t>();
    b.total_tokens = j.at("total_tokens").get<std::uint64_t>();
    b.raw_text = j.value("raw_text", std::string());
  } catch (const json::exception& e) {
    throw Error(ErrorKind::parse, std::string("malformed block reference: ") + e.what());
  }
  return b;
}

json to_json(const ClonePair& p) {
  return {{"query_block_id", p.query.key.block_id},
          {"corpus_block_id", p.corpus.key.block_id},
          {"query_corpus_id", p.query.key.corpus_id},
          {"corpus_corpus_id", p.corpus.key.corpus_id},
          {"overlap", p.overlap},
          {"required", p.required},
          {"similarity", p.similarity},
          {"size_class", to_string(p.size)},
          {"verdict", to_string(p.verdict)},
          {"query", to_json(p.query)},
          {"corpus", to_json(p.corpus)}};
}

ClonePair clone_pair_from_json(const json& j) {
  ClonePair p;
  try {
    p.query = block_ref_from_json(j.at("query"));
    p.corpus = block_ref_from_json(j.at("corpus"));
    p.overlap = j.at("overlap").get<std::uint64_t>();
    p.required = j.at("required").get<std::uint64_t>();
    p.similarity = j.at("similarity").get<double>();
    p.size = parse_size_class(j.at("size_class").get<std::string>());
    p.verdict = parse_verdict(j.at("verdict").get<std::string>());
  } catch (const json::exception& e) {
    throw Error(ErrorKind::parse, std::string("malformed clone pair: ") + e.what());
  }
  return p;
}

InvertedIndex::InvertedIndex(std::shared_ptr<const Corpus> corpus, IndexData data)
    : corpus_(std::move(corpus)), data_(std::move(data)) {
  rank_.reserve(data_.tokens.size());
  for (std::uint32_t r = 0; r < data_.tokens.size(); ++r) rank_.emplace(data_.tokens[r], r);
}

std::optional<std::uint32_t> InvertedIndex::rank_of(const std::string& token) const {
  auto it = rank_.find(token);
  if (it == rank_.end()) return std::nullopt;
  return it->second;
}

std::uint64_t InvertedIndex::prefix_contribution(std::size_t indexed_block) const {
  std::uint64_t n = 0;
  for (const auto& posting_list : data_.postings) {
    for (const auto& p : posting_list) {
      if (p.block == indexed_block) n += p.freq;
    }
  }
  // The last posted token may reach past the prefix boundary.
  return std::min(n, prefix_length(data_.theta, data_.sizes[indexed_block]));
}

namespace {

// Walks entries in rank order and returns how many distinct leading entries
// the first `budget` token occurrences touch.
std::size_t prefix_entries(std::span<const RankedEntry> entries, std::uint64_t budget) {
  std::size_t n = 0;
  for (const auto& e : entries) {
    if (budget == 0) break;
    budget -= std::min<std::uint64_t>(budget, e.freq);
    ++n;
  }
  return n;
}

std::uint64_t ranked_overlap(std::span<const RankedEntry> a, std::span<const RankedEntry> b) {
  std::uint64_t sum = 0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i].rank < b[j].rank) {
      ++i;
    } else if (a[i].rank > b[j].rank) {
      ++j;
    } else {
      sum += std::min(a[i].freq, b[j].freq);
      ++i;
      ++j;
    }
  }
  return sum;
}

}  // namespace

InvertedIndex build_index(std::shared_ptr<const Corpus> corpus, const DetectionConfig& config) {
  config.validate();
  IndexData d;
  d.theta = config.theta;
  d.min_tokens = config.min_tokens;
  d.tokenizer_version = std::string(kTokenizerVersion);
  d.corpus_hash = corpus->content_hash;

  const auto& blocks = corpus->blocks;
  for (std::uint32_t i = 0; i < blocks.size(); ++i) {
    if (blocks[i].total_tokens() >= config.min_tokens) d.indexed.push_back(i);
  }
  std::stable_sort(d.indexed.begin(), d.indexed.end(),
                   [&](std::uint32_t a, std::uint32_t b) { return blocks[a].key() < blocks[b].key(); });

  // Document frequency over indexed blocks; tokens of unindexed blocks get 0.
  std::unordered_map<std::string, std::uint32_t> df;
  for (const auto& b : blocks) {
    for (const auto& [tok, n] : b.tokens.entries()) df.try_emplace(tok, 0);
  }
  for (auto pos : d.indexed) {
    for (const auto& [tok, n] : blocks[pos].tokens.entries()) ++df[tok];
  }
  d.tokens.reserve(df.size());
  for (const auto& [tok, n] : df) d.tokens.push_back(tok);
  std::sort(d.tokens.begin(), d.tokens.end(), [&](const std::string& a, const std::string& b) {
    const auto fa = df.at(a), fb = df.at(b);
    return fa != fb ? fa < fb : a < b;
  });
  std::unordered_map<std::string, std::uint32_t> rank;
  rank.reserve(d.tokens.size());
  for (std::uint32_t r = 0; r < d.tokens.size(); ++r) rank.emplace(d.tokens[r], r);

  d.postings.resize(d.tokens.size());
  d.bags.reserve(d.indexed.size());
  for (std::uint32_t k = 0; k < d.indexed.size(); ++k) {
    const auto& b = blocks[d.indexed[k]];
    std::vector<RankedEntry> bag;
    bag.reserve(b.tokens.distinct());
    for (const auto& [tok, n] : b.tokens.entries()) bag.push_back({rank.at(tok), n});
    std::sort(bag.begin(), bag.end(), [](const RankedEntry& x, const RankedEntry& y) { return x.rank < y.rank; });
    const std::uint64_t size = b.total_tokens();
    const std::size_t touched = prefix_entries(bag, prefix_length(config.theta, size));
    for (std::size_t e = 0; e < touched; ++e) d.postings[bag[e].rank].push_back({k, bag[e].freq});
    d.sizes.push_back(size);
    d.bags.push_back(std::move(bag));
  }
  return InvertedIndex(std::move(corpus), std::move(d));
}

std::vector<ClonePair> detect_clones(const std::vector<CodeBlock>& query, const InvertedIndex& index,
                                     const DetectionConfig& config, const CompatibilityMatrix& matrix) {
  config.validate();
  if (config.theta != index.theta()) {
    throw Error(ErrorKind::config, "theta " + std::to_string(config.theta) + " does not match the index (" +
                                       std::to_string(index.theta()) + ")");
  }
  if (config.min_tokens < index.min_tokens()) {
    throw Error(ErrorKind::config, "min_tokens " + std::to_string(config.min_tokens) +
                                       " is below the index's " + std::to_string(index.min_tokens()));
  }

  const IndexData& d = index.data();
  const auto& corpus_blocks = index.corpus().blocks;
  const std::size_t n_indexed = d.indexed.size();

  std::vector<std::vector<ClonePair>> per_query(query.size());
  parallel_for(query.size(), config.threads, [&](std::size_t qi) {
    const CodeBlock& q = query[qi];
    const std::uint64_t qsize = q.total_tokens();
    if (qsize < config.min_tokens || n_indexed == 0) return;

    std::vector<RankedEntry> known;
    std::uint64_t unknown_occurrences = 0;
    for (const auto& [tok, n] : q.tokens.entries()) {
      if (auto r = index.rank_of(tok)) known.push_back({*r, n});
      else unknown_occurrences += n;
    }
    std::sort(known.begin(), known.end(), [](const RankedEntry& x, const RankedEntry& y) { return x.rank < y.rank; });

    std::vector<std::uint32_t> candidates;
    if (config.denominator == Denominator::max_size) {
      // Tokens absent from the dictionary sort first (corpus frequency 0) and
      // never collide, so they only consume prefix budget.
      const std::uint64_t prefix = prefix_length(config.theta, qsize);
      if (prefix > unknown_occurrences) {
        const std::size_t touched = prefix_entries(known, prefix - unknown_occurrences);
        std::vector<bool> seen(n_indexed, false);
        for (std::size_t e = 0; e < touched; ++e) {
          for (const auto& p : d.postings[known[e].rank]) {
            if (!seen[p.block]) {
              seen[p.block] = true;
              candidates.push_back(p.block);
            }
          }
        }
        std::sort(candidates.begin(), candidates.end());
      }
    } else {
      candidates.resize(n_indexed);
      std::iota(candidates.begin(), candidates.end(), 0u);
    }

    const BlockKey qkey = q.key();
    for (const auto c : candidates) {
      const CodeBlock& cb = corpus_blocks[d.indexed[c]];
      const std::uint64_t csize = d.sizes[c];
      if (csize < config.min_tokens) continue;
      if (config.exclude_self_pairs && cb.key() == qkey) continue;
      const std::uint64_t denom = config.denominator == Denominator::max_size ? std::max(qsize, csize) : qsize;
      const std::uint64_t required = required_overlap(config.theta, denom);
      if (required > std::min(qsize, csize)) continue;
      const std::uint64_t shared = ranked_overlap(known, d.bags[c]);
      if (shared < required) continue;

      ClonePair pair;
      pair.query = BlockRef::of(q);
      pair.corpus = BlockRef::of(cb);
      pair.overlap = shared;
      pair.required = required;
      pair.similarity = static_cast<double>(shared) / static_cast<double>(denom);
      pair.size = size_class(std::max(q.line_count(), cb.line_count()));
      pair.verdict = classify_pair(q.license, cb.license, matrix);
      per_query[qi].push_back(std::move(pair));
    }
  });

  std::vector<ClonePair> out;
  for (auto& v : per_query) {
    for (auto& p : v) out.push_back(std::move(p));
  }
  std::stable_sort(out.begin(), out.end(), pair_less);
  return out;
}

}  // namespace sapp
