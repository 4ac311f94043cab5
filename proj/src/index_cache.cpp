#include "sapp/index_cache.hpp"

#include <zlib.h>

#include <algorithm>
#include <cstring>
#include <system_error>

#include "sapp/error.hpp"
#include "sapp/tokenizer.hpp"
#include "sapp/util.hpp"

namespace sapp {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// A hash names one directory directly under the store.
bool is_store_name(const std::string& name) {
  return !name.empty() && name != "." && name != ".." && name.find_first_of("/\\") == std::string::npos;
}

constexpr std::string_view kMagic = "SAPPIDX1";
constexpr const char* kEntryFile = "entry.bin";

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void str(std::string_view s) {
    u64(s.size());
    out_.append(s);
  }
  void section(const Writer& w) { str(w.out_); }
  std::string& bytes() { return out_; }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}
  std::uint8_t u8() { return static_cast<std::uint8_t>(take(1)[0]); }
  std::uint32_t u32() {
    auto b = take(4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<std::uint8_t>(b[i]);
    return v;
  }
  std::uint64_t u64() {
    auto b = take(8);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<std::uint8_t>(b[i]);
    return v;
  }
  std::string_view str() { return take(u64()); }
  /// Bounds a count read from the stream by the bytes it would need.
  std::uint64_t count(std::size_t min_bytes_each) {
    const auto n = u64();
    if (min_bytes_each != 0 && n > remaining() / min_bytes_each) fail("count exceeds payload");
    return n;
  }
  std::size_t remaining() const { return in_.size() - pos_; }
  bool done() const { return pos_ == in_.size(); }

 private:
  std::string_view take(std::uint64_t n) {
    if (n > remaining()) fail("truncated section");
    auto s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  [[noreturn]] static void fail(const std::string& why) { throw Error(ErrorKind::parse, "cache entry: " + why); }

  std::string_view in_;
  std::size_t pos_ = 0;
};

std::uint32_t crc_of(std::string_view bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    const auto n = static_cast<uInt>(std::min<std::size_t>(bytes.size() - pos, 1u << 30));
    crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data() + pos), n);
    pos += n;
  }
  return static_cast<std::uint32_t>(crc);
}

template <class E>
E checked_enum(std::uint8_t v, std::uint8_t max) {
  if (v > max) throw Error(ErrorKind::parse, "cache entry: enum out of range");
  return static_cast<E>(v);
}

struct SplitEntry {
  json header;
  std::string_view payload;
};

SplitEntry split_entry(std::string_view bytes) {
  if (bytes.size() < kMagic.size() + 4 || bytes.substr(0, kMagic.size()) != kMagic) {
    throw Error(ErrorKind::parse, "cache entry: bad magic");
  }
  Reader r(bytes.substr(kMagic.size()));
  const auto header_len = r.u32();
  const auto rest = bytes.substr(kMagic.size() + 4);
  if (header_len > rest.size()) throw Error(ErrorKind::parse, "cache entry: truncated header");
  SplitEntry e;
  try {
    e.header = json::parse(rest.substr(0, header_len));
  } catch (const json::exception& ex) {
    throw Error(ErrorKind::parse, std::string("cache entry: header: ") + ex.what());
  }
  e.payload = rest.substr(header_len);
  try {
    if (e.header.at("payload_bytes").get<std::uint64_t>() != e.payload.size()) {
      throw Error(ErrorKind::parse, "cache entry: payload length mismatch");
    }
    if (e.header.at("payload_crc32").get<std::uint32_t>() != crc_of(e.payload)) {
      throw Error(ErrorKind::parse, "cache entry: checksum mismatch");
    }
  } catch (const json::exception& ex) {
    throw Error(ErrorKind::parse, std::string("cache entry: header: ") + ex.what());
  }
  return e;
}

CacheFingerprint fingerprint_from(const json& header) {
  try {
    const auto& f = header.at("fingerprint");
    return {f.at("theta").get<double>(), f.at("min_tokens").get<std::uint64_t>(),
            f.at("tokenizer_version").get<std::string>()};
  } catch (const json::exception& ex) {
    throw Error(ErrorKind::parse, std::string("cache entry: fingerprint: ") + ex.what());
  }
}

void write_corpus(Writer& w, const Corpus& corpus, const std::unordered_map<std::string, std::uint32_t>& ids) {
  w.u64(corpus.blocks.size());
  for (const auto& b : corpus.blocks) {
    w.u64(b.block_id);
    w.str(b.corpus_id);
    w.u8(static_cast<std::uint8_t>(b.locator.kind));
    w.str(b.locator.path);
    w.u32(b.locator.start_line);
    w.u32(b.locator.end_line);
    w.u8(b.locator.url ? 1 : 0);
    if (b.locator.url) w.str(*b.locator.url);
    w.u8(static_cast<std::uint8_t>(b.granularity));
    w.str(b.raw_text);
    w.u8(b.last_modified ? 1 : 0);
    if (b.last_modified) w.u64(static_cast<std::uint64_t>(*b.last_modified));
    w.str(b.license.id);
    w.u8(static_cast<std::uint8_t>(b.license.provenance));
    w.u64(b.tokens.distinct());
    for (const auto& [tok, n] : b.tokens.entries()) {
      w.u32(ids.at(tok));
      w.u32(n);
    }
  }
}

std::vector<CodeBlock> read_corpus(Reader& r, const std::vector<std::string>& dict) {
  std::vector<CodeBlock> blocks(r.count(40));
  for (auto& b : blocks) {
    b.block_id = r.u64();
    b.corpus_id = std::string(r.str());
    b.locator.kind = checked_enum<SourceKind>(r.u8(), 2);
    b.locator.path = std::string(r.str());
    b.locator.start_line = r.u32();
    b.locator.end_line = r.u32();
    if (r.u8() != 0) b.locator.url = std::string(r.str());
    b.granularity = checked_enum<Granularity>(r.u8(), 2);
    b.raw_text = std::string(r.str());
    if (r.u8() != 0) b.last_modified = static_cast<std::int64_t>(r.u64());
    b.license.id = std::string(r.str());
    b.license.provenance = checked_enum<LicenseProvenance>(r.u8(), 3);
    const auto n = r.count(8);
    for (std::uint64_t k = 0; k < n; ++k) {
      const auto id = r.u32();
      const auto freq = r.u32();
      if (id >= dict.size() || freq == 0) throw Error(ErrorKind::parse, "cache entry: bad token reference");
      b.tokens.add(dict[id], freq);
    }
  }
  return blocks;
}

}  // namespace

json CacheMetrics::to_json() const {
  return {{"hits", hits}, {"misses", misses}, {"builds", builds}, {"evictions", evictions}, {"corrupt", corrupt}};
}

CacheFingerprint CacheFingerprint::of(const DetectionConfig& config) {
  return {config.theta, config.min_tokens, std::string(kTokenizerVersion)};
}

json CacheFingerprint::to_json() const {
  return {{"theta", theta}, {"min_tokens", min_tokens}, {"tokenizer_version", tokenizer_version}};
}

std::string serialize_entry(const InvertedIndex& index) {
  const IndexData& d = index.data();
  const Corpus& corpus = index.corpus();
  std::unordered_map<std::string, std::uint32_t> ids;
  ids.reserve(d.tokens.size());
  for (std::uint32_t i = 0; i < d.tokens.size(); ++i) ids.emplace(d.tokens[i], i);

  Writer dict;
  dict.u64(d.tokens.size());
  for (const auto& t : d.tokens) dict.str(t);

  Writer blocks;
  write_corpus(blocks, corpus, ids);

  Writer idx;
  idx.u64(d.indexed.size());
  for (auto p : d.indexed) idx.u32(p);
  for (auto s : d.sizes) idx.u64(s);
  for (const auto& bag : d.bags) {
    idx.u64(bag.size());
    for (const auto& e : bag) {
      idx.u32(e.rank);
      idx.u32(e.freq);
    }
  }
  idx.u64(d.postings.size());
  for (const auto& list : d.postings) {
    idx.u64(list.size());
    for (const auto& p : list) {
      idx.u32(p.block);
      idx.u32(p.freq);
    }
  }

  Writer payload;
  payload.section(dict);
  payload.section(blocks);
  payload.section(idx);

  const json header = {{"format_version", kCacheFormatVersion},
                       {"corpus_hash", d.corpus_hash},
                       {"corpus_id", corpus.corpus_id},
                       {"corpus_created_at", corpus.created_at},
                       {"fingerprint", CacheFingerprint{d.theta, d.min_tokens, d.tokenizer_version}.to_json()},
                       {"created_at", now_seconds()},
                       {"block_count", corpus.blocks.size()},
                       {"payload_bytes", payload.bytes().size()},
                       {"payload_crc32", crc_of(payload.bytes())}};
  const std::string h = header.dump();
  Writer out;
  out.bytes().append(kMagic);
  out.u32(static_cast<std::uint32_t>(h.size()));
  out.bytes().append(h);
  out.bytes().append(payload.bytes());
  return std::move(out.bytes());
}

json read_entry_header(std::string_view bytes) { return split_entry(bytes).header; }

namespace {

InvertedIndex decode(std::string_view bytes, std::shared_ptr<const Corpus> known_corpus) {
  const auto entry = split_entry(bytes);
  const auto fp = fingerprint_from(entry.header);
  Reader payload(entry.payload);
  Reader dict_r(payload.str());
  const auto blocks_bytes = payload.str();
  Reader idx_r(payload.str());
  if (!payload.done()) throw Error(ErrorKind::parse, "cache entry: trailing bytes");

  IndexData d;
  d.theta = fp.theta;
  d.min_tokens = fp.min_tokens;
  d.tokenizer_version = fp.tokenizer_version;
  d.corpus_hash = entry.header.value("corpus_hash", std::string());
  d.tokens.resize(dict_r.count(8));
  for (auto& t : d.tokens) t = std::string(dict_r.str());

  if (!known_corpus) {
    auto corpus = std::make_shared<Corpus>();
    Reader blocks_r(blocks_bytes);
    corpus->blocks = read_corpus(blocks_r, d.tokens);
    corpus->corpus_id = entry.header.value("corpus_id", std::string());
    corpus->content_hash = d.corpus_hash;
    corpus->created_at = entry.header.value("corpus_created_at", std::int64_t{0});
    known_corpus = std::move(corpus);
  }
  const std::size_t n_blocks = known_corpus->blocks.size();

  const auto n = idx_r.count(4);
  d.indexed.resize(n);
  for (auto& p : d.indexed) {
    p = idx_r.u32();
    if (p >= n_blocks) throw Error(ErrorKind::parse, "cache entry: indexed position out of range");
  }
  d.sizes.resize(n);
  for (auto& s : d.sizes) s = idx_r.u64();
  d.bags.resize(n);
  for (auto& bag : d.bags) {
    bag.resize(idx_r.count(8));
    for (auto& e : bag) {
      e.rank = idx_r.u32();
      e.freq = idx_r.u32();
      if (e.rank >= d.tokens.size()) throw Error(ErrorKind::parse, "cache entry: rank out of range");
    }
  }
  d.postings.resize(idx_r.count(8));
  if (d.postings.size() != d.tokens.size()) throw Error(ErrorKind::parse, "cache entry: postings/dictionary mismatch");
  for (auto& list : d.postings) {
    list.resize(idx_r.count(8));
    for (auto& p : list) {
      p.block = idx_r.u32();
      p.freq = idx_r.u32();
      if (p.block >= n) throw Error(ErrorKind::parse, "cache entry: posting out of range");
    }
  }
  if (!idx_r.done()) throw Error(ErrorKind::parse, "cache entry: trailing index bytes");
  return InvertedIndex(std::move(known_corpus), std::move(d));
}

}  // namespace

InvertedIndex deserialize_entry(std::string_view bytes) { return decode(bytes, nullptr); }

IndexCache::IndexCache(fs::path store, std::size_t max_entries) : store_(std::move(store)), max_entries_(max_entries) {
  std::error_code ec;
  fs::create_directories(store_, ec);
  if (ec) throw Error(ErrorKind::io, "cannot create cache store " + store_.string() + ": " + ec.message());
}

fs::path IndexCache::entry_path(const std::string& corpus_hash) const { return store_ / corpus_hash / kEntryFile; }

std::shared_ptr<std::mutex> IndexCache::build_lock(const std::string& corpus_hash) {
  std::lock_guard lock(locks_mu_);
  auto& m = locks_[corpus_hash];
  if (!m) m = std::make_shared<std::mutex>();
  return m;
}

std::shared_ptr<const InvertedIndex> IndexCache::try_read(const std::string& corpus_hash, const CacheFingerprint& fp,
                                                          std::shared_ptr<const Corpus> corpus) {
  const auto path = entry_path(corpus_hash);
  std::error_code ec;
  if (!fs::exists(path, ec)) return nullptr;
  std::string bytes;
  try {
    bytes = read_file(path);
  } catch (const Error& e) {
    log(LogLevel::warn, std::string("cache: cannot read entry: ") + e.what());
    return nullptr;
  }
  try {
    const auto header = read_entry_header(bytes);
    if (header.value("format_version", 0u) != kCacheFormatVersion) return nullptr;
    if (header.value("corpus_hash", std::string()) != corpus_hash) {
      throw Error(ErrorKind::parse, "cache entry: stored under the wrong hash");
    }
    if (!(fingerprint_from(header) == fp)) return nullptr;
    auto index = std::make_shared<const InvertedIndex>(decode(bytes, std::move(corpus)));
    fs::last_write_time(path, fs::file_time_type::clock::now(), ec);
    return index;
  } catch (const Error& e) {
    ++corrupt_;
    log(LogLevel::warn, "cache: evicting corrupt entry " + corpus_hash + ": " + e.what());
    remove_entry(corpus_hash);
    return nullptr;
  }
}

std::shared_ptr<const InvertedIndex> IndexCache::get_or_build(std::shared_ptr<const Corpus> corpus,
                                                              const DetectionConfig& config) {
  config.validate();
  const std::string hash = corpus->content_hash.empty()
                               ? compute_content_hash(corpus->corpus_id, corpus->blocks)
                               : corpus->content_hash;
  const auto fp = CacheFingerprint::of(config);
  auto guard_mu = build_lock(hash);
  std::lock_guard guard(*guard_mu);

  if (auto hit = try_read(hash, fp, corpus)) {
    ++hits_;
    return hit;
  }
  ++misses_;
  ++builds_;
  auto index = std::make_shared<const InvertedIndex>(build_index(corpus, config));
  try {
    fs::create_directories(store_ / hash);
    write_file_atomic(entry_path(hash), serialize_entry(*index));
    enforce_capacity(hash);
  } catch (const std::exception& e) {
    log(LogLevel::warn, std::string("cache: cannot persist entry: ") + e.what());
  }
  return index;
}

std::shared_ptr<const InvertedIndex> IndexCache::load(const std::string& corpus_hash, const DetectionConfig& config) {
  config.validate();
  if (!is_store_name(corpus_hash)) {
    ++misses_;
    return nullptr;
  }
  auto guard_mu = build_lock(corpus_hash);
  std::lock_guard guard(*guard_mu);
  auto hit = try_read(corpus_hash, CacheFingerprint::of(config), nullptr);
  if (hit) ++hits_;
  else ++misses_;
  return hit;
}

void IndexCache::remove_entry(const std::string& corpus_hash) {
  std::error_code ec;
  if (fs::remove_all(store_ / corpus_hash, ec) > 0) ++evictions_;
}

void IndexCache::evict(const std::string& corpus_hash) {
  if (!is_store_name(corpus_hash)) return;
  auto guard_mu = build_lock(corpus_hash);
  std::lock_guard guard(*guard_mu);
  remove_entry(corpus_hash);
}

std::vector<std::string> IndexCache::entries() const {
  std::vector<std::string> out;
  std::error_code ec;
  for (const auto& d : fs::directory_iterator(store_, ec)) {
    if (d.is_directory() && fs::exists(d.path() / kEntryFile)) out.push_back(d.path().filename().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

void IndexCache::enforce_capacity(const std::string& keep) {
  if (max_entries_ == 0) return;
  std::vector<std::pair<fs::file_time_type, std::string>> aged;
  std::error_code ec;
  for (const auto& hash : entries()) {
    const auto t = fs::last_write_time(entry_path(hash), ec);
    if (!ec) aged.emplace_back(t, hash);
  }
  if (aged.size() <= max_entries_) return;
  std::sort(aged.begin(), aged.end());
  std::size_t excess = aged.size() - max_entries_;
  for (const auto& [t, hash] : aged) {
    if (excess == 0) break;
    if (hash == keep) continue;
    remove_entry(hash);
    --excess;
  }
}

CacheMetrics IndexCache::metrics() const {
  return {hits_.load(), misses_.load(), builds_.load(), evictions_.load(), corrupt_.load()};
}

}  // namespace sapp
