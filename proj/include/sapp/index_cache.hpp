#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "sapp/clone_engine.hpp"
#include "sapp/corpus.hpp"

namespace sapp {

inline constexpr std::uint32_t kCacheFormatVersion = 1;

struct CacheMetrics {
  std::uint64_t hits = 0;
  std::uint64_t misses = 0;
  std::uint64_t builds = 0;
  std::uint64_t evictions = 0;
  std::uint64_t corrupt = 0;

  nlohmann::json to_json() const;
};

/// (theta, min_tokens, tokenizer version) an entry was built with.
struct CacheFingerprint {
  double theta = 0.8;
  std::uint64_t min_tokens = 23;
  std::string tokenizer_version;

  static CacheFingerprint of(const DetectionConfig& config);
  nlohmann::json to_json() const;
  friend bool operator==(const CacheFingerprint&, const CacheFingerprint&) = default;
};

/// Entry layout: "SAPPIDX1", u32 header length, JSON header, then the payload
/// of length-prefixed binary sections (dictionary, corpus, index). The header
/// carries a CRC-32 of the payload.
std::string serialize_entry(const InvertedIndex& index);

/// Throws ErrorKind::parse on any structural damage.
InvertedIndex deserialize_entry(std::string_view bytes);

/// Reads only the JSON header.
nlohmann::json read_entry_header(std::string_view bytes);

/// On-disk index store: <store>/<corpus-hash>/entry.bin. Entries are written
/// to a temp file and renamed into place, so readers never see partial data.
/// Least recently used entries beyond max_entries are dropped after a write.
class IndexCache {
 public:
  explicit IndexCache(std::filesystem::path store, std::size_t max_entries = 8);

  /// Returns the stored index when (corpus hash, fingerprint) match; otherwise
  /// builds, persists and returns. A corrupt entry counts as a miss and is
  /// evicted.
  std::shared_ptr<const InvertedIndex> get_or_build(std::shared_ptr<const Corpus> corpus,
                                                    const DetectionConfig& config);

  /// Warm start by hash alone: corpus and index come from the entry. nullptr
  /// when absent, corrupt or built with another fingerprint.
  std::shared_ptr<const InvertedIndex> load(const std::string& corpus_hash, const DetectionConfig& config);

  /// Idempotent.
  void evict(const std::string& corpus_hash);

  /// Corpus hashes with a committed entry.
  std::vector<std::string> entries() const;
  CacheMetrics metrics() const;
  const std::filesystem::path& store() const { return store_; }
  std::filesystem::path entry_path(const std::string& corpus_hash) const;

 private:
  std::shared_ptr<std::mutex> build_lock(const std::string& corpus_hash);
  /// nullptr on absence or mismatch; evicts corrupt entries.
  std::shared_ptr<const InvertedIndex> try_read(const std::string& corpus_hash, const CacheFingerprint& fp,
                                                std::shared_ptr<const Corpus> corpus);
  void enforce_capacity(const std::string& keep);
  void remove_entry(const std::string& corpus_hash);

  std::filesystem::path store_;
  std::size_t max_entries_;
  std::mutex locks_mu_;
  std::map<std::string, std::shared_ptr<std::mutex>> locks_;
  std::atomic<std::uint64_t> hits_{0}, misses_{0}, builds_{0}, evictions_{0}, corrupt_{0};
};

}  // namespace sapp
