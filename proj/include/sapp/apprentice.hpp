#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "sapp/clone_engine.hpp"
#include "sapp/corpus.hpp"
#include "sapp/error.hpp"
#include "sapp/index_cache.hpp"
#include "sapp/license.hpp"

namespace httplib {
class Server;
}

namespace sapp {

enum class ApprenticeState { idle, loading, ready, querying };
std::string_view to_string(ApprenticeState s);
ApprenticeState parse_apprentice_state(std::string_view text);

struct ApprenticeStatus {
  std::string apprentice_id;
  std::optional<std::string> corpus_id;
  std::optional<std::string> corpus_hash;
  ApprenticeState state = ApprenticeState::idle;
  std::uint64_t block_count = 0;
  std::uint64_t indexed_count = 0;
  std::optional<double> theta;
  std::optional<std::uint64_t> min_tokens;
  CacheMetrics cache;

  nlohmann::json to_json() const;
  static ApprenticeStatus from_json(const nlohmann::json& j);
};

struct ApprenticeOptions {
  std::string apprentice_id = "apprentice";
  std::filesystem::path store = "sapp-store";
  std::size_t max_cache_entries = 8;
  /// theta and min_tokens used to index loaded corpora.
  DetectionConfig index_config;
  CompatibilityMatrix matrix = CompatibilityMatrix::shipped_default();
};

/// One shard worker. Loads are exclusive; queries run concurrently against the
/// immutable index; status never waits on a load or a query.
class Apprentice {
 public:
  explicit Apprentice(ApprenticeOptions options);

  /// Throws ErrorKind::conflict while another load runs.
  ApprenticeStatus load_corpus(Corpus corpus);
  /// Loads a corpus previously committed to the store. ErrorKind::not_found
  /// when the store has no matching entry.
  ApprenticeStatus load_from_store(const std::string& corpus_hash);

  /// ErrorKind::unavailable unless ready; ErrorKind::config when theta differs
  /// from the loaded index or min_tokens is below it.
  std::vector<ClonePair> query(const std::vector<CodeBlock>& blocks, const DetectionConfig& config);

  ApprenticeStatus status() const;
  const ApprenticeOptions& options() const { return options_; }

  /// Called from inside query() after the state switches to querying.
  void set_query_hook(std::function<void()> hook);
  /// Called from inside a load after the state switches to loading.
  void set_load_hook(std::function<void()> hook);

 private:
  template <class Fn>
  ApprenticeStatus exclusive_load(Fn&& obtain);

  ApprenticeOptions options_;
  IndexCache cache_;
  mutable std::mutex mu_;  // guards the fields below; never held during work
  bool loading_ = false;
  std::shared_ptr<const InvertedIndex> index_;
  std::atomic<int> in_flight_{0};
  std::function<void()> query_hook_;
  std::function<void()> load_hook_;
};

/// HTTP front of an Apprentice:
///   PUT  /v1/corpus   JSON-lines body, or {"store_ref": hash}; gzip accepted
///   GET  /v1/status
///   POST /v1/query    {"config": {...}, "blocks": [...]} → {"pairs": [...]}
class ApprenticeServer {
 public:
  explicit ApprenticeServer(Apprentice& apprentice);
  ~ApprenticeServer();
  ApprenticeServer(const ApprenticeServer&) = delete;
  ApprenticeServer& operator=(const ApprenticeServer&) = delete;

  /// Binds (port 0 picks a free one) and serves on a background thread.
  /// Throws ErrorKind::io when the port is taken.
  int start(const std::string& host = "127.0.0.1", int port = 0);
  void stop();
  int port() const { return port_; }

 private:
  Apprentice& apprentice_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  int port_ = 0;
};

/// Maps an Error kind onto an HTTP status code.
int http_status_for(ErrorKind kind);

}  // namespace sapp
