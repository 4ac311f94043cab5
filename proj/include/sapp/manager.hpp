#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "sapp/apprentice.hpp"
#include "sapp/corpus.hpp"
#include "sapp/report.hpp"
#include "sapp/run_config.hpp"

namespace httplib {
class Server;
}

namespace sapp {

struct ApprenticeRecord {
  std::string apprentice_id;
  std::string base_url;
  nlohmann::json last_status = nlohmann::json::object();
  std::int64_t registered_at = 0;

  nlohmann::json to_json() const;
  static ApprenticeRecord from_json(const nlohmann::json& j);
};

struct QuerySetRecord {
  std::string query_set_id;
  std::string corpus_id;
  std::string corpus_hash;
  std::uint64_t block_count = 0;
  std::int64_t created_at = 0;

  nlohmann::json to_json() const;
  static QuerySetRecord from_json(const nlohmann::json& j);
};

struct ManagerOptions {
  std::filesystem::path data_dir = "sapp-manager";
  /// Query blocks per request to an apprentice.
  std::size_t chunk_size = 10000;
  std::chrono::seconds timeout{300};
};

/// Status probe and query transport to one apprentice.
ApprenticeStatus probe_apprentice(const std::string& base_url, std::chrono::seconds timeout);

/// Registry, query sets and reports live as JSON files under data_dir:
/// registry.json, querysets/<id>.jsonl + .json, reports/<id>.json.
class Manager {
 public:
  explicit Manager(ManagerOptions options);

  /// Probes GET /v1/status. ErrorKind::unavailable when unreachable. A known
  /// base_url refreshes its record.
  ApprenticeRecord register_apprentice(const std::string& base_url);
  std::vector<ApprenticeRecord> apprentices() const;

  QuerySetRecord create_query_set(const Corpus& corpus);
  QuerySetRecord query_set(const std::string& id) const;
  Corpus query_set_corpus(const std::string& id) const;

  /// Sends the query set to every ready apprentice in chunks, merges, computes
  /// stats and persists the report. ErrorKind::unavailable with no ready
  /// apprentice; a failing apprentice marks the report partial.
  CloneReport dispatch_query(const std::string& query_set_id, const RunConfig& config);

  CloneReport report(const std::string& report_id) const;
  /// format is "html" or "json".
  std::string render_report(const std::string& report_id, const std::string& format) const;
  SampleResult sample(const std::string& report_id, std::uint64_t n, std::optional<SizeClass> filter,
                      std::uint64_t seed) const;
  /// Scans the raw texts of every stored query set with this corpus id.
  std::vector<AttributionMatch> attribution(const std::string& corpus_id, const std::vector<std::string>& patterns) const;

  const ManagerOptions& options() const { return options_; }

 private:
  void save_registry() const;
  std::filesystem::path query_set_path(const std::string& id, const char* ext) const;
  std::filesystem::path report_path(const std::string& id) const;

  ManagerOptions options_;
  mutable std::mutex mu_;
  std::vector<ApprenticeRecord> registry_;
};

/// HTTP front of a Manager:
///   POST /v1/apprentices {base_url}      GET /v1/apprentices
///   POST /v1/querysets   JSON-lines body
///   POST /v1/reports     {query_set_id, config}
///   GET  /v1/reports/{id}?format=html|json
///   POST /v1/reports/{id}/sample {n, size_class, seed}
///   POST /v1/attribution {corpus_id, patterns}
class ManagerServer {
 public:
  explicit ManagerServer(Manager& manager);
  ~ManagerServer();
  ManagerServer(const ManagerServer&) = delete;
  ManagerServer& operator=(const ManagerServer&) = delete;

  int start(const std::string& host = "127.0.0.1", int port = 0);
  void stop();
  int port() const { return port_; }

 private:
  Manager& manager_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  int port_ = 0;
};

/// Splits "http://host:port" into host and port. ErrorKind::config otherwise.
std::pair<std::string, int> split_base_url(const std::string& base_url);

}  // namespace sapp
