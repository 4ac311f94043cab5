#include "sapp/manager.hpp"

#include <httplib.h>

#include <algorithm>
#include <future>

#include "sapp/error.hpp"
#include "sapp/util.hpp"

namespace sapp {

namespace fs = std::filesystem;
using nlohmann::json;

json ApprenticeRecord::to_json() const {
  return {{"apprentice_id", apprentice_id},
          {"base_url", base_url},
          {"last_status", last_status},
          {"registered_at", format_utc(registered_at)}};
}

ApprenticeRecord ApprenticeRecord::from_json(const json& j) {
  ApprenticeRecord r;
  try {
    r.apprentice_id = j.at("apprentice_id").get<std::string>();
    r.base_url = j.at("base_url").get<std::string>();
    r.last_status = j.value("last_status", json::object());
    r.registered_at = parse_utc(j.at("registered_at").get<std::string>()).value_or(0);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::parse, std::string("malformed apprentice record: ") + e.what());
  }
  return r;
}

json QuerySetRecord::to_json() const {
  return {{"query_set_id", query_set_id},
          {"corpus_id", corpus_id},
          {"corpus_hash", corpus_hash},
          {"block_count", block_count},
          {"created_at", format_utc(created_at)}};
}

QuerySetRecord QuerySetRecord::from_json(const json& j) {
  QuerySetRecord r;
  try {
    r.query_set_id = j.at("query_set_id").get<std::string>();
    r.corpus_id = j.at("corpus_id").get<std::string>();
    r.corpus_hash = j.at("corpus_hash").get<std::string>();
    r.block_count = j.at("block_count").get<std::uint64_t>();
    r.created_at = parse_utc(j.at("created_at").get<std::string>()).value_or(0);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::parse, std::string("malformed query set record: ") + e.what());
  }
  return r;
}

std::pair<std::string, int> split_base_url(const std::string& base_url) {
  constexpr std::string_view scheme = "http://";
  if (base_url.rfind(scheme, 0) != 0) throw Error(ErrorKind::config, "apprentice url must start with http://");
  std::string rest = base_url.substr(scheme.size());
  while (!rest.empty() && rest.back() == '/') rest.pop_back();
  const auto colon = rest.rfind(':');
  if (colon == std::string::npos || colon == 0) return {rest, 80};
  try {
    std::size_t used = 0;
    const int port = std::stoi(rest.substr(colon + 1), &used);
    if (used != rest.size() - colon - 1 || port <= 0 || port > 65535) throw std::invalid_argument("port");
    return {rest.substr(0, colon), port};
  } catch (const std::exception&) {
    throw Error(ErrorKind::config, "bad port in url '" + base_url + "'");
  }
}

namespace {

std::unique_ptr<httplib::Client> client_for(const std::string& base_url, std::chrono::seconds timeout) {
  const auto [host, port] = split_base_url(base_url);
  auto c = std::make_unique<httplib::Client>(host, port);
  c->set_connection_timeout(std::chrono::seconds(5));
  c->set_read_timeout(timeout);
  c->set_write_timeout(timeout);
  return c;
}

std::string describe(const httplib::Result& res) {
  if (!res) return "request failed: " + httplib::to_string(res.error());
  std::string why = "HTTP " + std::to_string(res->status);
  const json body = json::parse(res->body, nullptr, false);
  if (!body.is_discarded() && body.is_object() && body.contains("error")) why += ": " + body["error"].get<std::string>();
  return why;
}

std::string normalize_url(std::string url) {
  while (!url.empty() && url.back() == '/') url.pop_back();
  return url;
}

}  // namespace

ApprenticeStatus probe_apprentice(const std::string& base_url, std::chrono::seconds timeout) {
  auto client = client_for(base_url, timeout);
  auto res = client->Get("/v1/status");
  if (!res || res->status != 200) {
    throw Error(ErrorKind::unavailable, "apprentice " + base_url + " unreachable: " + describe(res));
  }
  try {
    return ApprenticeStatus::from_json(json::parse(res->body));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::unavailable, "apprentice " + base_url + " sent a malformed status: " + e.what());
  }
}

Manager::Manager(ManagerOptions options) : options_(std::move(options)) {
  if (options_.chunk_size == 0) throw Error(ErrorKind::config, "chunk size must be >= 1");
  fs::create_directories(options_.data_dir / "querysets");
  fs::create_directories(options_.data_dir / "reports");
  const auto reg = options_.data_dir / "registry.json";
  if (fs::exists(reg)) {
    try {
      const json doc = json::parse(read_file(reg));
      for (const auto& r : doc.at("apprentices")) registry_.push_back(ApprenticeRecord::from_json(r));
    } catch (const json::exception& e) {
      throw Error(ErrorKind::parse, std::string("registry.json: ") + e.what());
    }
  }
}

void Manager::save_registry() const {
  json list = json::array();
  for (const auto& r : registry_) list.push_back(r.to_json());
  write_file_atomic(options_.data_dir / "registry.json", json{{"apprentices", list}}.dump(2) + "\n");
}

ApprenticeRecord Manager::register_apprentice(const std::string& base_url) {
  const std::string url = normalize_url(base_url);
  const auto status = probe_apprentice(url, options_.timeout);
  std::lock_guard lock(mu_);
  auto it = std::find_if(registry_.begin(), registry_.end(), [&](const auto& r) { return r.base_url == url; });
  if (it == registry_.end()) {
    registry_.push_back({status.apprentice_id, url, status.to_json(), now_seconds()});
    it = registry_.end() - 1;
  } else {
    it->apprentice_id = status.apprentice_id;
    it->last_status = status.to_json();
  }
  save_registry();
  return *it;
}

std::vector<ApprenticeRecord> Manager::apprentices() const {
  std::lock_guard lock(mu_);
  return registry_;
}

fs::path Manager::query_set_path(const std::string& id, const char* ext) const {
  if (id.empty() || id.find_first_of("/\\.") != std::string::npos) {
    throw Error(ErrorKind::not_found, "unknown query set '" + id + "'");
  }
  return options_.data_dir / "querysets" / (id + ext);
}

fs::path Manager::report_path(const std::string& id) const {
  if (id.empty() || id.find_first_of("/\\.") != std::string::npos) {
    throw Error(ErrorKind::not_found, "unknown report '" + id + "'");
  }
  return options_.data_dir / "reports" / (id + ".json");
}

QuerySetRecord Manager::create_query_set(const Corpus& corpus) {
  validate(corpus);
  const std::string hash =
      corpus.content_hash.empty() ? compute_content_hash(corpus.corpus_id, corpus.blocks) : corpus.content_hash;
  QuerySetRecord rec{"qs-" + hash.substr(0, 16), corpus.corpus_id, hash, corpus.blocks.size(), now_seconds()};
  std::lock_guard lock(mu_);
  write_file_atomic(query_set_path(rec.query_set_id, ".jsonl"), corpus_to_jsonl(corpus));
  write_file_atomic(query_set_path(rec.query_set_id, ".json"), rec.to_json().dump(2) + "\n");
  return rec;
}

QuerySetRecord Manager::query_set(const std::string& id) const {
  const auto path = query_set_path(id, ".json");
  if (!fs::exists(path)) throw Error(ErrorKind::not_found, "unknown query set '" + id + "'");
  return QuerySetRecord::from_json(json::parse(read_file(path)));
}

Corpus Manager::query_set_corpus(const std::string& id) const {
  const auto rec = query_set(id);
  return parse_corpus_jsonl(read_file(query_set_path(id, ".jsonl")), rec.corpus_id);
}

CloneReport Manager::dispatch_query(const std::string& query_set_id, const RunConfig& config) {
  config.validate();
  const Corpus query = query_set_corpus(query_set_id);
  const DetectionConfig detection = config.detection();

  // Refresh statuses; only ready apprentices take part. An unreachable one is
  // a failed shard, an idle one simply holds nothing to query.
  std::vector<ApprenticeRecord> ready;
  std::vector<ShardResult> unreachable;
  for (const auto& rec : apprentices()) {
    try {
      const auto st = probe_apprentice(rec.base_url, options_.timeout);
      if (st.state == ApprenticeState::ready || st.state == ApprenticeState::querying) {
        auto r = rec;
        r.last_status = st.to_json();
        ready.push_back(std::move(r));
      }
    } catch (const Error& e) {
      log(LogLevel::warn, e.what());
      ShardResult failed;
      failed.apprentice_id = rec.apprentice_id;
      failed.base_url = rec.base_url;
      failed.ok = false;
      failed.error = e.what();
      unreachable.push_back(std::move(failed));
    }
  }
  if (ready.empty()) throw Error(ErrorKind::unavailable, "no ready apprentice registered");

  std::vector<json> chunks;
  for (std::size_t i = 0; i < query.blocks.size(); i += options_.chunk_size) {
    json blocks = json::array();
    const auto end = std::min(query.blocks.size(), i + options_.chunk_size);
    for (std::size_t k = i; k < end; ++k) blocks.push_back(block_to_json(query.blocks[k]));
    chunks.push_back({{"config", detection.to_json()}, {"blocks", std::move(blocks)}});
  }

  struct Outcome {
    ShardResult shard;
    std::vector<ClonePair> pairs;
  };
  std::vector<std::future<Outcome>> futures;
  for (const auto& rec : ready) {
    futures.push_back(std::async(std::launch::async, [&, rec] {
      Outcome o;
      o.shard.apprentice_id = rec.apprentice_id;
      o.shard.base_url = rec.base_url;
      if (rec.last_status.contains("corpus_hash") && rec.last_status["corpus_hash"].is_string()) {
        o.shard.corpus_hash = rec.last_status["corpus_hash"].get<std::string>();
      }
      try {
        auto client = client_for(rec.base_url, options_.timeout);
        for (const auto& chunk : chunks) {
          auto res = client->Post("/v1/query", chunk.dump(), "application/json");
          if (!res || res->status != 200) throw Error(ErrorKind::unavailable, describe(res));
          const json body = json::parse(res->body);
          for (const auto& p : body.at("pairs")) o.pairs.push_back(clone_pair_from_json(p));
        }
        o.shard.pair_count = o.pairs.size();
      } catch (const std::exception& e) {
        o.shard.ok = false;
        o.shard.error = e.what();
        o.pairs.clear();
        log(LogLevel::warn, "apprentice " + rec.base_url + " failed: " + e.what());
      }
      return o;
    }));
  }

  CloneReport report;
  report.query_set_id = query_set_id;
  report.config = config.to_json();
  report.created_at = now_seconds();
  for (auto& shard : unreachable) {
    report.partial = true;
    report.apprentices.push_back(std::move(shard));
  }
  for (auto& f : futures) {
    auto o = f.get();
    report.partial = report.partial || !o.shard.ok;
    report.apprentices.push_back(std::move(o.shard));
    for (auto& p : o.pairs) report.pairs.push_back(std::move(p));
  }
  std::sort(report.apprentices.begin(), report.apprentices.end(),
            [](const ShardResult& a, const ShardResult& b) { return a.base_url < b.base_url; });
  finalize_report(report);
  write_file_atomic(report_path(report.report_id), report.to_json().dump() + "\n");
  return report;
}

CloneReport Manager::report(const std::string& report_id) const {
  const auto path = report_path(report_id);
  if (!fs::exists(path)) throw Error(ErrorKind::not_found, "unknown report '" + report_id + "'");
  return CloneReport::from_json(json::parse(read_file(path)));
}

std::string Manager::render_report(const std::string& report_id, const std::string& format) const {
  if (format != "html" && format != "json") throw Error(ErrorKind::config, "format must be html or json");
  const auto r = report(report_id);
  return format == "html" ? render_html(r) : r.to_json().dump(2) + "\n";
}

SampleResult Manager::sample(const std::string& report_id, std::uint64_t n, std::optional<SizeClass> filter,
                             std::uint64_t seed) const {
  return sample_pairs(report(report_id).pairs, n, filter, seed);
}

std::vector<AttributionMatch> Manager::attribution(const std::string& corpus_id,
                                                   const std::vector<std::string>& patterns) const {
  std::vector<AttributionDoc> docs;
  std::vector<fs::path> records;
  for (const auto& e : fs::directory_iterator(options_.data_dir / "querysets")) {
    if (e.path().extension() == ".json") records.push_back(e.path());
  }
  std::sort(records.begin(), records.end());
  for (const auto& p : records) {
    const auto rec = QuerySetRecord::from_json(json::parse(read_file(p)));
    if (rec.corpus_id != corpus_id) continue;
    auto more = attribution_docs(query_set_corpus(rec.query_set_id));
    docs.insert(docs.end(), std::make_move_iterator(more.begin()), std::make_move_iterator(more.end()));
  }
  return scan_attribution(docs, patterns);
}

namespace {

void reply_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

template <class Fn>
void guarded(httplib::Response& res, Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    reply_json(res, http_status_for(e.kind()), {{"error", e.what()}});
  } catch (const json::exception& e) {
    reply_json(res, 400, {{"error", std::string("malformed JSON: ") + e.what()}});
  } catch (const std::exception& e) {
    reply_json(res, 500, {{"error", e.what()}});
  }
}

}  // namespace

ManagerServer::ManagerServer(Manager& manager) : manager_(manager), server_(std::make_unique<httplib::Server>()) {
  auto& srv = *server_;
  // httplib defaults to SO_REUSEPORT, which lets a second server share a busy port.
  srv.set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
  });
  srv.Post("/v1/apprentices", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const json body = json::parse(req.body);
      reply_json(res, 200, manager_.register_apprentice(body.at("base_url").get<std::string>()).to_json());
    });
  });
  srv.Get("/v1/apprentices", [this](const httplib::Request&, httplib::Response& res) {
    json list = json::array();
    for (const auto& r : manager_.apprentices()) list.push_back(r.to_json());
    reply_json(res, 200, {{"apprentices", list}});
  });
  srv.Post("/v1/querysets", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const std::string hint = req.has_param("corpus_id") ? req.get_param_value("corpus_id") : std::string();
      reply_json(res, 200, manager_.create_query_set(parse_corpus_jsonl(req.body, hint)).to_json());
    });
  });
  srv.Post("/v1/reports", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const json body = json::parse(req.body);
      const auto config = RunConfig::from_json(body.value("config", json::object()));
      const auto report = manager_.dispatch_query(body.at("query_set_id").get<std::string>(), config);
      reply_json(res, 200,
                 {{"report_id", report.report_id},
                  {"partial", report.partial},
                  {"pair_count", report.pairs.size()},
                  {"stats", report.stats.to_json()}});
    });
  });
  srv.Get(R"(/v1/reports/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const std::string format = req.has_param("format") ? req.get_param_value("format") : "json";
      const std::string doc = manager_.render_report(req.matches[1], format);
      res.status = 200;
      res.set_content(doc, format == "html" ? "text/html; charset=utf-8" : "application/json");
    });
  });
  srv.Post(R"(/v1/reports/([^/]+)/sample)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const json body = json::parse(req.body);
      std::optional<SizeClass> filter;
      if (body.contains("size_class") && !body["size_class"].is_null()) {
        filter = parse_size_class(body["size_class"].get<std::string>());
      }
      if (!body.contains("seed")) throw Error(ErrorKind::config, "sampling needs an explicit seed");
      const auto s = manager_.sample(req.matches[1], body.at("n").get<std::uint64_t>(), filter,
                                     body.at("seed").get<std::uint64_t>());
      json pairs = json::array();
      for (const auto& p : s.pairs) pairs.push_back(to_json(p));
      reply_json(res, 200, {{"population", s.population}, {"short", s.is_short}, {"pairs", pairs}});
    });
  });
  srv.Post("/v1/attribution", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const json body = json::parse(req.body);
      const auto matches = manager_.attribution(body.at("corpus_id").get<std::string>(),
                                                body.at("patterns").get<std::vector<std::string>>());
      json out = json::array();
      for (const auto& m : matches) out.push_back(m.to_json());
      reply_json(res, 200, {{"matches", out}});
    });
  });
}

ManagerServer::~ManagerServer() { stop(); }

int ManagerServer::start(const std::string& host, int port) {
  if (port == 0) {
    port_ = server_->bind_to_any_port(host);
    if (port_ < 0) throw Error(ErrorKind::io, "cannot bind " + host);
  } else {
    if (!server_->bind_to_port(host, port)) {
      throw Error(ErrorKind::io, "cannot bind " + host + ":" + std::to_string(port) + " (port busy?)");
    }
    port_ = port;
  }
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return port_;
}

void ManagerServer::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace sapp
