#include "sapp/apprentice.hpp"

#include <httplib.h>

#include "sapp/error.hpp"
#include "sapp/util.hpp"

namespace sapp {

using nlohmann::json;

std::string_view to_string(ApprenticeState s) {
  switch (s) {
    case ApprenticeState::idle: return "idle";
    case ApprenticeState::loading: return "loading";
    case ApprenticeState::ready: return "ready";
    case ApprenticeState::querying: return "querying";
  }
  return "idle";
}

ApprenticeState parse_apprentice_state(std::string_view text) {
  if (text == "idle") return ApprenticeState::idle;
  if (text == "loading") return ApprenticeState::loading;
  if (text == "ready") return ApprenticeState::ready;
  if (text == "querying") return ApprenticeState::querying;
  throw Error(ErrorKind::parse, "unknown apprentice state '" + std::string(text) + "'");
}

json ApprenticeStatus::to_json() const {
  return {{"apprentice_id", apprentice_id},
          {"corpus_id", corpus_id ? json(*corpus_id) : json(nullptr)},
          {"corpus_hash", corpus_hash ? json(*corpus_hash) : json(nullptr)},
          {"state", to_string(state)},
          {"block_count", block_count},
          {"indexed_count", indexed_count},
          {"theta", theta ? json(*theta) : json(nullptr)},
          {"min_tokens", min_tokens ? json(*min_tokens) : json(nullptr)},
          {"cache", cache.to_json()}};
}

ApprenticeStatus ApprenticeStatus::from_json(const json& j) {
  ApprenticeStatus s;
  try {
    s.apprentice_id = j.at("apprentice_id").get<std::string>();
    if (!j.at("corpus_id").is_null()) s.corpus_id = j.at("corpus_id").get<std::string>();
    if (!j.at("corpus_hash").is_null()) s.corpus_hash = j.at("corpus_hash").get<std::string>();
    s.state = parse_apprentice_state(j.at("state").get<std::string>());
    s.block_count = j.at("block_count").get<std::uint64_t>();
    s.indexed_count = j.value("indexed_count", std::uint64_t{0});
    if (j.contains("theta") && !j.at("theta").is_null()) s.theta = j.at("theta").get<double>();
    if (j.contains("min_tokens") && !j.at("min_tokens").is_null()) s.min_tokens = j.at("min_tokens").get<std::uint64_t>();
    if (j.contains("cache")) {
      const auto& c = j.at("cache");
      s.cache = {c.value("hits", std::uint64_t{0}), c.value("misses", std::uint64_t{0}),
                 c.value("builds", std::uint64_t{0}), c.value("evictions", std::uint64_t{0}),
                 c.value("corrupt", std::uint64_t{0})};
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::parse, std::string("malformed apprentice status: ") + e.what());
  }
  return s;
}

Apprentice::Apprentice(ApprenticeOptions options)
    : options_(std::move(options)), cache_(options_.store, options_.max_cache_entries) {
  options_.index_config.validate();
}

template <class Fn>
ApprenticeStatus Apprentice::exclusive_load(Fn&& obtain) {
  std::function<void()> hook;
  {
    std::lock_guard lock(mu_);
    if (loading_) throw Error(ErrorKind::conflict, "a corpus load is already in progress");
    loading_ = true;
    hook = load_hook_;
  }
  try {
    if (hook) hook();
    std::shared_ptr<const InvertedIndex> index = obtain();
    std::lock_guard lock(mu_);
    index_ = std::move(index);
    loading_ = false;
  } catch (...) {
    std::lock_guard lock(mu_);
    loading_ = false;
    throw;
  }
  return status();
}

ApprenticeStatus Apprentice::load_corpus(Corpus corpus) {
  return exclusive_load([&] {
    validate(corpus);
    if (corpus.content_hash.empty()) seal(corpus);
    auto shared = std::make_shared<const Corpus>(std::move(corpus));
    return cache_.get_or_build(std::move(shared), options_.index_config);
  });
}

ApprenticeStatus Apprentice::load_from_store(const std::string& corpus_hash) {
  return exclusive_load([&] {
    auto index = cache_.load(corpus_hash, options_.index_config);
    if (!index) throw Error(ErrorKind::not_found, "no usable store entry for " + corpus_hash);
    return index;
  });
}

std::vector<ClonePair> Apprentice::query(const std::vector<CodeBlock>& blocks, const DetectionConfig& config) {
  std::shared_ptr<const InvertedIndex> index;
  std::function<void()> hook;
  {
    std::lock_guard lock(mu_);
    if (loading_ || !index_) throw Error(ErrorKind::unavailable, "apprentice has no corpus ready");
    index = index_;
    hook = query_hook_;
  }
  ++in_flight_;
  struct Leave {
    std::atomic<int>& n;
    ~Leave() { --n; }
  } leave{in_flight_};
  if (hook) hook();
  return detect_clones(blocks, *index, config, options_.matrix);
}

ApprenticeStatus Apprentice::status() const {
  ApprenticeStatus s;
  s.apprentice_id = options_.apprentice_id;
  s.cache = cache_.metrics();
  std::lock_guard lock(mu_);
  if (index_) {
    const auto& c = index_->corpus();
    s.corpus_id = c.corpus_id;
    s.corpus_hash = index_->data().corpus_hash;
    s.block_count = c.blocks.size();
    s.indexed_count = index_->indexed_count();
    s.theta = index_->theta();
    s.min_tokens = index_->min_tokens();
    s.state = in_flight_.load() > 0 ? ApprenticeState::querying : ApprenticeState::ready;
  }
  if (loading_) s.state = ApprenticeState::loading;
  return s;
}

void Apprentice::set_query_hook(std::function<void()> hook) {
  std::lock_guard lock(mu_);
  query_hook_ = std::move(hook);
}

void Apprentice::set_load_hook(std::function<void()> hook) {
  std::lock_guard lock(mu_);
  load_hook_ = std::move(hook);
}

int http_status_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config:
    case ErrorKind::parse:
    case ErrorKind::truncated: return 400;
    case ErrorKind::not_found: return 404;
    case ErrorKind::conflict: return 409;
    case ErrorKind::unavailable: return 503;
    case ErrorKind::io: return 500;
  }
  return 500;
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

std::optional<std::string> store_ref_of(const std::string& body) {
  const auto first = body.find_first_not_of(" \t\r\n");
  if (first == std::string::npos || body[first] != '{') return std::nullopt;
  const json j = json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object() || !j.contains("store_ref")) return std::nullopt;
  return j.at("store_ref").get<std::string>();
}

}  // namespace

ApprenticeServer::ApprenticeServer(Apprentice& apprentice)
    : apprentice_(apprentice), server_(std::make_unique<httplib::Server>()) {
  auto& srv = *server_;
  // httplib defaults to SO_REUSEPORT, which lets a second server share a busy port.
  srv.set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
  });
  srv.Get("/v1/status", [this](const httplib::Request&, httplib::Response& res) {
    reply_json(res, 200, apprentice_.status().to_json());
  });
  srv.Put("/v1/corpus", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      ApprenticeStatus st;
      if (auto ref = store_ref_of(req.body)) {
        st = apprentice_.load_from_store(*ref);
      } else {
        const std::string hint = req.has_param("corpus_id") ? req.get_param_value("corpus_id") : std::string();
        st = apprentice_.load_corpus(parse_corpus_jsonl(req.body, hint));
      }
      reply_json(res, 200, st.to_json());
    });
  });
  srv.Post("/v1/query", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const json body = json::parse(req.body);
      const auto config = DetectionConfig::from_json(body.value("config", json::object()));
      std::vector<CodeBlock> blocks;
      for (const auto& b : body.value("blocks", json::array())) blocks.push_back(block_from_json(b));
      const auto pairs = apprentice_.query(blocks, config);
      json out = json::array();
      for (const auto& p : pairs) out.push_back(to_json(p));
      const auto st = apprentice_.status();
      reply_json(res, 200,
                 {{"apprentice_id", st.apprentice_id},
                  {"corpus_hash", st.corpus_hash ? json(*st.corpus_hash) : json(nullptr)},
                  {"pairs", std::move(out)}});
    });
  });
}

ApprenticeServer::~ApprenticeServer() { stop(); }

int ApprenticeServer::start(const std::string& host, int port) {
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

void ApprenticeServer::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace sapp
