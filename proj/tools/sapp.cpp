// sapp: ingest code corpora, detect clones, check licenses, serve shards.

#include <CLI11.hpp>
#include <httplib.h>
#include <json.hpp>

#include <csignal>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sapp/apprentice.hpp"
#include "sapp/bench.hpp"
#include "sapp/corpus.hpp"
#include "sapp/error.hpp"
#include "sapp/index_cache.hpp"
#include "sapp/license.hpp"
#include "sapp/manager.hpp"
#include "sapp/report.hpp"
#include "sapp/run_config.hpp"
#include "sapp/stackexchange.hpp"
#include "sapp/util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace sapp;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConflicts = 1;
constexpr int kExitError = 2;

struct Flags {
  double theta = 0.8;
  std::uint64_t min_tokens = 23;
  std::string granularity = "file";
  std::string rules;
  std::string matrix;
  std::string default_license;
  std::string store;
  std::string report;
  std::optional<std::uint64_t> seed;
  unsigned runs = 5;
  bool keep_self = false;
  bool query_denominator = false;
  unsigned threads = 0;
};

void add_detection_flags(CLI::App* cmd, Flags& f) {
  cmd->add_option("--theta", f.theta, "Overlap threshold in (0,1]")->capture_default_str();
  cmd->add_option("--min-tokens", f.min_tokens, "Smallest block size considered")->capture_default_str();
  cmd->add_option("--matrix", f.matrix, "License compatibility matrix (JSON)");
  cmd->add_option("--store", f.store, "Index cache directory");
  cmd->add_flag("--keep-self-pairs", f.keep_self, "Report a block paired with itself");
  cmd->add_flag("--query-denominator", f.query_denominator, "Threshold against the query block size only");
  cmd->add_option("--threads", f.threads, "Worker threads (0 = all cores)");
}

void add_ingest_flags(CLI::App* cmd, Flags& f) {
  cmd->add_option("--granularity", f.granularity, "file,module,function")->capture_default_str();
  cmd->add_option("--min-tokens", f.min_tokens, "Drop blocks below this many tokens")->capture_default_str();
  cmd->add_option("--rules", f.rules, "License rule set (JSON)");
  cmd->add_option("--default-license", f.default_license, "License for blocks with no detectable one");
  cmd->add_option("--threads", f.threads, "Worker threads (0 = all cores)");
}

RunConfig run_config(const Flags& f) {
  RunConfig c;
  c.theta = f.theta;
  c.min_tokens = f.min_tokens;
  c.exclude_self_pairs = !f.keep_self;
  c.denominator = f.query_denominator ? Denominator::query_size : Denominator::max_size;
  c.granularities = parse_granularity_list(f.granularity);
  if (!f.default_license.empty()) c.default_license = f.default_license;
  if (!f.rules.empty()) c.rules_path = f.rules;
  if (!f.matrix.empty()) c.matrix_path = f.matrix;
  if (!f.store.empty()) c.store_path = f.store;
  c.seed = f.seed;
  c.validate();
  return c;
}

CompatibilityMatrix load_matrix(const RunConfig& c) {
  return c.matrix_path ? CompatibilityMatrix::load_file(*c.matrix_path) : CompatibilityMatrix::shipped_default();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_file_atomic(path, text);
}

// ---- ingest ---------------------------------------------------------------

struct IngestArgs {
  std::string source;
  std::string stackexchange;
  std::string tag;
  std::string out;
  std::string corpus_id;
  std::vector<std::string> extensions{".py"};
  std::string answer_url = "https://stackoverflow.com/a/{id}";
  std::string question_url = "https://stackoverflow.com/q/{id}";
};

int cmd_ingest(const IngestArgs& a, const Flags& f) {
  RunConfig rc = run_config(f);
  std::optional<RuleSet> rules;
  if (rc.rules_path) rules = RuleSet::load_file(*rc.rules_path);

  IngestConfig ic;
  ic.granularities = rc.granularities;
  ic.min_tokens = rc.min_tokens;
  ic.default_license = rc.default_license;
  ic.rules = rules ? &*rules : nullptr;
  ic.threads = f.threads;
  ic.extensions = {a.extensions.begin(), a.extensions.end()};

  IngestResult result;
  int code = kExitOk;
  if (!a.stackexchange.empty()) {
    ic.corpus_id = a.corpus_id.empty() ? "stackexchange" : a.corpus_id;
    ic.source_kind = SourceKind::stackexchange_post;
    if (!ic.default_license) ic.default_license = "CC-BY-SA-3.0";
    rc.default_license = ic.default_license;
    StackExchangeConfig sc{ic, a.tag, a.answer_url, a.question_url};
    std::ifstream in(a.stackexchange, std::ios::binary);
    if (!in) throw Error(ErrorKind::io, "cannot open " + a.stackexchange);
    try {
      result = ingest_stackexchange_dump(in, sc);
    } catch (const TruncatedDump& e) {
      log(LogLevel::error, std::string(e.what()) + "; keeping the rows read so far");
      result = e.partial();
      code = kExitError;
    }
  } else {
    if (a.source.empty()) throw Error(ErrorKind::config, "ingest needs a source path or --stackexchange");
    ic.corpus_id = a.corpus_id.empty() ? fs::path(a.source).filename().string() : a.corpus_id;
    if (ic.corpus_id.empty()) ic.corpus_id = "corpus";
    result = ingest_directory(a.source, ic);
  }

  save_corpus_file(a.out, result.corpus);
  const json meta = {{"corpus_id", result.corpus.corpus_id},
                     {"content_hash", result.corpus.content_hash},
                     {"block_count", result.corpus.blocks.size()},
                     {"run_config", rc.to_json()},
                     {"ingest", ic.to_json()},
                     {"tag_filter", a.tag},
                     {"log", result.log.to_json()}};
  write_text(a.out + ".meta.json", meta.dump(2) + "\n");
  std::cerr << "ingested " << result.corpus.blocks.size() << " blocks into " << a.out << " ("
            << result.log.skipped.size() << " skipped, " << result.log.degraded.size() << " degraded)\n";
  return code;
}

// ---- query ----------------------------------------------------------------

struct QueryArgs {
  std::string corpus;
  std::string query;
};

int cmd_query(const QueryArgs& a, const Flags& f) {
  const RunConfig rc = run_config(f);
  const auto matrix = load_matrix(rc);
  DetectionConfig dc = rc.detection();
  dc.threads = f.threads;

  auto corpus = std::make_shared<const Corpus>(load_corpus_file(a.corpus));
  const Corpus query = a.query == a.corpus ? *corpus : load_corpus_file(a.query);

  std::shared_ptr<const InvertedIndex> index;
  if (rc.store_path) {
    IndexCache cache(*rc.store_path);
    index = cache.get_or_build(corpus, dc);
  } else {
    index = std::make_shared<const InvertedIndex>(build_index(corpus, dc));
  }
  const CloneReport report = make_local_report(query, *index, rc.to_json(), dc, matrix);

  for (const auto& p : report.pairs) {
    json line = to_json(p);
    line["query"].erase("raw_text");
    line["corpus"].erase("raw_text");
    std::cout << line.dump() << "\n";
  }
  std::cout << "\n# run config " << rc.to_json().dump() << "\n";
  std::cout << "# report " << report.report_id << ", " << report.pairs.size() << " pairs\n";
  std::cout << render_stats_table(report.stats);

  if (!f.report.empty()) {
    const fs::path dir = f.report;
    write_text(dir / (report.report_id + ".json"), report.to_json().dump(2) + "\n");
    write_text(dir / (report.report_id + ".html"), render_html(report));
    std::cerr << "report written to " << (dir / (report.report_id + ".html")).string() << "\n";
  }
  const bool conflicts = std::any_of(report.pairs.begin(), report.pairs.end(),
                                     [](const ClonePair& p) { return p.verdict == Verdict::conflict; });
  return conflicts ? kExitConflicts : kExitOk;
}

// ---- serve ----------------------------------------------------------------

struct ServeArgs {
  bool apprentice = false;
  bool manager = false;
  std::string host = "127.0.0.1";
  int port = 0;
  std::string id = "apprentice";
  std::string corpus;
  std::string data_dir = "sapp-manager";
  std::size_t chunk = 10000;
  std::vector<std::string> register_urls;
};

int wait_for_signal(const std::string& what, int port) {
  std::cout << what << " listening on port " << port << std::endl;
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  int sig = 0;
  sigwait(&set, &sig);
  std::cerr << "signal " << sig << ", shutting down\n";
  return kExitOk;
}

int cmd_serve(const ServeArgs& a, const Flags& f) {
  if (a.apprentice == a.manager) throw Error(ErrorKind::config, "serve needs exactly one of --apprentice, --manager");
  // Block the shutdown signals before any thread starts so sigwait sees them.
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);

  const RunConfig rc = run_config(f);
  if (a.apprentice) {
    ApprenticeOptions opts;
    opts.apprentice_id = a.id;
    opts.store = rc.store_path.value_or("sapp-store");
    opts.index_config = rc.detection();
    opts.index_config.threads = f.threads;
    opts.matrix = load_matrix(rc);
    Apprentice apprentice(opts);
    if (!a.corpus.empty()) apprentice.load_corpus(load_corpus_file(a.corpus));
    ApprenticeServer server(apprentice);
    const int port = server.start(a.host, a.port);
    const int code = wait_for_signal("apprentice " + a.id, port);
    server.stop();
    return code;
  }
  ManagerOptions opts;
  opts.data_dir = a.data_dir;
  opts.chunk_size = a.chunk;
  Manager manager(opts);
  for (const auto& url : a.register_urls) manager.register_apprentice(url);
  ManagerServer server(manager);
  const int port = server.start(a.host, a.port);
  const int code = wait_for_signal("manager", port);
  server.stop();
  return code;
}

// ---- bench ----------------------------------------------------------------

struct BenchArgs {
  std::string corpus;
  std::string query;
};

int cmd_bench(const BenchArgs& a, const Flags& f) {
  const RunConfig rc = run_config(f);
  BenchOptions opts;
  opts.corpus_source = a.corpus;
  opts.ingest.granularities = rc.granularities;
  opts.ingest.min_tokens = rc.min_tokens;
  opts.ingest.default_license = rc.default_license;
  opts.ingest.corpus_id = fs::path(a.corpus).stem().string();
  opts.query = load_corpus_file(a.query).blocks;
  opts.detection = rc.detection();
  opts.detection.threads = f.threads;
  opts.runs = f.runs;
  opts.store = rc.store_path.value_or((fs::temp_directory_path() / "sapp-bench-store").string());
  const auto r = run_bench(opts);
  json out = r.to_json();
  out["run_config"] = rc.to_json();
  std::cout << out.dump(2) << "\n";
  std::cout << "cold mean " << r.cold_mean << " s, warm mean " << r.warm_mean << " s over " << f.runs
            << " runs; warm/cold " << r.ratio() << "\n";
  return kExitOk;
}

// ---- sample / attribution / render / submit --------------------------------

struct SampleArgs {
  std::string report;
  std::uint64_t n = 63;
  std::string size_class;
};

int cmd_sample(const SampleArgs& a, const Flags& f) {
  if (!f.seed) throw Error(ErrorKind::config, "sample needs an explicit --seed");
  const auto report = CloneReport::from_json(json::parse(read_file(a.report)));
  std::optional<SizeClass> filter;
  if (!a.size_class.empty()) filter = parse_size_class(a.size_class);
  const auto s = sample_pairs(report.pairs, a.n, filter, *f.seed);
  for (const auto& p : s.pairs) std::cout << to_json(p).dump() << "\n";
  std::cerr << s.pairs.size() << " of " << s.population << " pairs" << (s.is_short ? " (population short)" : "")
            << "\n";
  return kExitOk;
}

struct AttributionArgs {
  std::vector<std::string> patterns;
  std::string stackexchange;
  std::string corpus;
};

int cmd_attribution(const AttributionArgs& a) {
  std::vector<AttributionDoc> docs;
  if (!a.stackexchange.empty()) {
    std::ifstream in(a.stackexchange, std::ios::binary);
    if (!in) throw Error(ErrorKind::io, "cannot open " + a.stackexchange);
    docs = attribution_docs_from_posts(in, "https://stackoverflow.com/a/{id}", "https://stackoverflow.com/q/{id}");
  } else if (!a.corpus.empty()) {
    docs = attribution_docs(load_corpus_file(a.corpus));
  } else {
    throw Error(ErrorKind::config, "attribution needs --stackexchange or --corpus");
  }
  for (const auto& m : scan_attribution(docs, a.patterns)) std::cout << m.to_json().dump() << "\n";
  return kExitOk;
}

struct RenderArgs {
  std::string report;
  std::string format = "html";
  std::string out;
};

int cmd_render(const RenderArgs& a) {
  const auto report = CloneReport::from_json(json::parse(read_file(a.report)));
  std::string doc;
  if (a.format == "html") doc = render_html(report);
  else if (a.format == "json") doc = report.to_json().dump(2) + "\n";
  else if (a.format == "table") doc = render_stats_table(report.stats);
  else throw Error(ErrorKind::config, "format must be html, json or table");
  if (a.out.empty()) std::cout << doc;
  else write_text(a.out, doc);
  return kExitOk;
}

struct SubmitArgs {
  std::string manager;
  std::string query;
  std::string out;
};

int cmd_submit(const SubmitArgs& a, const Flags& f) {
  const RunConfig rc = run_config(f);
  const auto [host, port] = split_base_url(a.manager);
  httplib::Client client(host, port);
  client.set_read_timeout(std::chrono::seconds(3600));
  auto qs = client.Post("/v1/querysets", read_file(a.query), "application/x-ndjson");
  if (!qs || qs->status != 200) throw Error(ErrorKind::unavailable, "query set upload failed");
  const auto qs_id = json::parse(qs->body).at("query_set_id").get<std::string>();
  const json req = {{"query_set_id", qs_id}, {"config", rc.to_json()}};
  auto rep = client.Post("/v1/reports", req.dump(), "application/json");
  if (!rep || rep->status != 200) {
    throw Error(ErrorKind::unavailable, "dispatch failed: " + (rep ? rep->body : httplib::to_string(rep.error())));
  }
  const auto summary = json::parse(rep->body);
  const auto id = summary.at("report_id").get<std::string>();
  auto full = client.Get("/v1/reports/" + id + "?format=json");
  if (!full || full->status != 200) throw Error(ErrorKind::unavailable, "cannot fetch report " + id);
  const auto report = CloneReport::from_json(json::parse(full->body));
  if (!a.out.empty()) write_text(a.out, full->body);
  std::cout << "# report " << id << (report.partial ? " (partial)" : "") << ", " << report.pairs.size() << " pairs\n";
  std::cout << render_stats_table(report.stats);
  const bool conflicts = std::any_of(report.pairs.begin(), report.pairs.end(),
                                     [](const ClonePair& p) { return p.verdict == Verdict::conflict; });
  return conflicts ? kExitConflicts : kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Clone detection and license compliance over code corpora"};
  app.require_subcommand(1);
  Flags flags;
  app.add_option("--seed", flags.seed, "Seed for sampling");

  IngestArgs ingest;
  auto* c_ingest = app.add_subcommand("ingest", "Turn a source tree, archive or StackExchange dump into a corpus file");
  c_ingest->add_option("source", ingest.source, "Directory, .zip or .tar.gz");
  c_ingest->add_option("--stackexchange", ingest.stackexchange, "Posts.xml dump");
  c_ingest->add_option("--tag", ingest.tag, "Keep questions with this tag and their answers");
  c_ingest->add_option("-o,--out", ingest.out, "Corpus file to write (JSON lines)")->required();
  c_ingest->add_option("--corpus-id", ingest.corpus_id, "Corpus id (defaults to the source name)");
  c_ingest->add_option("--ext", ingest.extensions, "File extensions to ingest")->delimiter(',')->capture_default_str();
  c_ingest->add_option("--answer-url", ingest.answer_url, "Answer URL template")->capture_default_str();
  c_ingest->add_option("--question-url", ingest.question_url, "Question URL template")->capture_default_str();
  add_ingest_flags(c_ingest, flags);

  QueryArgs query;
  auto* c_query = app.add_subcommand("query", "Detect clones of a query corpus in a corpus");
  c_query->add_option("corpus", query.corpus, "Corpus file")->required();
  c_query->add_option("query", query.query, "Query corpus file (same file for an intra-set run)")->required();
  c_query->add_option("--report", flags.report, "Directory for the HTML and JSON report");
  add_detection_flags(c_query, flags);

  ServeArgs serve;
  auto* c_serve = app.add_subcommand("serve", "Run an apprentice or manager service");
  c_serve->add_flag("--apprentice", serve.apprentice, "Shard worker");
  c_serve->add_flag("--manager", serve.manager, "Coordinator");
  c_serve->add_option("--host", serve.host)->capture_default_str();
  c_serve->add_option("--port", serve.port, "0 picks a free port")->capture_default_str();
  c_serve->add_option("--id", serve.id, "Apprentice id")->capture_default_str();
  c_serve->add_option("--corpus", serve.corpus, "Corpus file to load at startup (apprentice)");
  c_serve->add_option("--data-dir", serve.data_dir, "Manager data directory")->capture_default_str();
  c_serve->add_option("--chunk", serve.chunk, "Query blocks per apprentice request")->capture_default_str();
  c_serve->add_option("--register", serve.register_urls, "Apprentice URLs to register at startup (manager)");
  add_detection_flags(c_serve, flags);

  BenchArgs bench;
  auto* c_bench = app.add_subcommand("bench", "Time cold and warm-start queries");
  c_bench->add_option("corpus", bench.corpus, "Corpus file or source tree")->required();
  c_bench->add_option("query", bench.query, "Query corpus file")->required();
  c_bench->add_option("--runs", flags.runs, "Runs per mode")->capture_default_str()->check(CLI::Range(1u, 1000u));
  c_bench->add_option("--granularity", flags.granularity, "file,module,function (source trees)");
  c_bench->add_option("--default-license", flags.default_license, "License for unlicensed blocks (source trees)");
  add_detection_flags(c_bench, flags);

  SampleArgs sample;
  auto* c_sample = app.add_subcommand("sample", "Draw pairs from a report for manual review");
  c_sample->add_option("report", sample.report, "Report JSON file")->required();
  c_sample->add_option("-n", sample.n, "Sample size")->capture_default_str()->check(CLI::PositiveNumber);
  c_sample->add_option("--size-class", sample.size_class, "small, medium or large");
  c_sample->add_option("--seed", flags.seed, "Seed (required)");

  AttributionArgs attribution;
  auto* c_attr = app.add_subcommand("attribution", "Search post texts for credit to an upstream holder");
  c_attr->add_option("--pattern", attribution.patterns, "Substring, or re:<regex>")->required();
  c_attr->add_option("--stackexchange", attribution.stackexchange, "Posts.xml dump (whole post bodies)");
  c_attr->add_option("--corpus", attribution.corpus, "Corpus file (block texts)");

  RenderArgs render;
  auto* c_render = app.add_subcommand("render", "Render a stored report");
  c_render->add_option("report", render.report, "Report JSON file")->required();
  c_render->add_option("--format", render.format, "html, json or table")->capture_default_str();
  c_render->add_option("-o,--out", render.out, "Output file (stdout by default)");

  SubmitArgs submit;
  auto* c_submit = app.add_subcommand("submit", "Run a query set through a manager and its apprentices");
  c_submit->add_option("--manager", submit.manager, "Manager base URL")->required();
  c_submit->add_option("query", submit.query, "Query corpus file")->required();
  c_submit->add_option("-o,--out", submit.out, "Write the report JSON here");
  add_detection_flags(c_submit, flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitError;
  }

  try {
    if (*c_ingest) return cmd_ingest(ingest, flags);
    if (*c_query) return cmd_query(query, flags);
    if (*c_serve) return cmd_serve(serve, flags);
    if (*c_bench) return cmd_bench(bench, flags);
    if (*c_sample) return cmd_sample(sample, flags);
    if (*c_attr) return cmd_attribution(attribution);
    if (*c_render) return cmd_render(render);
    if (*c_submit) return cmd_submit(submit, flags);
  } catch (const Error& e) {
    std::cerr << "sapp: " << e.what() << "\n";
    return kExitError;
  } catch (const std::exception& e) {
    std::cerr << "sapp: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}
