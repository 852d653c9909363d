#pragma once

// End-to-end audit orchestration: dataset -> index -> retrieve -> generate
// (LLM-only, RAG, single-document) -> attribute -> report, with per-stage
// checkpoints under runs/<run_id>/.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "analysis.hpp"
#include "attribution.hpp"
#include "corpus.hpp"
#include "error.hpp"
#include "generation.hpp"
#include "hash.hpp"
#include "http.hpp"
#include "io.hpp"
#include "ledger.hpp"
#include "parallel.hpp"
#include "report.hpp"
#include "retrieval.hpp"

namespace ragfair {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Environment variables that override the URL of an `ext:` generator or
/// attributor given in the config file.
inline constexpr const char* kGeneratorUrlEnv = "RAGFAIR_GENERATOR_URL";
inline constexpr const char* kAttributorUrlEnv = "RAGFAIR_ATTRIBUTOR_URL";

struct RunConfig {
  fs::path corpus;
  std::optional<fs::path> categories;  // built-in four-category table when unset
  std::string topic;
  Task task = Task::ArticleGeneration;
  std::vector<std::string> retrievers{"bm25"};
  std::string generator = "mock";
  std::string generator_name;  // id used in records and cache keys; defaults to `generator`
  std::string attributor = "mock";
  std::size_t k = 10;
  std::uint64_t sample_seed = 0;
  std::optional<int> beam_size;
  std::optional<int> max_new_tokens;
  bool exclude_source_doc = false;
  bool strict_parsing = true;
  std::size_t max_words = 512;
  std::string run_id;
  fs::path runs_dir = "runs";
  std::optional<fs::path> cache;
  std::size_t parallelism = 4;
  double failure_tolerance = 0.1;
  http::RetryPolicy retry;
  double attribution_threshold = 0.5;
  RougeVariant rouge_variant = RougeVariant::F1;
  ContextOrder context_order = ContextOrder::Rank;
  std::size_t nli_max_premise_words = 400;

  DecodingParams decoding() const {
    auto d = DecodingParams::defaults_for(task);
    if (beam_size) d.beam_size = *beam_size;
    if (max_new_tokens) d.max_new_tokens = *max_new_tokens;
    return d;
  }

  fs::path run_dir() const { return runs_dir / run_id; }
  fs::path cache_path() const { return cache.value_or(runs_dir / "cache" / "generations.jsonl"); }

  /// Fields that determine results. Paths and operational knobs (runs_dir,
  /// cache, parallelism, retry timing) are excluded so that the same audit
  /// hashes identically wherever it runs.
  json semantic_json() const {
    auto d = decoding();
    return {{"topic", topic},
            {"task", to_string(task)},
            {"retrievers", retrievers},
            {"generator", generator_name.empty() ? generator : generator_name},
            {"attributor", attributor},
            {"k", k},
            {"seeds", {{"sample", sample_seed}}},
            {"decoding", {{"beam_size", d.beam_size}, {"max_new_tokens", d.max_new_tokens}}},
            {"exclude_source_doc", exclude_source_doc},
            {"strict_parsing", strict_parsing},
            {"max_words", max_words},
            {"attribution_threshold", attribution_threshold},
            {"nli_max_premise_words", nli_max_premise_words},
            {"rouge_variant", to_string(rouge_variant)},
            {"context_order", to_string(context_order)}};
  }

  std::string hash() const { return sha256_hex(semantic_json().dump()); }

  std::string generator_id() const { return generator_name.empty() ? generator : generator_name; }

  json to_json() const {
    json j = {{"corpus", fs::absolute(corpus).string()},
              {"topic", topic},
              {"task", to_string(task)},
              {"retrievers", retrievers},
              {"generator", generator},
              {"attributor", attributor},
              {"k", k},
              {"seeds", {{"sample", sample_seed}}},
              {"exclude_source_doc", exclude_source_doc},
              {"strict_parsing", strict_parsing},
              {"max_words", max_words},
              {"run_id", run_id},
              {"runs_dir", fs::absolute(runs_dir).string()},
              {"cache", fs::absolute(cache_path()).string()},
              {"parallelism", parallelism},
              {"failure_tolerance", failure_tolerance},
              {"retry",
               {{"max_attempts", retry.max_attempts},
                {"initial_backoff_ms", retry.initial_backoff.count()},
                {"timeout_ms", retry.timeout.count()}}},
              {"attribution_threshold", attribution_threshold},
              {"nli_max_premise_words", nli_max_premise_words},
              {"rouge_variant", to_string(rouge_variant)},
            {"context_order", to_string(context_order)}};
    if (!generator_name.empty()) j["generator_name"] = generator_name;
    if (categories) j["categories"] = fs::absolute(*categories).string();
    auto d = decoding();
    j["decoding"] = {{"beam_size", d.beam_size}, {"max_new_tokens", d.max_new_tokens}};
    return j;
  }
};

namespace detail {

inline void check_plugin(const std::string& spec, const char* what, bool allow_bm25) {
  if (spec == "mock" && !allow_bm25) return;
  if (spec == "bm25" && allow_bm25) return;
  if (spec.rfind("ext:", 0) == 0) {
    http::Endpoint::parse(spec.substr(4));
    return;
  }
  throw ConfigError(std::string("invalid ") + what + " '" + spec + "' (expected " +
                    (allow_bm25 ? "bm25|ext:<url>" : "mock|ext:<url>") + ")");
}

inline std::string apply_env_url(const std::string& spec, const char* env) {
  const char* v = std::getenv(env);
  if (!v || !*v || spec.rfind("ext:", 0) != 0) return spec;
  return std::string("ext:") + v;
}

}  // namespace detail

/// Parses and validates a config object. Relative paths are resolved
/// against `base_dir`. Defaults: k=10, bm25, mock generator and attributor,
/// beam 2 / 512 tokens for articles, beam 4 / 16 tokens for titles.
inline RunConfig parse_config(const json& j, const fs::path& base_dir = ".") {
  static const std::set<std::string> kKeys = {
      "corpus",   "categories",        "topic",       "task",         "retrievers",   "generator",
      "generator_name", "attributor",  "k",           "seeds",        "decoding",     "exclude_source_doc",
      "strict_parsing", "max_words",   "run_id",      "runs_dir",     "cache",        "parallelism",
      "failure_tolerance", "retry",    "attribution_threshold",       "nli_max_premise_words",
      "rouge_variant",  "context_order"};
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, _] : j.items())
    if (!kKeys.contains(key)) throw ConfigError("unknown config key '" + key + "'");
  for (const char* req : {"corpus", "topic", "task"})
    if (!j.contains(req)) throw ConfigError(std::string("missing required config key '") + req + "'");

  auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base_dir / p; };
  RunConfig c;
  try {
    c.corpus = resolve(j.at("corpus").get<std::string>());
    if (j.contains("categories")) c.categories = resolve(j["categories"].get<std::string>());
    c.topic = j.at("topic").get<std::string>();
    c.task = parse_task(j.at("task").get<std::string>());
    if (j.contains("retrievers")) c.retrievers = j["retrievers"].get<std::vector<std::string>>();
    c.generator = j.value("generator", c.generator);
    c.generator_name = j.value("generator_name", c.generator_name);
    c.attributor = j.value("attributor", c.attributor);
    if (j.contains("k")) {
      if (!j["k"].is_number_integer() || j["k"].get<long long>() < 1) throw ConfigError("k must be a positive integer");
      c.k = j["k"].get<std::size_t>();
    }
    if (j.contains("seeds")) {
      for (const auto& [key, _] : j["seeds"].items())
        if (key != "sample") throw ConfigError("unknown seed '" + key + "'");
      c.sample_seed = j["seeds"].value("sample", c.sample_seed);
    }
    if (j.contains("decoding")) {
      const auto& d = j["decoding"];
      for (const auto& [key, _] : d.items())
        if (key != "beam_size" && key != "max_new_tokens") throw ConfigError("unknown decoding key '" + key + "'");
      if (d.contains("beam_size")) c.beam_size = d["beam_size"].get<int>();
      if (d.contains("max_new_tokens")) c.max_new_tokens = d["max_new_tokens"].get<int>();
      if (c.beam_size && *c.beam_size < 1) throw ConfigError("decoding.beam_size must be >= 1");
      if (c.max_new_tokens && *c.max_new_tokens < 1) throw ConfigError("decoding.max_new_tokens must be >= 1");
    }
    c.exclude_source_doc = j.value("exclude_source_doc", c.exclude_source_doc);
    c.strict_parsing = j.value("strict_parsing", c.strict_parsing);
    c.max_words = j.value("max_words", c.max_words);
    c.run_id = j.value("run_id", c.run_id);
    if (j.contains("runs_dir")) c.runs_dir = resolve(j["runs_dir"].get<std::string>());
    else c.runs_dir = base_dir / c.runs_dir;
    if (j.contains("cache")) c.cache = resolve(j["cache"].get<std::string>());
    c.parallelism = j.value("parallelism", c.parallelism);
    c.failure_tolerance = j.value("failure_tolerance", c.failure_tolerance);
    if (j.contains("retry")) {
      const auto& r = j["retry"];
      for (const auto& [key, _] : r.items())
        if (key != "max_attempts" && key != "initial_backoff_ms" && key != "timeout_ms") {
          throw ConfigError("unknown retry key '" + key + "'");
        }
      c.retry.max_attempts = r.value("max_attempts", c.retry.max_attempts);
      c.retry.initial_backoff = std::chrono::milliseconds(r.value("initial_backoff_ms", c.retry.initial_backoff.count()));
      c.retry.timeout = std::chrono::milliseconds(r.value("timeout_ms", c.retry.timeout.count()));
    }
    c.attribution_threshold = j.value("attribution_threshold", c.attribution_threshold);
    c.nli_max_premise_words = j.value("nli_max_premise_words", c.nli_max_premise_words);
    if (j.contains("rouge_variant")) c.rouge_variant = parse_rouge_variant(j["rouge_variant"].get<std::string>());
    if (j.contains("context_order")) c.context_order = parse_context_order(j["context_order"].get<std::string>());
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config type error: ") + e.what());
  }

  c.generator = detail::apply_env_url(c.generator, kGeneratorUrlEnv);
  c.attributor = detail::apply_env_url(c.attributor, kAttributorUrlEnv);

  if (c.retrievers.empty()) throw ConfigError("at least one retriever is required");
  std::set<std::string> seen;
  for (const auto& r : c.retrievers) {
    detail::check_plugin(r, "retriever", true);
    if (!seen.insert(r).second) throw ConfigError("duplicate retriever '" + r + "'");
  }
  detail::check_plugin(c.generator, "generator", false);
  detail::check_plugin(c.attributor, "attributor", false);
  if (c.topic.empty()) throw ConfigError("topic must not be empty");
  if (c.parallelism == 0) throw ConfigError("parallelism must be >= 1");
  if (c.failure_tolerance < 0 || c.failure_tolerance > 1) throw ConfigError("failure_tolerance must lie in [0, 1]");
  if (c.retry.max_attempts < 1) throw ConfigError("retry.max_attempts must be >= 1");
  if (c.attribution_threshold < 0 || c.attribution_threshold > 1) throw ConfigError("attribution_threshold must lie in [0, 1]");
  if (!fs::exists(c.corpus)) throw ConfigError("corpus file not found: " + c.corpus.string());
  if (c.categories && !fs::exists(*c.categories)) throw ConfigError("categories file not found: " + c.categories->string());
  if (c.run_id.empty()) c.run_id = "run-" + c.hash().substr(0, 12);
  if (c.run_id.find_first_of("/\\") != std::string::npos || c.run_id == "." || c.run_id == "..") {
    throw ConfigError("run_id must be a plain directory name");
  }
  return c;
}

/// Loads a config file. With `check_endpoints`, every ext: endpoint must
/// answer an HTTP request.
inline RunConfig validate_config(const fs::path& path, bool check_endpoints = false) {
  if (!fs::exists(path)) throw ConfigError("config file not found: " + path.string());
  json j;
  try {
    j = json::parse(io::read_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  auto c = parse_config(j, path.parent_path().empty() ? fs::path(".") : path.parent_path());
  if (check_endpoints) {
    std::vector<std::string> specs = c.retrievers;
    specs.push_back(c.generator);
    specs.push_back(c.attributor);
    for (const auto& s : specs) {
      if (s.rfind("ext:", 0) != 0) continue;
      if (!http::reachable(http::Endpoint::parse(s.substr(4)))) throw ConfigError("endpoint unreachable: " + s.substr(4));
    }
  }
  return c;
}

// ---------------------------------------------------------------------------
// Run ledger
// ---------------------------------------------------------------------------

/// Stage checkpoints and per-query status, persisted as ledger.json. The
/// only file in a run directory that carries timestamps.
class RunLedger {
 public:
  explicit RunLedger(fs::path run_dir) : path_(std::move(run_dir) / "ledger.json") {
    if (fs::exists(path_)) data_ = io::read_json(path_);
    if (!data_.is_object()) data_ = json::object();
    if (!data_.contains("stages")) data_["stages"] = json::object();
  }

  bool completed(const std::string& stage) const {
    return data_["stages"].contains(stage) && data_["stages"][stage].value("status", "") == "complete";
  }

  void set(const std::string& key, json value) {
    data_[key] = std::move(value);
    save();
  }

  /// Marks `stage` complete, recording the content hash of each artifact.
  void complete(const std::string& stage, const std::vector<fs::path>& artifacts, const fs::path& run_dir) {
    json arts = json::object();
    for (const auto& a : artifacts) arts[fs::relative(a, run_dir).generic_string()] = io::file_sha256(a);
    data_["stages"][stage] = {{"status", "complete"}, {"completed_at", utc_timestamp()}, {"artifacts", std::move(arts)}};
    save();
  }

  void fail(const std::string& stage, const std::string& reason) {
    data_["stages"][stage] = {{"status", "failed"}, {"failed_at", utc_timestamp()}, {"reason", reason}};
    save();
  }

  const json& data() const { return data_; }

 private:
  void save() const { io::atomic_write(path_, data_.dump(2) + "\n"); }

  fs::path path_;
  json data_;
};

// ---------------------------------------------------------------------------
// Audit run
// ---------------------------------------------------------------------------

/// Optional component overrides (tests, embedding applications). Unset
/// members are built from the config.
struct Components {
  std::shared_ptr<Generator> generator;
  std::shared_ptr<AttributionOracle> oracle;
  std::map<std::string, std::shared_ptr<Retriever>> retrievers;  // by config spec
};

/// Directory-safe name for a retriever spec.
inline std::string retriever_slug(const std::string& spec) {
  if (spec == "bm25") return "bm25";
  return "ext-" + sha256_hex(spec).substr(0, 10);
}

namespace detail {

inline void write_failures(const fs::path& path, const std::vector<Failure>& failures) {
  io::atomic_write(path, io::to_jsonl(failures, [](const Failure& f) {
                     return json{{"query_id", f.query_id}, {"stage", f.stage}, {"reason", f.reason}};
                   }));
}

inline std::vector<Failure> read_failures(const fs::path& path) {
  if (!fs::exists(path)) return {};
  return io::read_jsonl<Failure>(path, [](const json& j) {
    return Failure{j.at("query_id").get<std::string>(), j.at("stage").get<std::string>(), j.at("reason").get<std::string>()};
  });
}

inline fs::path require(const fs::path& p, const std::string& ledger_name) {
  if (!fs::exists(p)) throw Error("missing ledger '" + ledger_name + "' (" + p.string() + ")");
  return p;
}

}  // namespace detail

class AuditRun {
 public:
  explicit AuditRun(RunConfig config, Components components = {})
      : cfg_(std::move(config)), comp_(std::move(components)) {}

  const RunConfig& config() const noexcept { return cfg_; }
  fs::path dir() const { return cfg_.run_dir(); }

  /// Number of calls that reached the underlying generator (cache misses).
  std::size_t generator_calls() const noexcept { return cached_ ? cached_->misses() : 0; }

  /// Executes every stage that is not yet complete, then assembles the
  /// report. Completed stages are loaded, never recomputed.
  AuditReport run() {
    const fs::path dir = this->dir();
    fs::create_directories(dir);
    const auto config_file = dir / "config.json";
    if (fs::exists(config_file)) {
      auto prev = io::read_json(config_file);
      if (prev.value("config_hash", "") != cfg_.hash()) {
        throw ConfigError("run directory " + dir.string() + " belongs to a different configuration");
      }
    } else {
      auto j = cfg_.to_json();
      j["config_hash"] = cfg_.hash();
      io::atomic_write(config_file, j.dump(2) + "\n");
    }
    RunLedger ledger(dir);
    ledger.set("run_id", cfg_.run_id);
    ledger.set("config_hash", cfg_.hash());

    stage_dataset(ledger);
    stage_index(ledger);
    for (const auto& r : cfg_.retrievers) stage_retrieve(ledger, r);
    stage_generate_llm(ledger);
    for (const auto& r : cfg_.retrievers) stage_generate_rag(ledger, r);
    for (const auto& r : cfg_.retrievers) stage_attribute(ledger, r);

    auto report = assemble_report();
    json status = json::object();
    std::set<std::string> failed(report.failed_queries.begin(), report.failed_queries.end());
    for (const auto& q : queries_) status[q.query_id] = failed.contains(q.query_id) ? "failed" : "ok";
    ledger.set("queries", std::move(status));
    if (!ledger.completed("report")) {
      std::vector<fs::path> written;
      for (auto f : {ReportFormat::Json, ReportFormat::Csv, ReportFormat::Svg}) {
        auto w = write_report(report, dir / "report", f);
        written.insert(written.end(), w.begin(), w.end());
      }
      ledger.complete("report", written, dir);
    }
    return report;
  }

 private:
  // -- stages ---------------------------------------------------------------

  void stage_dataset(RunLedger& ledger) {
    const fs::path sdir = dir() / "dataset";
    if (!ledger.completed("dataset")) {
      auto cats = cfg_.categories ? load_categories(*cfg_.categories) : default_categories();
      LoadReport lr;
      auto corpus = load_corpus(cfg_.corpus, cats, cfg_.strict_parsing ? ParseMode::Strict : ParseMode::Lenient, lr);
      auto filtered = filter_documents(corpus, cfg_.max_words);
      if (!filtered.topic_counts().contains(cfg_.topic)) {
        throw ConfigError("topic '" + cfg_.topic + "' has no documents after filtering");
      }
      auto reps = sample_representatives(filtered, cfg_.topic, cats, cfg_.sample_seed);
      auto queries = build_queries(reps, cfg_.task);
      auto topic_docs = filtered.topic_subset(cfg_.topic);
      io::atomic_write(sdir / "categories.json", categories_to_json(cats).dump(2) + "\n");
      io::atomic_write(sdir / "documents.jsonl", corpus_to_jsonl(topic_docs));
      io::atomic_write(sdir / "queries.jsonl", io::to_jsonl(queries, query_to_json));
      json meta = {{"corpus_sha256", io::file_sha256(cfg_.corpus)},
                   {"documents_loaded", corpus.size()},
                   {"documents_after_filter", filtered.size()},
                   {"topic_documents", topic_docs.size()},
                   {"representatives", reps.size()},
                   {"skipped_lines", lr.skipped_lines.size()}};
      io::atomic_write(sdir / "meta.json", meta.dump(2) + "\n");
      ledger.complete("dataset",
                      {sdir / "categories.json", sdir / "documents.jsonl", sdir / "queries.jsonl", sdir / "meta.json"},
                      dir());
      spdlog::info("dataset: {} topic documents, {} queries", topic_docs.size(), queries.size());
    }
    auto cats = load_categories(sdir / "categories.json");
    std::vector<Document> docs;
    io::for_each_jsonl(sdir / "documents.jsonl", [&](const json& j, std::size_t) { docs.push_back(document_from_json(j)); });
    corpus_ = std::make_shared<Corpus>(std::move(docs), std::move(cats));
    queries_ = io::read_jsonl<QueryInstance>(sdir / "queries.jsonl", query_from_json);
    corpus_sha_ = io::read_json(sdir / "meta.json").at("corpus_sha256").get<std::string>();
  }

  void stage_index(RunLedger& ledger) {
    if (std::find(cfg_.retrievers.begin(), cfg_.retrievers.end(), "bm25") == cfg_.retrievers.end()) return;
    if (comp_.retrievers.contains("bm25")) return;
    const fs::path path = dir() / "index" / "bm25.json";
    if (!ledger.completed("index")) {
      InvertedIndex::build(*corpus_, IndexField::TitleAndBody).save(path);
      ledger.complete("index", {path}, dir());
    }
    index_ = std::make_shared<const InvertedIndex>(InvertedIndex::load(path));
  }

  std::shared_ptr<Retriever> make_retriever(const std::string& spec) {
    if (auto it = comp_.retrievers.find(spec); it != comp_.retrievers.end()) return it->second;
    if (spec == "bm25") return std::make_shared<Bm25Retriever>(index_);
    std::unordered_set<std::string> known;
    for (const auto& d : corpus_->documents()) known.insert(d.doc_id);
    return std::make_shared<ExternalRetriever>(spec, http::Endpoint::parse(spec.substr(4)), std::move(known), cfg_.retry);
  }

  void stage_retrieve(RunLedger& ledger, const std::string& spec) {
    const std::string stage = "retrieve:" + spec;
    const fs::path sdir = dir() / "retrieve" / retriever_slug(spec);
    if (!ledger.completed(stage)) {
      auto retriever = make_retriever(spec);
      std::vector<std::optional<RankedList>> slots(queries_.size());
      std::vector<std::string> errors(queries_.size());
      parallel_for(queries_.size(), cfg_.parallelism, [&](std::size_t i) {
        try {
          auto r = retrieve_for(*retriever, queries_[i], cfg_.k, cfg_.exclude_source_doc);
          r.retriever_id = spec;
          if (r.entries.empty()) spdlog::warn("query '{}' retrieved no documents under {}", queries_[i].query_id, spec);
          slots[i] = std::move(r);
        } catch (const ServiceError& e) {
          errors[i] = e.what();
        }
      });
      std::vector<RankedList> lists;
      std::vector<Failure> failures;
      for (std::size_t i = 0; i < slots.size(); ++i) {
        if (slots[i]) lists.push_back(std::move(*slots[i]));
        else failures.push_back({queries_[i].query_id, stage, errors[i]});
      }
      check_tolerance(ledger, stage, failures);
      io::atomic_write(sdir / "rankings.jsonl", io::to_jsonl(lists, ranked_list_to_json));
      detail::write_failures(sdir / "failures.jsonl", failures);
      ledger.complete(stage, {sdir / "rankings.jsonl", sdir / "failures.jsonl"}, dir());
    }
  }

  Generator& generator() {
    if (!cached_) {
      std::shared_ptr<Generator> inner = comp_.generator;
      if (!inner) {
        if (cfg_.generator == "mock") inner = std::make_shared<MockGenerator>();
        else inner = std::make_shared<HttpGenerator>(cfg_.generator_id(), http::Endpoint::parse(cfg_.generator.substr(4)), cfg_.retry);
      }
      cache_ = std::make_shared<GenerationCache>(cfg_.cache_path());
      cached_ = std::make_shared<CachedGenerator>(std::move(inner), cache_);
    }
    return *cached_;
  }

  RunOptions run_options() const { return {cfg_.parallelism, cfg_.decoding(), cfg_.context_order}; }

  void stage_generate_llm(RunLedger& ledger) {
    const std::string stage = "generate:llm_only";
    const fs::path sdir = dir() / "generate" / "llm_only";
    if (ledger.completed(stage)) return;
    auto res = run_setting(queries_, *corpus_, nullptr, generator(), SettingKind::LlmOnly, "", run_options());
    check_tolerance(ledger, stage, res.failures);
    io::atomic_write(sdir / "records.jsonl", io::to_jsonl(res.records, record_to_json));
    detail::write_failures(sdir / "failures.jsonl", res.failures);
    ledger.complete(stage, {sdir / "records.jsonl", sdir / "failures.jsonl"}, dir());
  }

  RankingMap load_rankings(const std::string& spec) const {
    RankingMap m;
    const auto p = detail::require(dir() / "retrieve" / retriever_slug(spec) / "rankings.jsonl", "retrieve:" + spec);
    for (auto& r : io::read_jsonl<RankedList>(p, ranked_list_from_json)) m.emplace(r.query_id, std::move(r));
    return m;
  }

  void stage_generate_rag(RunLedger& ledger, const std::string& spec) {
    const std::string stage = "generate:" + spec;
    const fs::path sdir = dir() / "generate" / retriever_slug(spec);
    if (ledger.completed(stage)) return;
    auto rankings = load_rankings(spec);
    auto rag = run_setting(queries_, *corpus_, &rankings, generator(), SettingKind::Rag, spec, run_options());
    auto single = run_setting(queries_, *corpus_, &rankings, generator(), SettingKind::SingleDoc, spec, run_options());
    std::vector<Failure> failures = rag.failures;
    // Queries without a ranked list already failed at retrieval.
    std::erase_if(failures, [&](const Failure& f) { return !rankings.contains(f.query_id); });
    for (auto& f : single.failures)
      if (rankings.contains(f.query_id)) failures.push_back(std::move(f));
    check_tolerance(ledger, stage, failures);
    io::atomic_write(sdir / "rag.jsonl", io::to_jsonl(rag.records, record_to_json));
    io::atomic_write(sdir / "single_doc.jsonl", io::to_jsonl(single.records, record_to_json));
    detail::write_failures(sdir / "failures.jsonl", failures);
    ledger.complete(stage, {sdir / "rag.jsonl", sdir / "single_doc.jsonl", sdir / "failures.jsonl"}, dir());
  }

  std::shared_ptr<AttributionOracle> oracle() const {
    if (comp_.oracle) return comp_.oracle;
    if (cfg_.attributor == "mock") return std::make_shared<MockOracle>(cfg_.attribution_threshold);
    return std::make_shared<NliOracle>(cfg_.attributor, http::Endpoint::parse(cfg_.attributor.substr(4)),
                                       cfg_.nli_max_premise_words, cfg_.retry);
  }

  void stage_attribute(RunLedger& ledger, const std::string& spec) {
    const std::string stage = "attribute:" + spec;
    const fs::path sdir = dir() / "attribute" / retriever_slug(spec);
    if (ledger.completed(stage)) return;
    auto rankings = load_rankings(spec);
    auto rag = io::read_jsonl<GenerationRecord>(dir() / "generate" / retriever_slug(spec) / "rag.jsonl", record_from_json);
    auto o = oracle();
    auto res = attribute_rankings(queries_, *corpus_, rankings, rag, *o, cfg_.parallelism);
    io::atomic_write(sdir / "verdicts.jsonl", io::to_jsonl(res.verdicts, verdict_to_json));
    detail::write_failures(sdir / "absent.jsonl", res.absent);
    ledger.complete(stage, {sdir / "verdicts.jsonl", sdir / "absent.jsonl"}, dir());
  }

  /// Too many failed queries make the stage fail (resumable); otherwise the
  /// failures are carried into the report.
  void check_tolerance(RunLedger& ledger, const std::string& stage, const std::vector<Failure>& failures) {
    std::set<std::string> ids;
    for (const auto& f : failures) ids.insert(f.query_id);
    const double limit = cfg_.failure_tolerance * static_cast<double>(queries_.size());
    if (!ids.empty() && static_cast<double>(ids.size()) > limit) {
      std::string msg = std::to_string(ids.size()) + " of " + std::to_string(queries_.size()) +
                        " queries failed (tolerance " + std::to_string(cfg_.failure_tolerance) + ")";
      if (!failures.empty()) msg += "; first error: " + failures.front().reason;
      ledger.fail(stage, msg);
      throw StageError(stage, msg);
    }
  }

  AuditReport assemble_report() const;

  RunConfig cfg_;
  Components comp_;
  std::shared_ptr<Corpus> corpus_;
  std::vector<QueryInstance> queries_;
  std::string corpus_sha_;
  std::shared_ptr<const InvertedIndex> index_;
  std::shared_ptr<GenerationCache> cache_;
  std::shared_ptr<CachedGenerator> cached_;

};

/// Rebuilds the report purely from the ledgers of a run directory.
inline AuditReport report_from_run(const fs::path& run_dir) {
  const auto cfg_json = io::read_json(detail::require(run_dir / "config.json", "config"));
  RunConfig cfg;
  cfg.topic = cfg_json.at("topic").get<std::string>();
  cfg.task = parse_task(cfg_json.at("task").get<std::string>());
  cfg.retrievers = cfg_json.at("retrievers").get<std::vector<std::string>>();
  cfg.generator = cfg_json.at("generator").get<std::string>();
  cfg.generator_name = cfg_json.value("generator_name", "");
  cfg.attributor = cfg_json.at("attributor").get<std::string>();
  cfg.k = cfg_json.at("k").get<std::size_t>();
  cfg.sample_seed = cfg_json.at("seeds").at("sample").get<std::uint64_t>();
  cfg.exclude_source_doc = cfg_json.at("exclude_source_doc").get<bool>();
  cfg.rouge_variant = parse_rouge_variant(cfg_json.value("rouge_variant", "f1"));
  cfg.run_id = cfg_json.at("run_id").get<std::string>();
  cfg.runs_dir = run_dir.parent_path();

  ReportInputs in;
  in.meta = {cfg.topic,
             std::string(to_string(cfg.task)),
             cfg.generator_id(),
             cfg.attributor,
             cfg.retrievers,
             cfg.k,
             cfg.sample_seed,
             cfg_json.at("config_hash").get<std::string>(),
             io::read_json(detail::require(run_dir / "dataset" / "meta.json", "dataset")).at("corpus_sha256").get<std::string>(),
             cfg.exclude_source_doc,
             cfg.rouge_variant};

  auto cats = load_categories(detail::require(run_dir / "dataset" / "categories.json", "dataset"));
  std::vector<Document> docs;
  io::for_each_jsonl(detail::require(run_dir / "dataset" / "documents.jsonl", "dataset"),
                     [&](const json& j, std::size_t) { docs.push_back(document_from_json(j)); });
  Corpus corpus(std::move(docs), std::move(cats));
  in.corpus = &corpus;
  in.queries = io::read_jsonl<QueryInstance>(detail::require(run_dir / "dataset" / "queries.jsonl", "dataset"), query_from_json);

  const auto llm_dir = run_dir / "generate" / "llm_only";
  in.llm_only = io::read_jsonl<GenerationRecord>(detail::require(llm_dir / "records.jsonl", "generate:llm_only"), record_from_json);
  auto add_failures = [&](const fs::path& p) {
    for (auto& f : detail::read_failures(p)) in.failures.push_back(std::move(f));
  };
  add_failures(llm_dir / "failures.jsonl");

  for (const auto& spec : cfg.retrievers) {
    const auto slug = retriever_slug(spec);
    RetrieverLedgers led;
    led.retriever_id = spec;
    const auto rank_path = detail::require(run_dir / "retrieve" / slug / "rankings.jsonl", "retrieve:" + spec);
    for (auto& r : io::read_jsonl<RankedList>(rank_path, ranked_list_from_json)) led.rankings.emplace(r.query_id, std::move(r));
    add_failures(run_dir / "retrieve" / slug / "failures.jsonl");
    const auto gdir = run_dir / "generate" / slug;
    led.rag = io::read_jsonl<GenerationRecord>(detail::require(gdir / "rag.jsonl", "generate:" + spec), record_from_json);
    led.single_doc = io::read_jsonl<GenerationRecord>(detail::require(gdir / "single_doc.jsonl", "generate:" + spec), record_from_json);
    add_failures(gdir / "failures.jsonl");
    const auto adir = run_dir / "attribute" / slug;
    led.verdicts = io::read_jsonl<AttributionVerdict>(detail::require(adir / "verdicts.jsonl", "attribute:" + spec), verdict_from_json);
    auto absent = detail::read_failures(adir / "absent.jsonl");
    led.attribution_absent = absent.size();
    for (auto& f : absent) in.failures.push_back(std::move(f));
    in.retrievers.push_back(std::move(led));
  }
  return build_report(in);
}

inline AuditReport AuditRun::assemble_report() const { return report_from_run(dir()); }

/// Runs (or resumes) the audit described by `config`.
inline AuditReport run_audit(const RunConfig& config, Components components = {}) {
  AuditRun run(config, std::move(components));
  return run.run();
}

/// Resumes the run stored in `run_dir` using its saved configuration.
inline AuditReport resume_audit(const fs::path& run_dir, Components components = {}) {
  auto cfg_json = io::read_json(detail::require(run_dir / "config.json", "config"));
  cfg_json.erase("config_hash");
  auto cfg = parse_config(cfg_json, run_dir);
  return run_audit(cfg, std::move(components));
}

}  // namespace ragfair
