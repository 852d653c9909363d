#pragma once

// Prompt construction and the generator plugins: deterministic mock, HTTP
// client for the model server, counting decorator and replay cache.

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "corpus.hpp"
#include "error.hpp"
#include "hash.hpp"
#include "http.hpp"
#include "ledger.hpp"
#include "parallel.hpp"
#include "retrieval.hpp"
#include "text.hpp"

namespace ragfair {

// ---------------------------------------------------------------------------
// Prompts
// ---------------------------------------------------------------------------

struct ContextPair {
  std::string title;
  std::string article;
};

struct PromptSpec {
  Task task = Task::ArticleGeneration;
  std::vector<ContextPair> context_pairs;
  std::string target;
  std::string rendered;
};

/// Few-shot template. Article generation lists "Title/Article" blocks,
/// title generation "Article/Title" blocks; the instruction and the open
/// slot for the target come last.
inline std::string render_prompt(Task task, std::span<const ContextPair> pairs, std::string_view target) {
  std::string out;
  if (task == Task::ArticleGeneration) {
    for (const auto& p : pairs) {
      out += "Title: " + p.title + "\nArticle: " + p.article + "\n";
    }
    out += "Following the given pattern, generate an article for the following title:\nTitle: ";
    out += target;
    out += "\nArticle:";
  } else {
    for (const auto& p : pairs) {
      out += "Article: " + p.article + "\nTitle: " + p.title + "\n";
    }
    out += "Following the given pattern, generate a title for the following article:\nArticle: ";
    out += target;
    out += "\nTitle:";
  }
  return out;
}

/// Context documents go in the given (rank) order, rank 1 first. An empty
/// context gives the LLM-only prompt.
inline PromptSpec build_prompt(const QueryInstance& query, std::span<const Document* const> context, Task task) {
  PromptSpec p;
  p.task = task;
  p.target = query.query_text;
  p.context_pairs.reserve(context.size());
  for (const auto* d : context) p.context_pairs.push_back({d->title, d->body});
  p.rendered = render_prompt(task, p.context_pairs, p.target);
  return p;
}

inline PromptSpec build_prompt(const QueryInstance& query, std::span<const Document> context, Task task) {
  std::vector<const Document*> ptrs;
  for (const auto& d : context) ptrs.push_back(&d);
  return build_prompt(query, std::span<const Document* const>(ptrs), task);
}

// ---------------------------------------------------------------------------
// Settings and records
// ---------------------------------------------------------------------------

struct DecodingParams {
  int beam_size = 2;
  int max_new_tokens = 512;

  static DecodingParams defaults_for(Task t) {
    return t == Task::ArticleGeneration ? DecodingParams{2, 512} : DecodingParams{4, 16};
  }
  friend bool operator==(const DecodingParams&, const DecodingParams&) = default;
};

enum class SettingKind { LlmOnly, Rag, SingleDoc };

inline std::string_view to_string(SettingKind k) {
  switch (k) {
    case SettingKind::LlmOnly: return "llm_only";
    case SettingKind::Rag: return "rag";
    case SettingKind::SingleDoc: return "single_doc";
  }
  return "llm_only";
}

inline SettingKind parse_setting_kind(std::string_view s) {
  if (s == "llm_only") return SettingKind::LlmOnly;
  if (s == "rag") return SettingKind::Rag;
  if (s == "single_doc") return SettingKind::SingleDoc;
  throw ParseError("unknown setting '" + std::string(s) + "'");
}

struct Setting {
  SettingKind kind = SettingKind::LlmOnly;
  std::string retriever_id;  // Rag, SingleDoc
  std::string doc_id;        // SingleDoc

  std::string key() const {
    std::string k(to_string(kind));
    if (!retriever_id.empty()) k += ":" + retriever_id;
    if (!doc_id.empty()) k += ":" + doc_id;
    return k;
  }
};

struct GenerationRecord {
  std::string query_id;
  Setting setting;
  std::string generator_id;
  DecodingParams decoding;
  std::string output_text;
  std::optional<double> accuracy;

  std::string key() const {
    return query_id + "|" + setting.key() + "|" + generator_id + "|" + std::to_string(decoding.beam_size) + "/" +
           std::to_string(decoding.max_new_tokens);
  }
};

inline json record_to_json(const GenerationRecord& r) {
  json s = {{"kind", to_string(r.setting.kind)}};
  if (!r.setting.retriever_id.empty()) s["retriever_id"] = r.setting.retriever_id;
  if (!r.setting.doc_id.empty()) s["doc_id"] = r.setting.doc_id;
  json j = {{"query_id", r.query_id},
            {"setting", std::move(s)},
            {"generator_id", r.generator_id},
            {"decoding", {{"beam_size", r.decoding.beam_size}, {"max_new_tokens", r.decoding.max_new_tokens}}},
            {"output_text", r.output_text}};
  j["accuracy"] = r.accuracy ? json(*r.accuracy) : json(nullptr);
  return j;
}

inline GenerationRecord record_from_json(const json& j) {
  try {
    GenerationRecord r;
    r.query_id = j.at("query_id").get<std::string>();
    const auto& s = j.at("setting");
    r.setting.kind = parse_setting_kind(s.at("kind").get<std::string>());
    r.setting.retriever_id = s.value("retriever_id", "");
    r.setting.doc_id = s.value("doc_id", "");
    r.generator_id = j.at("generator_id").get<std::string>();
    r.decoding.beam_size = j.at("decoding").at("beam_size").get<int>();
    r.decoding.max_new_tokens = j.at("decoding").at("max_new_tokens").get<int>();
    r.output_text = j.at("output_text").get<std::string>();
    if (j.contains("accuracy") && !j["accuracy"].is_null()) r.accuracy = j["accuracy"].get<double>();
    return r;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed generation record: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Generators
// ---------------------------------------------------------------------------

class Generator {
 public:
  virtual ~Generator() = default;
  virtual std::string id() const = 0;
  /// Raw completion for the prompt. Throws ServiceError on failure.
  virtual std::string complete(const PromptSpec& prompt, const DecodingParams& decoding) = 0;
};

/// Copies the first context document's answer field; without context, echoes the
/// first five words of the target.
inline std::string mock_generate(const PromptSpec& prompt) {
  if (!prompt.context_pairs.empty()) {
    const auto& first = prompt.context_pairs.front();
    return prompt.task == Task::ArticleGeneration ? first.article : first.title;
  }
  return text::first_words(prompt.target, 5);
}

class MockGenerator final : public Generator {
 public:
  std::string id() const override { return "mock"; }
  std::string complete(const PromptSpec& prompt, const DecodingParams&) override { return mock_generate(prompt); }
};

/// Client for POST /generate {"prompt","beam_size","max_new_tokens"} -> {"text"}.
class HttpGenerator final : public Generator {
 public:
  HttpGenerator(std::string generator_id, http::Endpoint endpoint, http::RetryPolicy policy = {})
      : id_(std::move(generator_id)), endpoint_(std::move(endpoint)), policy_(policy) {}

  std::string id() const override { return id_; }

  std::string complete(const PromptSpec& prompt, const DecodingParams& d) override {
    json reply = http::post_json(
        endpoint_, "/generate",
        {{"prompt", prompt.rendered}, {"beam_size", d.beam_size}, {"max_new_tokens", d.max_new_tokens}}, policy_);
    if (!reply.is_object() || !reply.contains("text") || !reply["text"].is_string()) {
      throw ServiceError(endpoint_.url() + "/generate: reply lacks a string 'text'");
    }
    return reply["text"].get<std::string>();
  }

 private:
  std::string id_;
  http::Endpoint endpoint_;
  http::RetryPolicy policy_;
};

/// Counts calls that reach the wrapped generator.
class CountingGenerator final : public Generator {
 public:
  explicit CountingGenerator(std::shared_ptr<Generator> inner) : inner_(std::move(inner)) {}

  std::string id() const override { return inner_->id(); }
  std::string complete(const PromptSpec& prompt, const DecodingParams& d) override {
    ++calls_;
    return inner_->complete(prompt, d);
  }
  std::size_t calls() const noexcept { return calls_; }
  void reset() noexcept { calls_ = 0; }

 private:
  std::shared_ptr<Generator> inner_;
  std::atomic<std::size_t> calls_{0};
};

/// Append-only JSONL replay cache: {"key", "output_text", "timestamp"}.
/// A key is written once; later inserts for the same key are rejected.
class GenerationCache {
 public:
  GenerationCache() = default;

  /// File-backed cache. Existing entries are loaded; a torn trailing line
  /// from an interrupted write is ignored.
  explicit GenerationCache(std::filesystem::path path) : path_(std::move(path)) {
    if (path_->has_parent_path()) std::filesystem::create_directories(path_->parent_path());
    std::ifstream in(*path_);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      try {
        auto j = json::parse(line);
        entries_.emplace(j.at("key").get<std::string>(), j.at("output_text").get<std::string>());
      } catch (const json::exception&) {
        spdlog::warn("ignoring unreadable cache line in {}", path_->string());
      }
    }
  }

  static std::string make_key(std::string_view generator_id, std::string_view rendered, const DecodingParams& d) {
    std::string material;
    material.append(generator_id).push_back('\x1f');
    material.append(rendered).push_back('\x1f');
    material += std::to_string(d.beam_size) + "\x1f" + std::to_string(d.max_new_tokens);
    return sha256_hex(material);
  }

  std::optional<std::string> lookup(const std::string& key) const {
    std::lock_guard lock(mu_);
    auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
  }

  /// Returns false (and writes nothing) when the key already exists.
  bool insert(const std::string& key, const std::string& output_text) {
    std::lock_guard lock(mu_);
    if (!entries_.emplace(key, output_text).second) return false;
    if (path_) {
      std::ofstream out(*path_, std::ios::app);
      json line = {{"key", key}, {"output_text", output_text}, {"timestamp", utc_timestamp()}};
      out << line.dump() << '\n';
      out.flush();
      if (!out) throw Error("cannot append to cache " + path_->string());
    }
    return true;
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return entries_.size();
  }

 private:
  std::optional<std::filesystem::path> path_;
  mutable std::mutex mu_;
  std::unordered_map<std::string, std::string> entries_;
};

/// Routes every call through the cache; only misses reach `inner`.
class CachedGenerator final : public Generator {
 public:
  CachedGenerator(std::shared_ptr<Generator> inner, std::shared_ptr<GenerationCache> cache)
      : inner_(std::move(inner)), cache_(std::move(cache)) {}

  std::string id() const override { return inner_->id(); }

  std::string complete(const PromptSpec& prompt, const DecodingParams& d) override {
    const auto key = GenerationCache::make_key(inner_->id(), prompt.rendered, d);
    if (auto hit = cache_->lookup(key)) {
      ++hits_;
      return *hit;
    }
    ++misses_;
    auto text = inner_->complete(prompt, d);
    if (!cache_->insert(key, text)) {
      // Another worker stored this key first; its value wins.
      return *cache_->lookup(key);
    }
    return text;
  }

  std::size_t hits() const noexcept { return hits_; }
  std::size_t misses() const noexcept { return misses_; }

 private:
  std::shared_ptr<Generator> inner_;
  std::shared_ptr<GenerationCache> cache_;
  std::atomic<std::size_t> hits_{0};
  std::atomic<std::size_t> misses_{0};
};

/// Trims whitespace and cuts at the first line that starts a new
/// "Title:" or "Article:" block.
inline std::string normalize_output(std::string_view raw) {
  std::string_view s = text::trim(raw);
  std::size_t cut = s.size();
  for (std::string_view marker : {"\nTitle:", "\nArticle:"}) {
    auto pos = s.find(marker);
    if (pos != std::string_view::npos) cut = std::min(cut, pos);
  }
  return std::string(text::trim(s.substr(0, cut)));
}

/// Normalized completion. Throws ServiceError when the generator fails.
inline std::string generate(Generator& generator, const PromptSpec& prompt, const DecodingParams& decoding) {
  return normalize_output(generator.complete(prompt, decoding));
}

// ---------------------------------------------------------------------------
// Running a setting over a query set
// ---------------------------------------------------------------------------

/// Order of context documents in a RAG prompt.
enum class ContextOrder { Rank, Reversed };

inline std::string_view to_string(ContextOrder o) { return o == ContextOrder::Rank ? "rank" : "reversed"; }

inline ContextOrder parse_context_order(std::string_view s) {
  if (s == "rank") return ContextOrder::Rank;
  if (s == "reversed") return ContextOrder::Reversed;
  throw ConfigError("unknown context order '" + std::string(s) + "' (expected rank|reversed)");
}

struct RunOptions {
  std::size_t parallelism = 1;
  std::optional<DecodingParams> decoding;  // task defaults when unset
  ContextOrder context_order = ContextOrder::Rank;
};

struct SettingResult {
  std::vector<GenerationRecord> records;
  std::vector<Failure> failures;
};

using RankingMap = std::map<std::string, RankedList>;  // query_id -> list

/// Generates one record per query (LlmOnly, Rag) or one per retrieved
/// document (SingleDoc). Per-query failures are collected, not thrown.
/// Records come back in query order, then rank order.
inline SettingResult run_setting(std::span<const QueryInstance> queries, const Corpus& corpus,
                                 const RankingMap* rankings, Generator& generator, SettingKind kind,
                                 const std::string& retriever_id, const RunOptions& options = {}) {
  if (kind != SettingKind::LlmOnly && !rankings) throw Error("run_setting: ranked lists required for RAG settings");

  struct Job {
    std::size_t query;
    std::vector<const Document*> context;
    Setting setting;
  };
  std::vector<Job> jobs;
  std::vector<Failure> failures;
  for (std::size_t qi = 0; qi < queries.size(); ++qi) {
    const auto& q = queries[qi];
    if (kind == SettingKind::LlmOnly) {
      jobs.push_back({qi, {}, {kind, "", ""}});
      continue;
    }
    auto it = rankings->find(q.query_id);
    if (it == rankings->end()) {
      failures.push_back({q.query_id, std::string(to_string(kind)), "no ranked list for query"});
      continue;
    }
    std::vector<const Document*> docs;
    for (const auto& e : it->second.entries) docs.push_back(&corpus.at(e.doc_id));
    if (kind == SettingKind::Rag) {
      if (options.context_order == ContextOrder::Reversed) std::reverse(docs.begin(), docs.end());
      jobs.push_back({qi, std::move(docs), {kind, retriever_id, ""}});
    } else {
      for (const auto* d : docs) jobs.push_back({qi, {d}, {kind, retriever_id, d->doc_id}});
    }
  }

  std::vector<std::optional<GenerationRecord>> slots(jobs.size());
  std::vector<std::string> errors(jobs.size());
  parallel_for(jobs.size(), options.parallelism, [&](std::size_t i) {
    const auto& job = jobs[i];
    const auto& q = queries[job.query];
    const auto decoding = options.decoding.value_or(DecodingParams::defaults_for(q.task));
    auto prompt = build_prompt(q, std::span<const Document* const>(job.context), q.task);
    try {
      auto text = generate(generator, prompt, decoding);
      slots[i] = GenerationRecord{q.query_id, job.setting, generator.id(), decoding, std::move(text), std::nullopt};
    } catch (const ServiceError& e) {
      errors[i] = e.what();
    }
  });

  auto key_fn = [](const GenerationRecord& r) { return r.key(); };
  KeyedLedger<GenerationRecord, decltype(key_fn)> ledger(key_fn);
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    if (slots[i]) {
      ledger.add(std::move(*slots[i]));
    } else {
      const auto& qid = queries[jobs[i].query].query_id;
      spdlog::warn("generation failed for query '{}' ({}): {}", qid, jobs[i].setting.key(), errors[i]);
      failures.push_back({qid, "generate:" + jobs[i].setting.key(), errors[i]});
    }
  }
  return {std::move(ledger).release(), std::move(failures)};
}

}  // namespace ragfair
