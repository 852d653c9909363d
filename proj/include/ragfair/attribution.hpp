#pragma once

// Document -> response attribution via an entailment oracle.

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "corpus.hpp"
#include "error.hpp"
#include "generation.hpp"
#include "http.hpp"
#include "ledger.hpp"
#include "parallel.hpp"
#include "retrieval.hpp"
#include "text.hpp"

namespace ragfair {

enum class NliLabel { Entailment, Neutral, Contradiction };

inline NliLabel parse_nli_label(std::string_view s) {
  if (s == "entailment") return NliLabel::Entailment;
  if (s == "neutral") return NliLabel::Neutral;
  if (s == "contradiction") return NliLabel::Contradiction;
  throw ServiceError("unknown NLI label '" + std::string(s) + "'");
}

/// Only entailment counts; neutral and contradiction both map to 0.
inline int label_score(NliLabel l) { return l == NliLabel::Entailment ? 1 : 0; }

struct Judgement {
  int score = 0;
  bool truncated = false;
};

struct AttributionVerdict {
  std::string query_id;
  std::string doc_id;
  int score = 0;
  std::string oracle_id;
  bool truncated = false;

  std::string key() const { return query_id + "|" + doc_id + "|" + oracle_id; }
};

inline json verdict_to_json(const AttributionVerdict& v) {
  json j = {{"query_id", v.query_id}, {"doc_id", v.doc_id}, {"score", v.score}, {"oracle_id", v.oracle_id}};
  if (v.truncated) j["truncated"] = true;
  return j;
}

inline AttributionVerdict verdict_from_json(const json& j) {
  try {
    AttributionVerdict v;
    v.query_id = j.at("query_id").get<std::string>();
    v.doc_id = j.at("doc_id").get<std::string>();
    v.score = j.at("score").get<int>();
    v.oracle_id = j.at("oracle_id").get<std::string>();
    v.truncated = j.value("truncated", false);
    if (v.score != 0 && v.score != 1) throw ParseError("verdict score must be 0 or 1");
    return v;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed verdict: ") + e.what());
  }
}

class AttributionOracle {
 public:
  virtual ~AttributionOracle() = default;
  virtual std::string id() const = 0;
  /// Does `doc` (premise) entail `response` (hypothesis)?
  /// Throws ServiceError on failure.
  virtual Judgement judge(const Document& doc, std::string_view response) = 0;
};

/// Lexical stand-in for NLI: 1 iff at least `threshold` of the response
/// tokens occur somewhere in the document body. Appending body tokens to a
/// response can only raise the covered fraction.
inline int mock_attribute(const Document& doc, std::string_view response, double threshold = 0.5) {
  auto resp = text::tokenize(response);
  auto body = text::tokenize(doc.body);
  const std::unordered_set<std::string> vocab(body.begin(), body.end());
  std::size_t covered = 0;
  for (const auto& t : resp) covered += vocab.contains(t) ? 1 : 0;
  const double denom = static_cast<double>(std::max<std::size_t>(1, resp.size()));
  return static_cast<double>(covered) / denom >= threshold ? 1 : 0;
}

class MockOracle final : public AttributionOracle {
 public:
  explicit MockOracle(double threshold = 0.5) : threshold_(threshold) {}
  std::string id() const override { return "mock"; }
  Judgement judge(const Document& doc, std::string_view response) override {
    return {mock_attribute(doc, response, threshold_), false};
  }

 private:
  double threshold_;
};

/// Always returns the same verdict. Used to check aggregation behaviour.
class ConstantOracle final : public AttributionOracle {
 public:
  explicit ConstantOracle(int value) : value_(value ? 1 : 0) {}
  std::string id() const override { return "const" + std::to_string(value_); }
  Judgement judge(const Document&, std::string_view) override { return {value_, false}; }

 private:
  int value_;
};

/// Client for POST /nli {"premise","hypothesis"} -> {"label","scores"}.
/// The premise is "title\nbody", cut to `max_premise_words` words.
class NliOracle final : public AttributionOracle {
 public:
  NliOracle(std::string oracle_id, http::Endpoint endpoint, std::size_t max_premise_words = 400,
            http::RetryPolicy policy = {})
      : id_(std::move(oracle_id)), endpoint_(std::move(endpoint)), max_words_(max_premise_words), policy_(policy) {}

  std::string id() const override { return id_; }

  Judgement judge(const Document& doc, std::string_view response) override {
    std::string premise = doc.title + "\n" + doc.body;
    bool truncated = false;
    if (text::word_count(premise) > max_words_) {
      premise = doc.title + "\n" + text::first_words(doc.body, max_words_ > text::word_count(doc.title)
                                                                   ? max_words_ - text::word_count(doc.title)
                                                                   : 0);
      truncated = true;
    }
    json reply = http::post_json(endpoint_, "/nli", {{"premise", premise}, {"hypothesis", std::string(response)}},
                                 policy_);
    if (!reply.is_object() || !reply.contains("label") || !reply["label"].is_string()) {
      throw ServiceError(endpoint_.url() + "/nli: reply lacks a string 'label'");
    }
    return {label_score(parse_nli_label(reply["label"].get<std::string>())), truncated};
  }

 private:
  std::string id_;
  http::Endpoint endpoint_;
  std::size_t max_words_;
  http::RetryPolicy policy_;
};

/// Verdict for one (document, response) pair. An empty response scores 0
/// without consulting the oracle; an oracle failure gives no verdict.
inline std::optional<AttributionVerdict> attribute(AttributionOracle& oracle, std::string_view query_id,
                                                   const Document& doc, std::string_view response) {
  AttributionVerdict v{std::string(query_id), doc.doc_id, 0, oracle.id(), false};
  if (text::trim(response).empty()) return v;
  try {
    auto j = oracle.judge(doc, response);
    v.score = j.score;
    v.truncated = j.truncated;
    return v;
  } catch (const ServiceError& e) {
    spdlog::warn("attribution failed for query '{}' doc '{}': {}", query_id, doc.doc_id, e.what());
    return std::nullopt;
  }
}

struct AttributionResult {
  std::vector<AttributionVerdict> verdicts;
  std::vector<Failure> absent;  // one entry per missing verdict
};

/// Judges every (query, top-k document) pair against the query's RAG output.
/// Queries without a RAG record are skipped.
inline AttributionResult attribute_rankings(std::span<const QueryInstance> queries, const Corpus& corpus,
                                            const RankingMap& rankings, std::span<const GenerationRecord> rag_records,
                                            AttributionOracle& oracle, std::size_t parallelism = 1) {
  std::map<std::string, const GenerationRecord*> outputs;
  for (const auto& r : rag_records) outputs[r.query_id] = &r;

  struct Job {
    std::string query_id;
    const Document* doc;
    const std::string* response;
  };
  std::vector<Job> jobs;
  for (const auto& q : queries) {
    auto out = outputs.find(q.query_id);
    auto rl = rankings.find(q.query_id);
    if (out == outputs.end() || rl == rankings.end()) continue;
    for (const auto& e : rl->second.entries) jobs.push_back({q.query_id, &corpus.at(e.doc_id), &out->second->output_text});
  }

  std::vector<std::optional<AttributionVerdict>> slots(jobs.size());
  parallel_for(jobs.size(), parallelism,
               [&](std::size_t i) { slots[i] = attribute(oracle, jobs[i].query_id, *jobs[i].doc, *jobs[i].response); });

  auto key_fn = [](const AttributionVerdict& v) { return v.key(); };
  KeyedLedger<AttributionVerdict, decltype(key_fn)> ledger(key_fn);
  AttributionResult result;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    if (slots[i]) {
      ledger.add(std::move(*slots[i]));
    } else {
      result.absent.push_back({jobs[i].query_id, "attribute", "no verdict for doc '" + jobs[i].doc->doc_id + "'"});
    }
  }
  result.verdicts = std::move(ledger).release();
  return result;
}

}  // namespace ragfair
