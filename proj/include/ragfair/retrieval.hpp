#pragma once

// BM25 over an in-memory inverted index, plus the external retriever plugin.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "corpus.hpp"
#include "error.hpp"
#include "http.hpp"
#include "io.hpp"
#include "text.hpp"

namespace ragfair {

enum class IndexField { Body, Title, TitleAndBody };

inline std::string_view to_string(IndexField f) {
  switch (f) {
    case IndexField::Body: return "body";
    case IndexField::Title: return "title";
    case IndexField::TitleAndBody: return "title_body";
  }
  return "title_body";
}

inline IndexField parse_index_field(std::string_view s) {
  if (s == "body") return IndexField::Body;
  if (s == "title") return IndexField::Title;
  if (s == "title_body") return IndexField::TitleAndBody;
  throw ConfigError("unknown index field '" + std::string(s) + "'");
}

inline std::string field_text(const Document& d, IndexField f) {
  switch (f) {
    case IndexField::Body: return d.body;
    case IndexField::Title: return d.title;
    case IndexField::TitleAndBody: return d.title + "\n" + d.body;
  }
  return d.body;
}

struct Posting {
  std::uint32_t doc = 0;  // position in doc_ids()
  std::uint32_t tf = 0;
};

/// Immutable term -> postings map with the document statistics BM25 needs.
class InvertedIndex {
 public:
  /// Indexes (doc_id, text) pairs with the shared tokenizer.
  static InvertedIndex build(const std::vector<std::pair<std::string, std::string>>& docs,
                             IndexField field = IndexField::TitleAndBody) {
    if (docs.empty()) throw Error("cannot build an index over an empty corpus");
    InvertedIndex idx;
    idx.field_ = field;
    idx.doc_ids_.reserve(docs.size());
    idx.lengths_.reserve(docs.size());
    text::CompensatedSum total;
    for (std::uint32_t i = 0; i < docs.size(); ++i) {
      const auto& [id, body] = docs[i];
      if (!idx.by_id_.emplace(id, i).second) throw Error("duplicate doc_id '" + id + "' in index input");
      idx.doc_ids_.push_back(id);
      auto toks = text::tokenize(body);
      idx.lengths_.push_back(static_cast<std::uint32_t>(toks.size()));
      total.add(static_cast<double>(toks.size()));
      std::map<std::string, std::uint32_t> tf;
      for (auto& t : toks) ++tf[std::move(t)];
      for (auto& [term, n] : tf) idx.postings_[term].push_back({i, n});
    }
    idx.avg_len_ = total.value() / static_cast<double>(docs.size());
    return idx;
  }

  static InvertedIndex build(const Corpus& corpus, IndexField field = IndexField::TitleAndBody) {
    std::vector<std::pair<std::string, std::string>> docs;
    docs.reserve(corpus.size());
    for (const auto& d : corpus.documents()) docs.emplace_back(d.doc_id, field_text(d, field));
    return build(docs, field);
  }

  std::size_t doc_count() const noexcept { return doc_ids_.size(); }
  double avg_doc_length() const noexcept { return avg_len_; }
  IndexField field() const noexcept { return field_; }
  std::size_t vocabulary_size() const noexcept { return postings_.size(); }

  const std::string& doc_id(std::uint32_t i) const { return doc_ids_.at(i); }
  const std::vector<std::string>& doc_ids() const noexcept { return doc_ids_; }
  std::uint32_t doc_length(std::uint32_t i) const { return lengths_.at(i); }
  bool contains(std::string_view doc_id) const { return by_id_.contains(std::string(doc_id)); }

  std::size_t doc_frequency(std::string_view term) const {
    auto it = postings_.find(std::string(term));
    return it == postings_.end() ? 0 : it->second.size();
  }

  std::span<const Posting> postings(std::string_view term) const {
    auto it = postings_.find(std::string(term));
    if (it == postings_.end()) return {};
    return it->second;
  }

  /// Term frequency of `term` in the document with id `doc_id` (0 if absent).
  std::uint32_t term_frequency(std::string_view term, std::string_view doc_id) const {
    auto d = by_id_.find(std::string(doc_id));
    if (d == by_id_.end()) return 0;
    for (const auto& p : postings(term))
      if (p.doc == d->second) return p.tf;
    return 0;
  }

  json to_json() const {
    // Terms are written sorted so identical inputs give identical files.
    json terms = json::object();
    std::vector<std::string_view> keys;
    keys.reserve(postings_.size());
    for (const auto& [t, _] : postings_) keys.push_back(t);
    std::sort(keys.begin(), keys.end());
    for (auto t : keys) {
      json plist = json::array();
      for (const auto& p : postings_.at(std::string(t))) plist.push_back({p.doc, p.tf});
      terms[std::string(t)] = std::move(plist);
    }
    return {{"format", "ragfair-bm25-index"}, {"version", 1},          {"field", to_string(field_)},
            {"doc_ids", doc_ids_},            {"doc_lengths", lengths_}, {"postings", std::move(terms)}};
  }

  static InvertedIndex from_json(const json& j) {
    try {
      if (j.at("format") != "ragfair-bm25-index") throw ParseError("not a ragfair index file");
      InvertedIndex idx;
      idx.field_ = parse_index_field(j.at("field").get<std::string>());
      idx.doc_ids_ = j.at("doc_ids").get<std::vector<std::string>>();
      idx.lengths_ = j.at("doc_lengths").get<std::vector<std::uint32_t>>();
      if (idx.doc_ids_.empty() || idx.doc_ids_.size() != idx.lengths_.size()) {
        throw ParseError("index doc_ids and doc_lengths disagree");
      }
      for (std::uint32_t i = 0; i < idx.doc_ids_.size(); ++i) idx.by_id_.emplace(idx.doc_ids_[i], i);
      text::CompensatedSum total;
      for (auto n : idx.lengths_) total.add(n);
      idx.avg_len_ = total.value() / static_cast<double>(idx.lengths_.size());
      for (const auto& [term, plist] : j.at("postings").items()) {
        auto& dst = idx.postings_[term];
        for (const auto& p : plist) dst.push_back({p.at(0).get<std::uint32_t>(), p.at(1).get<std::uint32_t>()});
      }
      return idx;
    } catch (const json::exception& e) {
      throw ParseError(std::string("malformed index: ") + e.what());
    }
  }

  void save(const std::filesystem::path& path) const { io::atomic_write(path, to_json().dump()); }
  static InvertedIndex load(const std::filesystem::path& path) { return from_json(io::read_json(path)); }

 private:
  IndexField field_ = IndexField::TitleAndBody;
  std::vector<std::string> doc_ids_;
  std::vector<std::uint32_t> lengths_;
  std::unordered_map<std::string, std::uint32_t> by_id_;
  std::unordered_map<std::string, std::vector<Posting>> postings_;
  double avg_len_ = 0.0;
};

// ---------------------------------------------------------------------------
// Ranked lists
// ---------------------------------------------------------------------------

struct RankedEntry {
  std::string doc_id;
  double score = 0.0;

  friend bool operator==(const RankedEntry&, const RankedEntry&) = default;
};

struct RankedList {
  std::string query_id;
  std::string retriever_id;
  std::size_t k = 0;
  std::vector<RankedEntry> entries;
};

/// Score descending, then doc_id ascending.
inline bool rank_before(const RankedEntry& a, const RankedEntry& b) {
  return a.score != b.score ? a.score > b.score : a.doc_id < b.doc_id;
}

/// Sorts, keeps the first (best) occurrence of every doc_id and truncates to k.
inline void canonicalize(std::vector<RankedEntry>& entries, std::size_t k) {
  std::stable_sort(entries.begin(), entries.end(), rank_before);
  std::unordered_set<std::string> seen;
  std::vector<RankedEntry> out;
  for (auto& e : entries) {
    if (out.size() == k) break;
    if (seen.insert(e.doc_id).second) out.push_back(std::move(e));
  }
  entries = std::move(out);
}

inline json ranked_list_to_json(const RankedList& r) {
  json entries = json::array();
  for (const auto& e : r.entries) entries.push_back({{"doc_id", e.doc_id}, {"score", e.score}});
  return {{"query_id", r.query_id}, {"retriever_id", r.retriever_id}, {"k", r.k}, {"entries", std::move(entries)}};
}

inline RankedList ranked_list_from_json(const json& j) {
  try {
    RankedList r;
    r.query_id = j.at("query_id").get<std::string>();
    r.retriever_id = j.at("retriever_id").get<std::string>();
    r.k = j.at("k").get<std::size_t>();
    for (const auto& e : j.at("entries")) r.entries.push_back({e.at("doc_id").get<std::string>(), e.at("score").get<double>()});
    return r;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed ranked list: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// BM25
// ---------------------------------------------------------------------------

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;
};

/// Lucene-style IDF; strictly positive and strictly decreasing in df.
inline double bm25_idf(std::size_t doc_count, std::size_t df) {
  const double n = static_cast<double>(doc_count);
  const double d = static_cast<double>(df);
  return std::log(1.0 + (n - d + 0.5) / (d + 0.5));
}

inline double bm25_term_weight(double tf, double doc_len, double avg_len, const Bm25Params& p) {
  return tf * (p.k1 + 1.0) / (tf + p.k1 * (1.0 - p.b + p.b * doc_len / avg_len));
}

/// Top-k BM25 ranking. Each distinct query term contributes once. Documents
/// with zero score are dropped; an empty query yields an empty list.
inline RankedList bm25_retrieve(const InvertedIndex& index, std::string_view query_text, std::size_t k = 10,
                                const Bm25Params& params = {}) {
  RankedList out;
  out.retriever_id = "bm25";
  out.k = k;
  auto toks = text::tokenize(query_text);
  std::set<std::string> terms(toks.begin(), toks.end());
  if (terms.empty() || k == 0) return out;

  std::unordered_map<std::uint32_t, double> scores;
  const double avg = index.avg_doc_length();
  for (const auto& t : terms) {
    auto plist = index.postings(t);
    if (plist.empty()) continue;
    const double idf = bm25_idf(index.doc_count(), plist.size());
    for (const auto& p : plist) {
      scores[p.doc] += idf * bm25_term_weight(p.tf, index.doc_length(p.doc), avg, params);
    }
  }
  std::vector<RankedEntry> entries;
  entries.reserve(scores.size());
  for (const auto& [doc, s] : scores)
    if (s > 0.0) entries.push_back({index.doc_id(doc), s});
  const std::size_t n = std::min(k, entries.size());
  std::partial_sort(entries.begin(), entries.begin() + static_cast<std::ptrdiff_t>(n), entries.end(), rank_before);
  entries.resize(n);
  out.entries = std::move(entries);
  return out;
}

// ---------------------------------------------------------------------------
// Retriever plugins
// ---------------------------------------------------------------------------

class Retriever {
 public:
  virtual ~Retriever() = default;
  virtual std::string id() const = 0;
  /// Top-k for the query, canonicalized. Throws ServiceError on failure.
  virtual RankedList retrieve(const QueryInstance& query, std::size_t k) = 0;
};

class Bm25Retriever final : public Retriever {
 public:
  explicit Bm25Retriever(std::shared_ptr<const InvertedIndex> index, Bm25Params params = {})
      : index_(std::move(index)), params_(params) {}

  std::string id() const override { return "bm25"; }

  RankedList retrieve(const QueryInstance& query, std::size_t k) override {
    auto r = bm25_retrieve(*index_, query.query_text, k, params_);
    r.query_id = query.query_id;
    return r;
  }

 private:
  std::shared_ptr<const InvertedIndex> index_;
  Bm25Params params_;
};

/// Client for the external retriever protocol:
/// POST /retrieve {"query", "k"} -> {"results": [{"doc_id", "score"}]}.
class ExternalRetriever final : public Retriever {
 public:
  ExternalRetriever(std::string retriever_id, http::Endpoint endpoint, std::unordered_set<std::string> known_ids,
                    http::RetryPolicy policy = {})
      : id_(std::move(retriever_id)), endpoint_(std::move(endpoint)), known_(std::move(known_ids)), policy_(policy) {}

  std::string id() const override { return id_; }

  RankedList retrieve(const QueryInstance& query, std::size_t k) override {
    json reply = http::post_json(endpoint_, "/retrieve", {{"query", query.query_text}, {"k", k}}, policy_);
    RankedList out;
    out.query_id = query.query_id;
    out.retriever_id = id_;
    out.k = k;
    if (!reply.is_object() || !reply.contains("results") || !reply["results"].is_array()) {
      throw ServiceError(endpoint_.url() + "/retrieve: reply lacks a 'results' list");
    }
    for (const auto& r : reply["results"]) {
      if (!r.is_object() || !r.contains("doc_id") || !r["doc_id"].is_string() || !r.contains("score") ||
          !r["score"].is_number()) {
        throw ServiceError(endpoint_.url() + "/retrieve: malformed result entry " + r.dump());
      }
      auto doc_id = r["doc_id"].get<std::string>();
      if (!known_.contains(doc_id)) {
        throw ServiceError(endpoint_.url() + "/retrieve returned unknown doc_id '" + doc_id + "'");
      }
      out.entries.push_back({std::move(doc_id), r["score"].get<double>()});
    }
    canonicalize(out.entries, k);
    return out;
  }

 private:
  std::string id_;
  http::Endpoint endpoint_;
  std::unordered_set<std::string> known_;
  http::RetryPolicy policy_;
};

/// Retrieves top-k, optionally removing the query's own source document
/// (one extra candidate is requested so the list stays full).
inline RankedList retrieve_for(Retriever& retriever, const QueryInstance& query, std::size_t k,
                               bool exclude_source_doc) {
  if (!exclude_source_doc) return retriever.retrieve(query, k);
  auto r = retriever.retrieve(query, k + 1);
  std::erase_if(r.entries, [&](const RankedEntry& e) { return e.doc_id == query.source_doc_id; });
  if (r.entries.size() > k) r.entries.resize(k);
  r.k = k;
  return r;
}

}  // namespace ragfair
