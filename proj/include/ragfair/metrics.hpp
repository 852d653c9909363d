#pragma once

// Accuracy (ROUGE-L), document utility, and group-level aggregation of
// accuracy, utility, exposure and attribution.

#include <algorithm>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "attribution.hpp"
#include "corpus.hpp"
#include "error.hpp"
#include "generation.hpp"
#include "retrieval.hpp"
#include "text.hpp"

namespace ragfair {

enum class RougeVariant { F1, Recall, Precision };

inline std::string_view to_string(RougeVariant v) {
  switch (v) {
    case RougeVariant::F1: return "f1";
    case RougeVariant::Recall: return "recall";
    case RougeVariant::Precision: return "precision";
  }
  return "f1";
}

inline RougeVariant parse_rouge_variant(std::string_view s) {
  if (s == "f1") return RougeVariant::F1;
  if (s == "recall") return RougeVariant::Recall;
  if (s == "precision") return RougeVariant::Precision;
  throw ConfigError("unknown ROUGE-L variant '" + std::string(s) + "' (expected f1|recall|precision)");
}

/// ROUGE-L on shared-tokenizer tokens, scaled to [0, 100]. F1 uses beta = 1.
inline double rouge_l(std::string_view candidate, std::string_view reference, RougeVariant variant = RougeVariant::F1) {
  auto c = text::tokenize(candidate);
  auto r = text::tokenize(reference);
  if (c.empty() || r.empty()) return 0.0;
  const auto lcs = text::lcs_length(c, r);
  if (lcs == 0) return 0.0;
  const double p = static_cast<double>(lcs) / static_cast<double>(c.size());
  const double rec = static_cast<double>(lcs) / static_cast<double>(r.size());
  switch (variant) {
    case RougeVariant::Recall: return rec * 100.0;
    case RougeVariant::Precision: return p * 100.0;
    case RougeVariant::F1: break;
  }
  return 2.0 * p * rec / (p + rec) * 100.0;
}

/// Marginal accuracy gain of a single document over the LLM alone, clamped at 0.
inline double doc_utility(double accuracy_llm_only, double accuracy_single_doc) {
  return std::max(accuracy_single_doc - accuracy_llm_only, 0.0);
}

/// Fills `accuracy` of every record from its query's ground truth.
inline void score_records(std::span<GenerationRecord> records, std::span<const QueryInstance> queries,
                          RougeVariant variant = RougeVariant::F1) {
  std::unordered_map<std::string, const QueryInstance*> by_id;
  for (const auto& q : queries) by_id.emplace(q.query_id, &q);
  for (auto& r : records) {
    auto it = by_id.find(r.query_id);
    if (it == by_id.end()) throw Error("record for unknown query '" + r.query_id + "'");
    r.accuracy = rouge_l(r.output_text, it->second->ground_truth, variant);
  }
}

// ---------------------------------------------------------------------------
// Group vectors
// ---------------------------------------------------------------------------

enum class VectorKind { AcRag, AcLlm, DeltaAc, U, E, A, UHat, EHat, AHat };

inline std::string_view to_string(VectorKind k) {
  switch (k) {
    case VectorKind::AcRag: return "AC_rag";
    case VectorKind::AcLlm: return "AC_llm";
    case VectorKind::DeltaAc: return "DeltaAC";
    case VectorKind::U: return "U";
    case VectorKind::E: return "E";
    case VectorKind::A: return "A";
    case VectorKind::UHat: return "U_hat";
    case VectorKind::EHat: return "E_hat";
    case VectorKind::AHat: return "A_hat";
  }
  return "?";
}

/// One value per group of a category. Absent groups (no queries) hold
/// nullopt; `undefined` marks a normalization whose total mass was zero.
struct GroupVector {
  std::string category;
  VectorKind kind = VectorKind::AcRag;
  std::vector<std::string> groups;
  std::vector<std::optional<double>> values;
  std::vector<std::size_t> support;  // contributing queries (AC) or items
  bool undefined = false;

  std::optional<double> value(std::string_view group) const {
    for (std::size_t i = 0; i < groups.size(); ++i)
      if (groups[i] == group) return values[i];
    throw Error("group '" + std::string(group) + "' not in category '" + category + "'");
  }

  std::size_t present_count() const {
    return static_cast<std::size_t>(std::count_if(values.begin(), values.end(), [](const auto& v) { return v.has_value(); }));
  }
};

inline json group_vector_to_json(const GroupVector& v) {
  json values = json::object();
  for (std::size_t i = 0; i < v.groups.size(); ++i) {
    values[v.groups[i]] = v.values[i] ? json(*v.values[i]) : json(nullptr);
  }
  json j = {{"kind", to_string(v.kind)}, {"values", std::move(values)}};
  j["status"] = v.undefined ? "undefined" : (v.present_count() < v.groups.size() ? "partial" : "ok");
  return j;
}

namespace detail {

inline GroupVector empty_vector(const FairnessCategory& c, VectorKind kind) {
  return {c.name, kind, c.groups, std::vector<std::optional<double>>(c.groups.size()),
          std::vector<std::size_t>(c.groups.size(), 0), false};
}

inline std::size_t group_of(const Document& d, const FairnessCategory& c) {
  const auto* g = d.label(c.name);
  auto gi = g ? c.group_index(*g) : std::nullopt;
  if (!gi) throw Error("document '" + d.doc_id + "' lacks a valid label for category '" + c.name + "'");
  return *gi;
}

inline std::size_t group_of(const QueryInstance& q, const FairnessCategory& c) {
  const auto* g = q.label(c.name);
  auto gi = g ? c.group_index(*g) : std::nullopt;
  if (!gi) throw Error("query '" + q.query_id + "' lacks a valid label for category '" + c.name + "'");
  return *gi;
}

/// Hat vector: per-group sum of `weight` over items, divided by |Q|.
template <typename Items, typename DocIdFn, typename WeightFn>
GroupVector group_mass(const Items& items, const Corpus& corpus, const FairnessCategory& c, std::size_t num_queries,
                       VectorKind kind, DocIdFn doc_id, WeightFn weight) {
  auto out = empty_vector(c, kind);
  std::vector<text::CompensatedSum> sums(c.groups.size());
  for (const auto& item : items) {
    const auto g = group_of(corpus.at(doc_id(item)), c);
    sums[g].add(weight(item));
    ++out.support[g];
  }
  for (std::size_t g = 0; g < c.groups.size(); ++g) {
    out.values[g] = num_queries ? sums[g].value() / static_cast<double>(num_queries) : 0.0;
  }
  return out;
}

}  // namespace detail

/// Divides a hat vector by its total. A zero total leaves every value unset
/// and flags the result undefined.
inline GroupVector normalize(const GroupVector& hat, VectorKind kind) {
  GroupVector out = hat;
  out.kind = kind;
  text::CompensatedSum total;
  for (const auto& v : hat.values) total.add(v.value_or(0.0));
  const double t = total.value();
  if (!(t > 0.0)) {
    std::fill(out.values.begin(), out.values.end(), std::nullopt);
    out.undefined = true;
    return out;
  }
  for (auto& v : out.values)
    if (v) *v /= t;
  return out;
}

/// Mean accuracy of each group's queries in one setting. Groups without
/// queries are left absent. Every query must have exactly one record.
inline GroupVector query_group_accuracy(std::span<const GenerationRecord> records,
                                        std::span<const QueryInstance> queries, const FairnessCategory& c,
                                        SettingKind setting, std::string_view retriever_id = {}) {
  if (setting == SettingKind::SingleDoc) throw Error("query_group_accuracy: single-document setting has no per-query accuracy");
  std::unordered_map<std::string, const GenerationRecord*> by_query;
  for (const auto& r : records) {
    if (r.setting.kind != setting) continue;
    if (setting == SettingKind::Rag && !retriever_id.empty() && r.setting.retriever_id != retriever_id) continue;
    if (!by_query.emplace(r.query_id, &r).second) throw Error("duplicate record for query '" + r.query_id + "'");
  }
  std::vector<std::string> missing;
  for (const auto& q : queries)
    if (!by_query.contains(q.query_id)) missing.push_back(q.query_id);
  if (!missing.empty()) {
    std::string list;
    for (const auto& id : missing) list += (list.empty() ? "" : ", ") + id;
    throw Error("missing " + std::string(to_string(setting)) + " records for queries: " + list);
  }

  auto out = detail::empty_vector(c, setting == SettingKind::Rag ? VectorKind::AcRag : VectorKind::AcLlm);
  std::vector<text::CompensatedSum> sums(c.groups.size());
  for (const auto& q : queries) {
    const auto g = detail::group_of(q, c);
    const auto& r = *by_query.at(q.query_id);
    sums[g].add(r.accuracy.value_or(rouge_l(r.output_text, q.ground_truth)));
    ++out.support[g];
  }
  for (std::size_t g = 0; g < c.groups.size(); ++g) {
    if (out.support[g]) out.values[g] = sums[g].value() / static_cast<double>(out.support[g]);
  }
  return out;
}

/// AC_rag - AC_llm per group; negative gains are kept.
inline GroupVector accuracy_improvements(const GroupVector& rag, const GroupVector& llm) {
  if (rag.category != llm.category || rag.groups != llm.groups) {
    throw Error("accuracy_improvements: category mismatch ('" + rag.category + "' vs '" + llm.category + "')");
  }
  GroupVector out = rag;
  out.kind = VectorKind::DeltaAc;
  for (std::size_t g = 0; g < out.groups.size(); ++g) {
    out.values[g] = (rag.values[g] && llm.values[g]) ? std::optional(*rag.values[g] - *llm.values[g]) : std::nullopt;
  }
  return out;
}

struct DocScore {
  std::string query_id;
  std::string doc_id;
  double utility = 0.0;
  double exposure = 1.0;
  std::optional<int> attribution;
};

/// Utility/exposure/attribution for every (query, retrieved doc) pair.
/// `llm` and `single` must already be scored. Pairs without a single-doc
/// record get utility 0.
inline std::vector<DocScore> build_doc_scores(std::span<const QueryInstance> queries, const RankingMap& rankings,
                                              std::span<const GenerationRecord> llm,
                                              std::span<const GenerationRecord> single,
                                              std::span<const AttributionVerdict> verdicts) {
  std::unordered_map<std::string, double> base;
  for (const auto& r : llm) base[r.query_id] = r.accuracy.value_or(0.0);
  std::unordered_map<std::string, double> solo;
  for (const auto& r : single) solo[r.query_id + "|" + r.setting.doc_id] = r.accuracy.value_or(0.0);
  std::unordered_map<std::string, int> attr;
  for (const auto& v : verdicts) attr[v.query_id + "|" + v.doc_id] = v.score;

  std::vector<DocScore> out;
  for (const auto& q : queries) {
    auto rl = rankings.find(q.query_id);
    if (rl == rankings.end()) continue;
    const double e1 = base.contains(q.query_id) ? base.at(q.query_id) : 0.0;
    for (const auto& e : rl->second.entries) {
      const auto key = q.query_id + "|" + e.doc_id;
      DocScore s{q.query_id, e.doc_id, 0.0, 1.0, std::nullopt};
      if (auto it = solo.find(key); it != solo.end()) s.utility = doc_utility(e1, it->second);
      if (auto it = attr.find(key); it != attr.end()) s.attribution = it->second;
      out.push_back(std::move(s));
    }
  }
  return out;
}

struct GroupPair {
  GroupVector hat;
  GroupVector normalized;
};

/// U_hat(g) = (1/|Q|) sum of utilities of retrieved docs in g; U = U_hat / sum.
inline GroupPair group_utility(std::span<const DocScore> scores, const Corpus& corpus, const FairnessCategory& c,
                               std::size_t num_queries) {
  auto hat = detail::group_mass(scores, corpus, c, num_queries, VectorKind::UHat,
                                [](const DocScore& s) -> const std::string& { return s.doc_id; },
                                [](const DocScore& s) { return s.utility; });
  return {hat, normalize(hat, VectorKind::U)};
}

/// E_hat(g) = (1/|Q|) count of retrieved docs in g (uniform exposure of 1).
inline GroupPair group_exposure(std::span<const RankedList> lists, const Corpus& corpus, const FairnessCategory& c) {
  std::vector<const RankedEntry*> entries;
  for (const auto& l : lists)
    for (const auto& e : l.entries) entries.push_back(&e);
  auto hat = detail::group_mass(entries, corpus, c, lists.size(), VectorKind::EHat,
                                [](const RankedEntry* e) -> const std::string& { return e->doc_id; },
                                [](const RankedEntry*) { return 1.0; });
  return {hat, normalize(hat, VectorKind::E)};
}

/// A_hat(g) = (1/|Q|) count of entailing retrieved docs in g. Absent verdicts
/// contribute nothing.
inline GroupPair group_attribution(std::span<const AttributionVerdict> verdicts, const Corpus& corpus,
                                   const FairnessCategory& c, std::size_t num_queries) {
  auto hat = detail::group_mass(verdicts, corpus, c, num_queries, VectorKind::AHat,
                                [](const AttributionVerdict& v) -> const std::string& { return v.doc_id; },
                                [](const AttributionVerdict& v) { return static_cast<double>(v.score); });
  return {hat, normalize(hat, VectorKind::A)};
}

}  // namespace ragfair
