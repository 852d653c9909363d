#pragma once

// Fairness diagnostics: group ranges, Spearman correlations between group
// utility/exposure/attribution and group accuracy, and the audit report.

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "attribution.hpp"
#include "corpus.hpp"
#include "generation.hpp"
#include "ledger.hpp"
#include "metrics.hpp"
#include "retrieval.hpp"
#include "text.hpp"

namespace ragfair {

inline constexpr int kReportSchemaVersion = 1;

// ---------------------------------------------------------------------------
// Ranges
// ---------------------------------------------------------------------------

enum class RangeKind { Delta, Rag, Llm };

inline std::string_view to_string(RangeKind k) {
  switch (k) {
    case RangeKind::Delta: return "R_delta";
    case RangeKind::Rag: return "R_rag";
    case RangeKind::Llm: return "R_llm";
  }
  return "?";
}

struct RangeStat {
  std::string category;
  RangeKind setting = RangeKind::Rag;
  std::optional<double> value;  // unset with fewer than two present groups
  std::string argmax_group;
  std::string argmin_group;
};

/// max - min over the present groups. Ties resolve to the first group in
/// category order.
inline RangeStat range_metric(const GroupVector& v, RangeKind setting) {
  RangeStat out{v.category, setting, std::nullopt, "", ""};
  std::optional<std::size_t> hi, lo;
  for (std::size_t g = 0; g < v.values.size(); ++g) {
    if (!v.values[g]) continue;
    if (!hi || *v.values[g] > *v.values[*hi]) hi = g;
    if (!lo || *v.values[g] < *v.values[*lo]) lo = g;
  }
  if (v.present_count() < 2) return out;
  out.value = *v.values[*hi] - *v.values[*lo];
  out.argmax_group = v.groups[*hi];
  out.argmin_group = v.groups[*lo];
  return out;
}

inline json range_to_json(const RangeStat& r) {
  json j = {{"value", r.value ? json(*r.value) : json(nullptr)}};
  if (r.value) {
    j["argmax"] = r.argmax_group;
    j["argmin"] = r.argmin_group;
  } else {
    j["status"] = "undefined";
  }
  return j;
}

// ---------------------------------------------------------------------------
// Spearman
// ---------------------------------------------------------------------------

/// 1-based ranks; tied values share the mean of their positions.
inline std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = r;
    i = j + 1;
  }
  return ranks;
}

inline std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
  const double n = static_cast<double>(x.size());
  const double mx = text::compensated_sum(x) / n;
  const double my = text::compensated_sum(y) / n;
  text::CompensatedSum sxy, sxx, syy;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy.add(dx * dy);
    sxx.add(dx * dx);
    syy.add(dy * dy);
  }
  if (sxx.value() <= 0.0 || syy.value() <= 0.0) return std::nullopt;
  return std::clamp(sxy.value() / std::sqrt(sxx.value() * syy.value()), -1.0, 1.0);
}

/// Spearman's rho as the Pearson correlation of average ranks. Undefined for
/// fewer than 3 points, mismatched lengths, or a constant input.
inline std::optional<double> spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 3) return std::nullopt;
  auto constant = [](std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [&](double a) { return a == v.front(); });
  };
  if (constant(x) || constant(y)) return std::nullopt;
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  return pearson(rx, ry);
}

// ---------------------------------------------------------------------------
// Correlations
// ---------------------------------------------------------------------------

enum class Factor { U, E, A };
enum class Target { AcRag, DeltaAc };

inline std::string_view to_string(Factor f) {
  switch (f) {
    case Factor::U: return "U";
    case Factor::E: return "E";
    case Factor::A: return "A";
  }
  return "?";
}

inline std::string_view to_string(Target t) { return t == Target::AcRag ? "AC_rag" : "DeltaAC"; }

struct CategoryVectors {
  GroupVector ac_rag, ac_llm, delta;
  GroupVector u_hat, u, e_hat, e, a_hat, a;

  const GroupVector& factor(Factor f) const {
    switch (f) {
      case Factor::U: return u;
      case Factor::E: return e;
      case Factor::A: return a;
    }
    return u;
  }
  const GroupVector& target(Target t) const { return t == Target::AcRag ? ac_rag : delta; }
};

/// Vectors of one retriever, keyed by category name.
struct RetrieverVectors {
  std::string retriever_id;
  std::map<std::string, CategoryVectors> categories;
};

struct CorrelationStat {
  std::string category;
  Factor factor = Factor::U;
  Target target = Target::AcRag;
  std::map<std::string, std::optional<double>> per_retriever;
  std::optional<double> averaged;  // mean over retrievers; unset if any is undefined
  std::size_t n = 0;               // groups used (max over retrievers)
};

/// Spearman rho between two group vectors over the groups present in both.
inline std::optional<double> correlate(const GroupVector& x, const GroupVector& y, std::size_t* n_used = nullptr) {
  if (x.undefined || y.undefined) return std::nullopt;
  std::vector<double> xs, ys;
  for (std::size_t g = 0; g < x.values.size(); ++g) {
    if (x.values[g] && y.values[g]) {
      xs.push_back(*x.values[g]);
      ys.push_back(*y.values[g]);
    }
  }
  if (n_used) *n_used = xs.size();
  return spearman(xs, ys);
}

/// Six correlations (3 factors x 2 targets) per category, computed for each
/// retriever and averaged across retrievers. A cell with any undefined
/// per-retriever value is itself undefined.
inline std::vector<CorrelationStat> correlate_factors(std::span<const RetrieverVectors> retrievers,
                                                      std::span<const FairnessCategory> categories) {
  std::vector<CorrelationStat> out;
  for (const auto& c : categories) {
    for (auto f : {Factor::U, Factor::E, Factor::A}) {
      for (auto t : {Target::AcRag, Target::DeltaAc}) {
        CorrelationStat s{c.name, f, t, {}, std::nullopt, 0};
        text::CompensatedSum sum;
        bool all_defined = !retrievers.empty();
        for (const auto& r : retrievers) {
          auto it = r.categories.find(c.name);
          if (it == r.categories.end()) throw Error("no vectors for category '" + c.name + "' under retriever '" + r.retriever_id + "'");
          std::size_t n = 0;
          auto rho = correlate(it->second.factor(f), it->second.target(t), &n);
          s.n = std::max(s.n, n);
          s.per_retriever[r.retriever_id] = rho;
          if (rho) sum.add(*rho);
          else all_defined = false;
        }
        if (all_defined) s.averaged = sum.value() / static_cast<double>(retrievers.size());
        out.push_back(std::move(s));
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

struct RunMeta {
  std::string topic;
  std::string task;
  std::string generator_id;
  std::string attributor_id;
  std::vector<std::string> retriever_ids;
  std::size_t k = 10;
  std::uint64_t sample_seed = 0;
  std::string config_hash;
  std::string corpus_sha256;
  bool exclude_source_doc = false;
  RougeVariant rouge_variant = RougeVariant::F1;
};

struct RetrieverLedgers {
  std::string retriever_id;
  RankingMap rankings;
  std::vector<GenerationRecord> rag;
  std::vector<GenerationRecord> single_doc;
  std::vector<AttributionVerdict> verdicts;
  std::size_t attribution_absent = 0;
};

struct ReportInputs {
  RunMeta meta;
  const Corpus* corpus = nullptr;
  std::vector<QueryInstance> queries;
  std::vector<GenerationRecord> llm_only;
  std::vector<RetrieverLedgers> retrievers;
  std::vector<Failure> failures;
};

struct RetrieverAnalysis {
  std::string retriever_id;
  std::optional<double> overall_rag;
  RetrieverVectors vectors;
  std::map<std::string, std::vector<RangeStat>> ranges;  // category -> R_delta, R_rag
  std::size_t attribution_absent = 0;
  std::size_t attribution_truncated = 0;
  std::size_t doc_pairs = 0;
};

struct AuditReport {
  RunMeta meta;
  std::vector<FairnessCategory> categories;
  std::size_t queries_total = 0;
  std::vector<std::string> failed_queries;
  std::size_t queries_scored = 0;
  std::optional<double> overall_llm;
  std::map<std::string, GroupVector> ac_llm;  // category -> AC_llm
  std::map<std::string, RangeStat> r_llm;
  std::vector<RetrieverAnalysis> retrievers;
  std::vector<CorrelationStat> correlations;
  std::vector<Failure> failures;
};

namespace detail {

template <typename Records>
std::vector<GenerationRecord> keep_queries(const Records& records, const std::set<std::string>& ok) {
  std::vector<GenerationRecord> out;
  for (const auto& r : records)
    if (ok.contains(r.query_id)) out.push_back(r);
  return out;
}

inline std::optional<double> mean_accuracy(std::span<const GenerationRecord> records) {
  if (records.empty()) return std::nullopt;
  text::CompensatedSum s;
  for (const auto& r : records) s.add(r.accuracy.value_or(0.0));
  return s.value() / static_cast<double>(records.size());
}

}  // namespace detail

/// Computes every group-level quantity of the audit from the run ledgers.
/// Queries with any retrieval or generation failure are excluded from all
/// metrics and listed in the report.
inline AuditReport build_report(const ReportInputs& in) {
  if (!in.corpus) throw Error("build_report: corpus is required");
  const Corpus& corpus = *in.corpus;

  AuditReport rep;
  rep.meta = in.meta;
  rep.categories = corpus.categories();
  rep.queries_total = in.queries.size();
  rep.failures = in.failures;
  std::sort(rep.failures.begin(), rep.failures.end(), [](const Failure& a, const Failure& b) {
    return std::tie(a.query_id, a.stage, a.reason) < std::tie(b.query_id, b.stage, b.reason);
  });

  std::set<std::string> failed;
  for (const auto& f : in.failures)
    if (f.stage != "attribute") failed.insert(f.query_id);
  rep.failed_queries.assign(failed.begin(), failed.end());

  std::vector<QueryInstance> queries;
  std::set<std::string> ok;
  for (const auto& q : in.queries) {
    if (failed.contains(q.query_id)) continue;
    queries.push_back(q);
    ok.insert(q.query_id);
  }
  rep.queries_scored = queries.size();

  auto llm = detail::keep_queries(in.llm_only, ok);
  score_records(llm, queries, in.meta.rouge_variant);
  rep.overall_llm = detail::mean_accuracy(llm);
  for (const auto& c : rep.categories) {
    auto v = query_group_accuracy(llm, queries, c, SettingKind::LlmOnly);
    rep.r_llm.emplace(c.name, range_metric(v, RangeKind::Llm));
    rep.ac_llm.emplace(c.name, std::move(v));
  }

  std::vector<RetrieverVectors> all_vectors;
  for (const auto& led : in.retrievers) {
    RetrieverAnalysis ra;
    ra.retriever_id = led.retriever_id;
    ra.vectors.retriever_id = led.retriever_id;
    ra.attribution_absent = led.attribution_absent;

    auto rag = detail::keep_queries(led.rag, ok);
    auto single = detail::keep_queries(led.single_doc, ok);
    score_records(rag, queries, in.meta.rouge_variant);
    score_records(single, queries, in.meta.rouge_variant);
    ra.overall_rag = detail::mean_accuracy(rag);

    RankingMap rankings;
    std::vector<RankedList> lists;
    for (const auto& q : queries) {
      auto it = led.rankings.find(q.query_id);
      if (it == led.rankings.end()) throw Error("no ranked list for query '" + q.query_id + "' under " + led.retriever_id);
      rankings.emplace(q.query_id, it->second);
      lists.push_back(it->second);
    }
    std::vector<AttributionVerdict> verdicts;
    for (const auto& v : led.verdicts) {
      if (!ok.contains(v.query_id)) continue;
      verdicts.push_back(v);
      if (v.truncated) ++ra.attribution_truncated;
    }
    auto scores = build_doc_scores(queries, rankings, llm, single, verdicts);
    ra.doc_pairs = scores.size();

    for (const auto& c : rep.categories) {
      CategoryVectors cv;
      cv.ac_llm = rep.ac_llm.at(c.name);
      cv.ac_rag = query_group_accuracy(rag, queries, c, SettingKind::Rag, led.retriever_id);
      cv.delta = accuracy_improvements(cv.ac_rag, cv.ac_llm);
      auto u = group_utility(scores, corpus, c, queries.size());
      auto e = group_exposure(lists, corpus, c);
      auto a = group_attribution(verdicts, corpus, c, queries.size());
      cv.u_hat = std::move(u.hat);
      cv.u = std::move(u.normalized);
      cv.e_hat = std::move(e.hat);
      cv.e = std::move(e.normalized);
      cv.a_hat = std::move(a.hat);
      cv.a = std::move(a.normalized);
      ra.ranges[c.name] = {range_metric(cv.delta, RangeKind::Delta), range_metric(cv.ac_rag, RangeKind::Rag)};
      ra.vectors.categories.emplace(c.name, std::move(cv));
    }
    all_vectors.push_back(ra.vectors);
    rep.retrievers.push_back(std::move(ra));
  }
  rep.correlations = correlate_factors(all_vectors, rep.categories);
  return rep;
}

}  // namespace ragfair
