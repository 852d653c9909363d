#pragma once

// Corpus ingestion, filtering, topic selection and representative sampling.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "error.hpp"
#include "io.hpp"
#include "random.hpp"
#include "text.hpp"

namespace ragfair {

using json = nlohmann::json;

enum class Task { ArticleGeneration, TitleGeneration };

inline std::string_view to_string(Task t) {
  return t == Task::ArticleGeneration ? "article" : "title";
}

inline Task parse_task(std::string_view s) {
  if (s == "article" || s == "ArticleGeneration" || s == "article_generation") return Task::ArticleGeneration;
  if (s == "title" || s == "TitleGeneration" || s == "title_generation") return Task::TitleGeneration;
  throw ConfigError("unknown task '" + std::string(s) + "' (expected article|title)");
}

// ---------------------------------------------------------------------------
// Fairness categories
// ---------------------------------------------------------------------------

struct FairnessCategory {
  std::string name;
  std::vector<std::string> groups;

  bool has_group(std::string_view g) const {
    return std::find(groups.begin(), groups.end(), g) != groups.end();
  }
  std::optional<std::size_t> group_index(std::string_view g) const {
    auto it = std::find(groups.begin(), groups.end(), g);
    if (it == groups.end()) return std::nullopt;
    return static_cast<std::size_t>(it - groups.begin());
  }

  friend bool operator==(const FairnessCategory&, const FairnessCategory&) = default;
};

inline void validate_category(const FairnessCategory& c) {
  if (c.name.empty()) throw ConfigError("fairness category with empty name");
  if (c.groups.size() < 2) throw ConfigError("category '" + c.name + "' needs at least 2 groups");
  std::set<std::string_view> seen;
  for (const auto& g : c.groups) {
    if (g.empty()) throw ConfigError("category '" + c.name + "' has an empty group identifier");
    if (!seen.insert(g).second) throw ConfigError("category '" + c.name + "' repeats group '" + g + "'");
  }
}

/// Age of the Topic, Popularity, Age of the Article, Alphabetical.
inline std::vector<FairnessCategory> default_categories() {
  return {
      {"AoT", {"Unk", "Pre-1900s", "20th century", "21st century"}},
      {"Pop", {"Low", "Medium-Low", "Medium-High", "High"}},
      {"AoA", {"2001–2006", "2007–2011", "2012–2016", "2017–2022"}},
      {"Alp", {"a–d", "e–k", "l–r", "s–z"}},
  };
}

inline json categories_to_json(std::span<const FairnessCategory> cats) {
  json out = json::array();
  for (const auto& c : cats) out.push_back({{"name", c.name}, {"groups", c.groups}});
  return out;
}

inline std::vector<FairnessCategory> categories_from_json(const json& j) {
  if (!j.is_array()) throw ConfigError("category configuration must be a JSON list");
  std::vector<FairnessCategory> out;
  std::set<std::string> names;
  for (const auto& item : j) {
    if (!item.is_object() || !item.contains("name") || !item.contains("groups") || !item["name"].is_string() ||
        !item["groups"].is_array()) {
      throw ConfigError("category entries need a string 'name' and a 'groups' list");
    }
    FairnessCategory c;
    c.name = item["name"].get<std::string>();
    for (const auto& g : item["groups"]) {
      if (!g.is_string()) throw ConfigError("category '" + c.name + "': group identifiers must be strings");
      c.groups.push_back(g.get<std::string>());
    }
    validate_category(c);
    if (!names.insert(c.name).second) throw ConfigError("duplicate category '" + c.name + "'");
    out.push_back(std::move(c));
  }
  if (out.empty()) throw ConfigError("category configuration is empty");
  return out;
}

inline std::vector<FairnessCategory> load_categories(const std::filesystem::path& path) {
  return categories_from_json(io::read_json(path));
}

// ---------------------------------------------------------------------------
// Documents and queries
// ---------------------------------------------------------------------------

using LabelMap = std::map<std::string, std::string>;

struct Document {
  std::string doc_id;
  std::string title;
  std::string body;
  std::string topic;
  LabelMap labels;
  std::size_t word_count = 0;

  const std::string* label(std::string_view category) const {
    auto it = labels.find(std::string(category));
    return it == labels.end() ? nullptr : &it->second;
  }
};

inline json document_to_json(const Document& d) {
  return {{"id", d.doc_id}, {"title", d.title}, {"body", d.body}, {"topic", d.topic}, {"labels", d.labels}};
}

/// Parses one corpus record. Throws ParseError (without a line number).
inline Document document_from_json(const json& j) {
  if (!j.is_object()) throw ParseError("record is not a JSON object");
  auto str_field = [&](const char* key) -> std::string {
    auto it = j.find(key);
    if (it == j.end()) throw ParseError(std::string("missing required field '") + key + "'");
    if (!it->is_string()) throw ParseError(std::string("field '") + key + "' must be a string");
    return it->get<std::string>();
  };
  Document d;
  d.doc_id = str_field("id");
  d.title = str_field("title");
  d.body = str_field("body");
  d.topic = str_field("topic");
  auto lit = j.find("labels");
  if (lit == j.end()) throw ParseError("missing required field 'labels'");
  if (!lit->is_object()) throw ParseError("field 'labels' must be an object");
  for (const auto& [k, v] : lit->items()) {
    if (!v.is_string()) throw ParseError("label '" + k + "' must be a string");
    d.labels.emplace(k, v.get<std::string>());
  }
  if (d.doc_id.empty()) throw ParseError("field 'id' is empty");
  d.word_count = text::word_count(d.body);
  return d;
}

struct QueryInstance {
  std::string query_id;
  Task task = Task::ArticleGeneration;
  std::string query_text;
  std::string ground_truth;
  std::string source_doc_id;
  LabelMap labels;

  const std::string* label(std::string_view category) const {
    auto it = labels.find(std::string(category));
    return it == labels.end() ? nullptr : &it->second;
  }
};

inline json query_to_json(const QueryInstance& q) {
  return {{"query_id", q.query_id},         {"task", to_string(q.task)},
          {"query_text", q.query_text},     {"ground_truth", q.ground_truth},
          {"source_doc_id", q.source_doc_id}, {"labels", q.labels}};
}

inline QueryInstance query_from_json(const json& j) {
  try {
    QueryInstance q;
    q.query_id = j.at("query_id").get<std::string>();
    q.task = parse_task(j.at("task").get<std::string>());
    q.query_text = j.at("query_text").get<std::string>();
    q.ground_truth = j.at("ground_truth").get<std::string>();
    q.source_doc_id = j.at("source_doc_id").get<std::string>();
    q.labels = j.at("labels").get<LabelMap>();
    return q;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed query record: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Corpus
// ---------------------------------------------------------------------------

/// Immutable collection of documents plus the category configuration they
/// are labelled against.
class Corpus {
 public:
  Corpus() = default;

  Corpus(std::vector<Document> docs, std::vector<FairnessCategory> categories)
      : docs_(std::move(docs)), categories_(std::move(categories)) {
    by_id_.reserve(docs_.size());
    for (std::size_t i = 0; i < docs_.size(); ++i) {
      if (!by_id_.emplace(docs_[i].doc_id, i).second) {
        throw Error("duplicate doc_id '" + docs_[i].doc_id + "'");
      }
      ++topic_counts_[docs_[i].topic];
    }
  }

  const std::vector<Document>& documents() const noexcept { return docs_; }
  const std::vector<FairnessCategory>& categories() const noexcept { return categories_; }
  const std::map<std::string, std::size_t>& topic_counts() const noexcept { return topic_counts_; }
  std::size_t size() const noexcept { return docs_.size(); }
  bool empty() const noexcept { return docs_.empty(); }

  const Document* find(std::string_view doc_id) const {
    auto it = by_id_.find(std::string(doc_id));
    return it == by_id_.end() ? nullptr : &docs_[it->second];
  }

  const Document& at(std::string_view doc_id) const {
    if (const auto* d = find(doc_id)) return *d;
    throw Error("unknown doc_id '" + std::string(doc_id) + "'");
  }

  const FairnessCategory* category(std::string_view name) const {
    for (const auto& c : categories_)
      if (c.name == name) return &c;
    return nullptr;
  }

  /// Documents of one topic, in corpus order.
  Corpus topic_subset(std::string_view topic) const {
    std::vector<Document> out;
    for (const auto& d : docs_)
      if (d.topic == topic) out.push_back(d);
    return Corpus(std::move(out), categories_);
  }

 private:
  std::vector<Document> docs_;
  std::vector<FairnessCategory> categories_;
  std::unordered_map<std::string, std::size_t> by_id_;
  std::map<std::string, std::size_t> topic_counts_;
};

enum class ParseMode { Strict, Lenient };

struct LoadReport {
  std::size_t lines_read = 0;
  std::vector<std::size_t> skipped_lines;
};

/// Reads a line-delimited corpus. Strict mode throws on the first bad line;
/// lenient mode skips it and records the line number in `report`.
inline Corpus parse_corpus(std::istream& in, std::vector<FairnessCategory> categories,
                           ParseMode mode, LoadReport& report) {
  std::vector<Document> docs;
  std::set<std::string> ids;
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ++report.lines_read;
    try {
      json j;
      try {
        j = json::parse(line);
      } catch (const json::parse_error& e) {
        throw ParseError(std::string("invalid JSON: ") + e.what());
      }
      Document d = document_from_json(j);
      if (!ids.insert(d.doc_id).second) throw ParseError("duplicate id '" + d.doc_id + "'");
      docs.push_back(std::move(d));
    } catch (const ParseError& e) {
      if (mode == ParseMode::Strict) throw ParseError(e.what(), no);
      report.skipped_lines.push_back(no);
    }
  }
  if (!report.skipped_lines.empty()) {
    spdlog::warn("skipped {} malformed corpus line(s)", report.skipped_lines.size());
  }
  return Corpus(std::move(docs), std::move(categories));
}

inline Corpus load_corpus(const std::filesystem::path& path, std::vector<FairnessCategory> categories,
                          ParseMode mode, LoadReport& report) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read corpus file " + path.string());
  return parse_corpus(in, std::move(categories), mode, report);
}

inline Corpus load_corpus(const std::filesystem::path& path, std::vector<FairnessCategory> categories,
                          ParseMode mode = ParseMode::Strict) {
  LoadReport report;
  return load_corpus(path, std::move(categories), mode, report);
}

inline std::string corpus_to_jsonl(const Corpus& c) {
  return io::to_jsonl(c.documents(), document_to_json);
}

/// True when `d` carries exactly one valid group for every category.
inline bool has_valid_labels(const Document& d, std::span<const FairnessCategory> categories) {
  for (const auto& c : categories) {
    const auto* g = d.label(c.name);
    if (!g || !c.has_group(*g)) return false;
  }
  return true;
}

/// Drops documents longer than `max_words` whitespace tokens and documents
/// lacking a valid label for any configured category. Order is preserved.
inline Corpus filter_documents(const Corpus& corpus, std::size_t max_words = 512) {
  std::vector<Document> kept;
  for (const auto& d : corpus.documents()) {
    if (d.word_count > max_words) continue;
    if (!has_valid_labels(d, corpus.categories())) continue;
    kept.push_back(d);
  }
  return Corpus(std::move(kept), corpus.categories());
}

/// The `n` largest topics by document count; ties go to the lexicographically
/// smaller name.
inline std::vector<std::string> select_topics(const Corpus& corpus, std::size_t n = 3) {
  std::vector<std::pair<std::string, std::size_t>> counts(corpus.topic_counts().begin(),
                                                          corpus.topic_counts().end());
  std::sort(counts.begin(), counts.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  if (counts.size() < n) {
    spdlog::warn("requested {} topics but corpus only has {}", n, counts.size());
  }
  std::vector<std::string> out;
  for (std::size_t i = 0; i < std::min(n, counts.size()); ++i) out.push_back(counts[i].first);
  return out;
}

/// Enumerates the cartesian product of the categories' groups in row-major
/// order (last category varies fastest). Each cell holds one group index per
/// category.
inline std::vector<std::vector<std::size_t>> cartesian_cells(std::span<const FairnessCategory> categories) {
  std::vector<std::vector<std::size_t>> cells{{}};
  for (const auto& c : categories) {
    std::vector<std::vector<std::size_t>> next;
    next.reserve(cells.size() * c.groups.size());
    for (const auto& cell : cells) {
      for (std::size_t g = 0; g < c.groups.size(); ++g) {
        auto ext = cell;
        ext.push_back(g);
        next.push_back(std::move(ext));
      }
    }
    cells = std::move(next);
  }
  return cells;
}

/// Picks one document per populated cell of the group cartesian product,
/// uniformly at random under `seed`. Output follows cell order.
inline std::vector<Document> sample_representatives(const Corpus& corpus, std::string_view topic,
                                                    std::span<const FairnessCategory> categories,
                                                    std::uint64_t seed) {
  if (categories.empty()) throw ConfigError("sample_representatives needs at least one category");
  if (!corpus.topic_counts().contains(std::string(topic))) {
    throw Error("unknown topic '" + std::string(topic) + "'");
  }

  // Bucket the topic's documents by cell, keyed by the mixed-radix cell index.
  std::map<std::size_t, std::vector<const Document*>> buckets;
  for (const auto& d : corpus.documents()) {
    if (d.topic != topic) continue;
    std::size_t cell = 0;
    bool ok = true;
    for (const auto& c : categories) {
      const auto* g = d.label(c.name);
      auto gi = g ? c.group_index(*g) : std::nullopt;
      if (!gi) {
        ok = false;
        break;
      }
      cell = cell * c.groups.size() + *gi;
    }
    if (ok) buckets[cell].push_back(&d);
  }

  Rng rng(seed);
  std::vector<Document> out;
  for (const auto& [cell, docs] : buckets) {
    out.push_back(*docs[uniform_index(rng, docs.size())]);
  }
  return out;
}

inline std::string make_query_id(std::string_view doc_id, Task task) {
  return std::string(doc_id) + "#" + std::string(to_string(task));
}

/// One query per representative. Article generation asks for the body given
/// the title; title generation the reverse.
inline std::vector<QueryInstance> build_queries(std::span<const Document> representatives, Task task) {
  std::vector<QueryInstance> out;
  out.reserve(representatives.size());
  for (const auto& d : representatives) {
    if (text::trim(d.title).empty() || text::trim(d.body).empty()) {
      spdlog::warn("skipping document '{}': empty title or body", d.doc_id);
      continue;
    }
    QueryInstance q;
    q.query_id = make_query_id(d.doc_id, task);
    q.task = task;
    q.source_doc_id = d.doc_id;
    q.labels = d.labels;
    if (task == Task::ArticleGeneration) {
      q.query_text = d.title;
      q.ground_truth = d.body;
    } else {
      q.query_text = d.body;
      q.ground_truth = d.title;
    }
    out.push_back(std::move(q));
  }
  return out;
}

}  // namespace ragfair
