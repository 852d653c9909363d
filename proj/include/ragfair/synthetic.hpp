#pragma once

// Deterministic synthetic corpora for desk-scale audits and controlled-bias
// regression tests.
//
// Documents are grouped into "subjects". All documents of a subject share
// the same title and draw their bodies from the subject's answer sequence.
// The answer strength of a document (0..1) sets the fraction of body
// positions taken from that sequence (the rest is shared noise) and how often
// the title words are repeated in the body. Assigning different strengths to
// the groups of one category biases retrieval, utility and attribution
// toward the stronger groups.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "corpus.hpp"
#include "error.hpp"
#include "random.hpp"

namespace ragfair::synth {

struct CategorySpec {
  std::string name;
  std::vector<std::string> groups;
  std::vector<double> weights;  // empty = balanced
};

struct BiasSpec {
  std::string category;
  std::map<std::string, double> strength;  // group -> answer strength in [0, 1]
};

struct CorpusSpec {
  std::size_t num_docs = 200;
  std::uint64_t seed = 0;
  std::string topic = "Synthetic";
  std::size_t num_subjects = 8;
  std::size_t body_words = 40;
  std::size_t noise_vocab = 400;
  double default_strength = 0.5;
  std::vector<CategorySpec> categories;
  std::optional<BiasSpec> bias;
};

inline CorpusSpec spec_from_json(const json& j) {
  static const std::set<std::string> kKeys = {"num_docs",   "seed",        "topic",            "num_subjects",
                                              "body_words", "noise_vocab", "default_strength", "categories",
                                              "bias"};
  try {
    for (const auto& [k, _] : j.items())
      if (!kKeys.contains(k)) throw ConfigError("unknown synthetic spec key '" + k + "'");
    CorpusSpec s;
    s.num_docs = j.value("num_docs", s.num_docs);
    s.seed = j.value("seed", s.seed);
    s.topic = j.value("topic", s.topic);
    s.num_subjects = j.value("num_subjects", s.num_subjects);
    s.body_words = j.value("body_words", s.body_words);
    s.noise_vocab = j.value("noise_vocab", s.noise_vocab);
    s.default_strength = j.value("default_strength", s.default_strength);
    for (const auto& c : j.at("categories")) {
      CategorySpec cs;
      cs.name = c.at("name").get<std::string>();
      cs.groups = c.at("groups").get<std::vector<std::string>>();
      if (c.contains("weights")) cs.weights = c["weights"].get<std::vector<double>>();
      s.categories.push_back(std::move(cs));
    }
    if (j.contains("bias")) {
      BiasSpec b;
      b.category = j["bias"].at("category").get<std::string>();
      b.strength = j["bias"].at("strength").get<std::map<std::string, double>>();
      s.bias = std::move(b);
    }
    return s;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed synthetic corpus spec: ") + e.what());
  }
}

inline std::vector<FairnessCategory> spec_categories(const CorpusSpec& s) {
  std::vector<FairnessCategory> out;
  for (const auto& c : s.categories) out.push_back({c.name, c.groups});
  return out;
}

/// Pronounceable pseudo-word for index n; distinct n give distinct words.
inline std::string pseudo_word(std::size_t n) {
  static const char* kSyl[] = {"ka", "lo", "mi", "ne", "ru", "ta", "vo", "shi", "den", "gar", "bel", "tor",
                               "pa", "su", "fi", "zu"};
  std::string w;
  for (int i = 0; i < 4; ++i) {
    w += kSyl[n % 16];
    n /= 16;
  }
  return w;
}

namespace detail {

/// Largest-remainder quotas for `weights` summing to `total`.
inline std::vector<std::size_t> quotas(const std::vector<double>& weights, std::size_t total) {
  double sum = 0;
  for (double w : weights) sum += w;
  std::vector<std::size_t> q(weights.size());
  std::vector<std::pair<double, std::size_t>> rema;
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double exact = weights[i] / sum * static_cast<double>(total);
    q[i] = static_cast<std::size_t>(std::floor(exact));
    assigned += q[i];
    rema.emplace_back(exact - std::floor(exact), i);
  }
  std::stable_sort(rema.begin(), rema.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < total; ++i, ++assigned) ++q[rema[i % rema.size()].second];
  return q;
}

inline std::string capitalize(std::string w) {
  if (!w.empty() && w[0] >= 'a' && w[0] <= 'z') w[0] = static_cast<char>(w[0] - 'a' + 'A');
  return w;
}

}  // namespace detail

/// Validates the spec; throws ConfigError when it cannot be realized.
inline void validate_spec(const CorpusSpec& s) {
  if (s.categories.empty()) throw ConfigError("synthetic spec needs at least one category");
  std::size_t cells = 1;
  for (const auto& c : s.categories) {
    validate_category({c.name, c.groups});
    if (!c.weights.empty()) {
      if (c.weights.size() != c.groups.size()) throw ConfigError("category '" + c.name + "': one weight per group required");
      double sum = 0;
      for (double w : c.weights) {
        if (!(w >= 0)) throw ConfigError("category '" + c.name + "': weights must be non-negative");
        sum += w;
      }
      if (!(sum > 0)) throw ConfigError("category '" + c.name + "': weights sum to zero");
    }
    cells *= c.groups.size();
  }
  const bool balanced = std::all_of(s.categories.begin(), s.categories.end(), [](const auto& c) { return c.weights.empty(); });
  if (balanced && s.num_docs < cells) {
    throw ConfigError("synthetic spec infeasible: " + std::to_string(s.num_docs) + " documents cannot cover " +
                      std::to_string(cells) + " group combinations");
  }
  if (s.num_docs == 0) throw ConfigError("synthetic spec needs num_docs > 0");
  if (s.num_subjects == 0 || s.body_words == 0 || s.noise_vocab == 0) {
    throw ConfigError("num_subjects, body_words and noise_vocab must be positive");
  }
  if (s.default_strength < 0 || s.default_strength > 1) throw ConfigError("default_strength must lie in [0, 1]");
  if (s.bias) {
    auto it = std::find_if(s.categories.begin(), s.categories.end(), [&](const auto& c) { return c.name == s.bias->category; });
    if (it == s.categories.end()) throw ConfigError("bias category '" + s.bias->category + "' is not declared");
    for (const auto& [g, v] : s.bias->strength) {
      if (std::find(it->groups.begin(), it->groups.end(), g) == it->groups.end()) {
        throw ConfigError("bias group '" + g + "' not in category '" + it->name + "'");
      }
      if (v < 0 || v > 1) throw ConfigError("bias strength for '" + g + "' must lie in [0, 1]");
    }
  }
}

inline std::vector<Document> generate_corpus(const CorpusSpec& s) {
  validate_spec(s);
  Rng rng(s.seed);
  const std::size_t n = s.num_docs;

  // Group assignment per category.
  std::vector<std::vector<std::size_t>> assign(s.categories.size(), std::vector<std::size_t>(n));
  const bool balanced = std::all_of(s.categories.begin(), s.categories.end(), [](const auto& c) { return c.weights.empty(); });
  if (balanced) {
    // Round-robin over the cartesian product: exact balance when divisible.
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t cell = i;
      for (std::size_t c = s.categories.size(); c-- > 0;) {
        const auto m = s.categories[c].groups.size();
        assign[c][i] = cell % m;
        cell /= m;
      }
    }
  } else {
    for (std::size_t c = 0; c < s.categories.size(); ++c) {
      const auto& cat = s.categories[c];
      auto w = cat.weights.empty() ? std::vector<double>(cat.groups.size(), 1.0) : cat.weights;
      auto q = detail::quotas(w, n);
      std::vector<std::size_t> pool;
      for (std::size_t g = 0; g < q.size(); ++g) pool.insert(pool.end(), q[g], g);
      shuffle(pool, rng);
      assign[c] = std::move(pool);
    }
  }

  std::size_t cells = 1;
  for (const auto& c : s.categories) cells *= c.groups.size();

  // Vocabulary layout: [noise | subject answers | subject titles].
  const std::size_t answer_base = s.noise_vocab;
  const std::size_t title_base = answer_base + s.num_subjects * s.body_words;
  auto answer_word = [&](std::size_t subj, std::size_t j) { return pseudo_word(answer_base + subj * s.body_words + j); };

  std::optional<std::size_t> bias_cat;
  for (std::size_t c = 0; c < s.categories.size(); ++c)
    if (s.bias && s.categories[c].name == s.bias->category) bias_cat = c;

  std::vector<Document> docs;
  docs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Document d;
    char id[32];
    std::snprintf(id, sizeof id, "syn%05zu", i);
    d.doc_id = id;
    d.topic = s.topic;
    const std::size_t subj = (i / cells) % s.num_subjects;
    const std::string t1 = pseudo_word(title_base + 2 * subj), t2 = pseudo_word(title_base + 2 * subj + 1);
    d.title = detail::capitalize(t1) + " " + detail::capitalize(t2);
    for (std::size_t c = 0; c < s.categories.size(); ++c) {
      d.labels[s.categories[c].name] = s.categories[c].groups[assign[c][i]];
    }
    double strength = s.default_strength;
    if (bias_cat) {
      const auto& g = s.categories[*bias_cat].groups[assign[*bias_cat][i]];
      if (auto it = s.bias->strength.find(g); it != s.bias->strength.end()) strength = it->second;
    }
    std::string body;
    auto put = [&](const std::string& w) {
      if (!body.empty()) body.push_back(' ');
      body += w;
    };
    const auto reps = static_cast<std::size_t>(std::lround(strength * 3.0));
    for (std::size_t r = 0; r < reps; ++r) {
      put(t1);
      put(t2);
    }
    for (std::size_t j = 0; j < s.body_words; ++j) {
      if (uniform_real(rng) < strength) {
        put(answer_word(subj, j));
      } else {
        put(pseudo_word(uniform_index(rng, s.noise_vocab)));
      }
    }
    d.body = body + ".";
    d.word_count = text::word_count(d.body);
    docs.push_back(std::move(d));
  }
  return docs;
}

}  // namespace ragfair::synth
