#include <gtest/gtest.h>

#include "ragfair/synthetic.hpp"
#include "support.hpp"

using namespace ragfair;

namespace {

synth::CorpusSpec two_by_two(std::size_t n = 200) {
  synth::CorpusSpec s;
  s.num_docs = n;
  s.seed = 3;
  s.categories = {{"A", {"a1", "a2"}, {}}, {"B", {"b1", "b2"}, {}}};
  return s;
}

}  // namespace

TEST(Synthetic, BalancedPartition) {
  auto docs = synth::generate_corpus(two_by_two());
  ASSERT_EQ(docs.size(), 200u);
  std::map<std::pair<std::string, std::string>, int> cells;
  for (const auto& d : docs) cells[{d.labels.at("A"), d.labels.at("B")}]++;
  ASSERT_EQ(cells.size(), 4u);
  for (const auto& [_, n] : cells) EXPECT_EQ(n, 50);
}

TEST(Synthetic, SameSeedSameBytes) {
  auto a = io::to_jsonl(synth::generate_corpus(two_by_two()), document_to_json);
  auto b = io::to_jsonl(synth::generate_corpus(two_by_two()), document_to_json);
  EXPECT_EQ(a, b);
  auto other = two_by_two();
  other.seed = 4;
  EXPECT_NE(a, io::to_jsonl(synth::generate_corpus(other), document_to_json));
}

TEST(Synthetic, InfeasibleSpecsRejected) {
  EXPECT_THROW(synth::generate_corpus(two_by_two(3)), ConfigError);
  auto s = two_by_two();
  s.categories[0].weights = {1.0};
  EXPECT_THROW(synth::validate_spec(s), ConfigError);
  s = two_by_two();
  s.bias = synth::BiasSpec{"Nope", {}};
  EXPECT_THROW(synth::validate_spec(s), ConfigError);
  s.bias = synth::BiasSpec{"A", {{"zz", 0.5}}};
  EXPECT_THROW(synth::validate_spec(s), ConfigError);
  s.bias = synth::BiasSpec{"A", {{"a1", 1.5}}};
  EXPECT_THROW(synth::validate_spec(s), ConfigError);
  EXPECT_THROW(synth::spec_from_json(json{{"categories", json::array()}, {"bogus", 1}}), ConfigError);
}

TEST(Synthetic, WeightedProportions) {
  auto s = two_by_two(100);
  s.categories[0].weights = {3.0, 1.0};
  auto docs = synth::generate_corpus(s);
  std::size_t a1 = 0;
  for (const auto& d : docs) a1 += d.labels.at("A") == "a1";
  EXPECT_EQ(a1, 75u);
}

TEST(Synthetic, StrongGroupsCarryAnswerVocabulary) {
  auto s = two_by_two();
  s.bias = synth::BiasSpec{"A", {{"a1", 1.0}, {"a2", 0.0}}};
  auto docs = synth::generate_corpus(s);
  // Documents of the same subject share their title; a1 bodies repeat it and
  // share one answer sequence, a2 bodies are pure noise.
  std::map<std::string, std::vector<const Document*>> by_title;
  for (const auto& d : docs) by_title[d.title].push_back(&d);
  EXPECT_EQ(by_title.size(), s.num_subjects);
  for (const auto& [title, group] : by_title) {
    const Document* strong = nullptr;
    for (const auto* d : group) {
      auto first_title_word = text::tokenize(title).front();
      const auto toks = text::tokenize(d->body);
      const bool mentions = std::find(toks.begin(), toks.end(), first_title_word) != toks.end();
      EXPECT_EQ(mentions, d->labels.at("A") == "a1") << d->doc_id;
      if (d->labels.at("A") == "a1") {
        if (strong) EXPECT_EQ(strong->body, d->body);
        strong = d;
      }
    }
  }
}

TEST(Synthetic, ShippedSpecsAreValid) {
  for (const char* name : {"synth_balanced.json", "synth_biased.json"}) {
    auto spec = testsupport::load_spec(name);
    EXPECT_NO_THROW(synth::validate_spec(spec)) << name;
  }
}
