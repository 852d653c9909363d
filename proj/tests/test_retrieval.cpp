#include <cmath>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "ragfair/retrieval.hpp"
#include "support.hpp"

using namespace ragfair;

namespace {

InvertedIndex toy() { return InvertedIndex::build({{"d1", "cat"}, {"d2", "cat cat"}, {"d3", "dog"}}); }

}  // namespace

TEST(Index, Bookkeeping) {
  auto idx = InvertedIndex::build({{"a", "x y"}, {"b", "x"}, {"c", "x y z"}});
  EXPECT_EQ(idx.doc_count(), 3u);
  EXPECT_DOUBLE_EQ(idx.avg_doc_length(), 2.0);
  EXPECT_EQ(idx.doc_frequency("x"), 3u);
  EXPECT_EQ(idx.doc_frequency("absent"), 0u);
  EXPECT_TRUE(idx.postings("absent").empty());
}

TEST(Index, TokenizerContract) {
  auto idx = InvertedIndex::build({{"d", "Cat cat!"}});
  EXPECT_EQ(idx.term_frequency("cat", "d"), 2u);
}

TEST(Index, EmptyAndDuplicateInputsRejected) {
  EXPECT_THROW(InvertedIndex::build(std::vector<std::pair<std::string, std::string>>{}), Error);
  EXPECT_THROW(InvertedIndex::build(std::vector<std::pair<std::string, std::string>>{{"a", "x"}, {"a", "y"}}), Error);
}

TEST(Index, JsonRoundTripPreservesScores) {
  testsupport::ScratchDir dir("idx");
  auto idx = toy();
  idx.save(dir / "i.json");
  auto back = InvertedIndex::load(dir / "i.json");
  auto a = bm25_retrieve(idx, "cat dog", 10), b = bm25_retrieve(back, "cat dog", 10);
  EXPECT_EQ(a.entries, b.entries);
}

TEST(Bm25, ToyCaseByHand) {
  auto r = bm25_retrieve(toy(), "cat", 10);
  ASSERT_EQ(r.entries.size(), 2u);
  EXPECT_EQ(r.entries[0].doc_id, "d2");
  EXPECT_EQ(r.entries[1].doc_id, "d1");
  // idf = ln(1 + 1.5/2.5); d1 has tf 1 and length 3/4 of the average.
  const double expect = std::log(1.6) * 2.2 / (1.0 + 1.2 * (0.25 + 0.75 * 0.75));
  EXPECT_NEAR(r.entries[1].score, expect, 1e-12);
  EXPECT_NEAR(r.entries[1].score, 0.5235, 1e-3);
}

TEST(Bm25, AbsentTermGivesEmptyList) { EXPECT_TRUE(bm25_retrieve(toy(), "zebra", 10).entries.empty()); }

TEST(Bm25, TiesBreakByDocId) {
  auto idx = InvertedIndex::build({{"b", "same text"}, {"a", "same text"}, {"c", "other"}});
  auto r = bm25_retrieve(idx, "same", 10);
  ASSERT_EQ(r.entries.size(), 2u);
  EXPECT_EQ(r.entries[0].doc_id, "a");
  EXPECT_EQ(r.entries[1].doc_id, "b");
}

TEST(Bm25, RepeatedQueryTermCountsOnce) {
  auto idx = toy();
  EXPECT_EQ(bm25_retrieve(idx, "cat", 10).entries, bm25_retrieve(idx, "cat cat CAT", 10).entries);
}

TEST(Bm25, TruncatesToK) {
  std::vector<std::pair<std::string, std::string>> docs;
  for (int i = 0; i < 30; ++i) docs.emplace_back("d" + std::to_string(i), "alpha beta " + std::to_string(i));
  auto r = bm25_retrieve(InvertedIndex::build(docs), "alpha", 10);
  EXPECT_EQ(r.entries.size(), 10u);
  EXPECT_EQ(r.k, 10u);
}

TEST(Bm25, IdfDecreasesWithDocumentFrequency) {
  for (std::size_t n : {5u, 50u, 500u})
    for (std::size_t df = 1; df < n; ++df) EXPECT_GT(bm25_idf(n, df), bm25_idf(n, df + 1));
  EXPECT_GT(bm25_idf(10, 10), 0.0);
}

TEST(Bm25, MatchesDirectFormulaOnRandomCorpora) {
  Rng rng(77);
  for (int c = 0; c < 20; ++c) {
    std::vector<oracle::Doc> docs;
    std::vector<std::pair<std::string, std::string>> input;
    const auto n = 1 + uniform_index(rng, 25);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<std::string> toks;
      std::string s;
      for (std::size_t t = 0, len = 1 + uniform_index(rng, 12); t < len; ++t) {
        toks.push_back("t" + std::to_string(uniform_index(rng, 12)));
        s += toks.back() + " ";
      }
      docs.emplace_back("doc" + std::to_string(i), toks);
      input.emplace_back(docs.back().first, s);
    }
    auto idx = InvertedIndex::build(input);
    std::vector<std::string> q{"t" + std::to_string(uniform_index(rng, 14)), "t" + std::to_string(uniform_index(rng, 14))};
    auto got = bm25_retrieve(idx, q[0] + " " + q[1], 5);
    auto want = oracle::bm25(docs, q, 5);
    ASSERT_EQ(got.entries.size(), want.size());
    for (std::size_t i = 0; i < want.size(); ++i) {
      EXPECT_EQ(got.entries[i].doc_id, want[i].first);
      EXPECT_NEAR(got.entries[i].score, want[i].second, 1e-9);
    }
  }
}

TEST(Canonicalize, SortsDedupesTruncates) {
  std::vector<RankedEntry> e{{"b", 1.0}, {"a", 2.0}, {"b", 0.5}, {"c", 1.0}};
  canonicalize(e, 2);
  EXPECT_EQ(e, (std::vector<RankedEntry>{{"a", 2.0}, {"b", 1.0}}));
}

TEST(RetrieveFor, ExcludesSourceDocument) {
  auto idx = std::make_shared<const InvertedIndex>(
      InvertedIndex::build({{"src", "apple pie"}, {"o1", "apple tart"}, {"o2", "apple cake"}, {"o3", "pear"}}));
  Bm25Retriever r(idx);
  QueryInstance q;
  q.query_id = "q";
  q.query_text = "apple pie";
  q.source_doc_id = "src";
  auto with = retrieve_for(r, q, 2, false);
  EXPECT_EQ(with.entries[0].doc_id, "src");
  auto without = retrieve_for(r, q, 2, true);
  ASSERT_EQ(without.entries.size(), 2u);
  for (const auto& e : without.entries) EXPECT_NE(e.doc_id, "src");
}

TEST(RankedListJson, RoundTrip) {
  RankedList r{"q", "bm25", 3, {{"a", 1.5}, {"b", 0.25}}};
  auto back = ranked_list_from_json(ranked_list_to_json(r));
  EXPECT_EQ(back.entries, r.entries);
  EXPECT_EQ(back.k, 3u);
  EXPECT_THROW(ranked_list_from_json(json{{"query_id", "q"}}), ParseError);
}
