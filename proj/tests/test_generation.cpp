#include <gtest/gtest.h>

#include "ragfair/generation.hpp"
#include "ragfair/metrics.hpp"
#include "support.hpp"

using namespace ragfair;

namespace {

Document doc(std::string id, std::string title, std::string body) {
  Document d;
  d.doc_id = std::move(id);
  d.title = std::move(title);
  d.body = std::move(body);
  d.topic = "P";
  d.labels = {{"A", "a1"}};
  d.word_count = text::word_count(d.body);
  return d;
}

QueryInstance query(const Document& d, Task t) {
  std::vector<Document> v{d};
  return build_queries(v, t).at(0);
}

/// Fails every call whose prompt contains `poison`.
class FlakyGenerator final : public Generator {
 public:
  explicit FlakyGenerator(std::string poison) : poison_(std::move(poison)) {}
  std::string id() const override { return "flaky"; }
  std::string complete(const PromptSpec& p, const DecodingParams&) override {
    if (p.rendered.find(poison_) != std::string::npos) throw ServiceError("generator down");
    return mock_generate(p);
  }

 private:
  std::string poison_;
};

}  // namespace

TEST(Prompt, ArticleTemplateBytes) {
  std::vector<ContextPair> pairs{{"T1", "A1"}, {"T2", "A2"}};
  EXPECT_EQ(render_prompt(Task::ArticleGeneration, pairs, "Q"),
            "Title: T1\nArticle: A1\nTitle: T2\nArticle: A2\n"
            "Following the given pattern, generate an article for the following title:\nTitle: Q\nArticle:");
}

TEST(Prompt, TitleTemplateBytes) {
  std::vector<ContextPair> pairs{{"T1", "A1"}};
  EXPECT_EQ(render_prompt(Task::TitleGeneration, pairs, "Body"),
            "Article: A1\nTitle: T1\n"
            "Following the given pattern, generate a title for the following article:\nArticle: Body\nTitle:");
}

TEST(Prompt, LlmOnlyHasNoContext) {
  EXPECT_EQ(render_prompt(Task::ArticleGeneration, {}, "Q"),
            "Following the given pattern, generate an article for the following title:\nTitle: Q\nArticle:");
}

TEST(Prompt, ContextFollowsRankOrder) {
  auto d1 = doc("d1", "First", "one"), d2 = doc("d2", "Second", "two");
  auto q = query(doc("s", "Src", "body"), Task::ArticleGeneration);
  std::vector<const Document*> ctx{&d2, &d1};
  auto p = build_prompt(q, std::span<const Document* const>(ctx), Task::ArticleGeneration);
  EXPECT_LT(p.rendered.find("Second"), p.rendered.find("First"));
  EXPECT_EQ(p.context_pairs.size(), 2u);
}

TEST(Decoding, TaskDefaults) {
  EXPECT_EQ(DecodingParams::defaults_for(Task::ArticleGeneration), (DecodingParams{2, 512}));
  EXPECT_EQ(DecodingParams::defaults_for(Task::TitleGeneration), (DecodingParams{4, 16}));
}

TEST(Mock, CopiesFirstContextAnswerOrEchoesTarget) {
  auto src = doc("s", "Source Title", "one two three four five six seven");
  auto ctx = doc("c", "Ctx Title", "ctx body");
  auto qa = query(src, Task::ArticleGeneration);
  std::vector<Document> context{ctx};
  EXPECT_EQ(mock_generate(build_prompt(qa, context, Task::ArticleGeneration)), "ctx body");
  EXPECT_EQ(mock_generate(build_prompt(qa, std::span<const Document>{}, Task::ArticleGeneration)), "Source Title");
  auto qt = query(src, Task::TitleGeneration);
  EXPECT_EQ(mock_generate(build_prompt(qt, context, Task::TitleGeneration)), "Ctx Title");
  EXPECT_EQ(mock_generate(build_prompt(qt, std::span<const Document>{}, Task::TitleGeneration)), "one two three four five");
}

TEST(Normalize, TrimsAndCutsContinuation) {
  EXPECT_EQ(normalize_output("  Answer text \nTitle: next"), "Answer text");
  EXPECT_EQ(normalize_output("x\nArticle: y\nTitle: z"), "x");
  EXPECT_EQ(normalize_output("Title: inline stays"), "Title: inline stays");
}

TEST(Cache, KeyDependsOnEveryInput) {
  const DecodingParams d{2, 512};
  const auto k = GenerationCache::make_key("g", "p", d);
  EXPECT_EQ(k, GenerationCache::make_key("g", "p", d));
  EXPECT_NE(k, GenerationCache::make_key("h", "p", d));
  EXPECT_NE(k, GenerationCache::make_key("g", "q", d));
  EXPECT_NE(k, GenerationCache::make_key("g", "p", {4, 512}));
  EXPECT_NE(k, GenerationCache::make_key("g", "p", {2, 16}));
}

TEST(Cache, RejectsDuplicateKeysAndPersists) {
  testsupport::ScratchDir dir("cache");
  {
    GenerationCache c(dir / "c.jsonl");
    EXPECT_TRUE(c.insert("k1", "v1"));
    EXPECT_FALSE(c.insert("k1", "other"));
    EXPECT_EQ(*c.lookup("k1"), "v1");
  }
  io::atomic_write(dir / "c2.jsonl", io::read_file(dir / "c.jsonl") + "{\"key\": \"torn");
  GenerationCache again(dir / "c2.jsonl");
  EXPECT_EQ(again.size(), 1u);
  EXPECT_EQ(*again.lookup("k1"), "v1");
  auto line = json::parse(io::read_file(dir / "c.jsonl"));
  EXPECT_TRUE(line.contains("timestamp"));
}

TEST(Cache, HitNeverChangesOutput) {
  auto counter = std::make_shared<CountingGenerator>(std::make_shared<MockGenerator>());
  CachedGenerator g(counter, std::make_shared<GenerationCache>());
  auto q = query(doc("s", "Hello World", "body"), Task::ArticleGeneration);
  auto p = build_prompt(q, std::span<const Document>{}, Task::ArticleGeneration);
  const auto cold = generate(g, p, {2, 512});
  const auto warm = generate(g, p, {2, 512});
  EXPECT_EQ(cold, warm);
  EXPECT_EQ(counter->calls(), 1u);
  EXPECT_EQ(g.hits(), 1u);
}

TEST(RunSetting, RecordsPerSettingInQueryOrder) {
  std::vector<Document> docs{doc("a", "Alpha", "alpha body"), doc("b", "Beta", "beta body"), doc("c", "Gamma", "gamma body")};
  Corpus corpus(docs, {{"A", {"a1", "a2"}}});
  std::vector<QueryInstance> qs{query(docs[0], Task::ArticleGeneration), query(docs[1], Task::ArticleGeneration)};
  RankingMap rankings;
  rankings[qs[0].query_id] = {qs[0].query_id, "bm25", 2, {{"a", 2.0}, {"c", 1.0}}};
  rankings[qs[1].query_id] = {qs[1].query_id, "bm25", 2, {{"b", 2.0}, {"a", 1.0}}};
  MockGenerator gen;
  RunOptions opt{4, std::nullopt};

  auto llm = run_setting(qs, corpus, nullptr, gen, SettingKind::LlmOnly, "", opt);
  ASSERT_EQ(llm.records.size(), 2u);
  EXPECT_EQ(llm.records[0].output_text, "Alpha");
  EXPECT_EQ(llm.records[0].decoding, (DecodingParams{2, 512}));

  auto rag = run_setting(qs, corpus, &rankings, gen, SettingKind::Rag, "bm25", opt);
  ASSERT_EQ(rag.records.size(), 2u);
  EXPECT_EQ(rag.records[1].output_text, "beta body");
  EXPECT_EQ(rag.records[1].setting.key(), "rag:bm25");

  auto single = run_setting(qs, corpus, &rankings, gen, SettingKind::SingleDoc, "bm25", opt);
  ASSERT_EQ(single.records.size(), 4u);
  EXPECT_EQ(single.records[1].setting.doc_id, "c");
  EXPECT_EQ(single.records[1].output_text, "gamma body");
  EXPECT_EQ(single.records[2].query_id, qs[1].query_id);
}

TEST(RunSetting, ReversedContextOrder) {
  std::vector<Document> docs{doc("a", "Alpha", "alpha body"), doc("b", "Beta", "beta body")};
  Corpus corpus(docs, {{"A", {"a1", "a2"}}});
  std::vector<QueryInstance> qs{query(docs[0], Task::ArticleGeneration)};
  RankingMap rankings;
  rankings[qs[0].query_id] = {qs[0].query_id, "bm25", 2, {{"a", 2.0}, {"b", 1.0}}};
  MockGenerator gen;
  auto rag = run_setting(qs, corpus, &rankings, gen, SettingKind::Rag, "bm25", {1, std::nullopt, ContextOrder::Reversed});
  EXPECT_EQ(rag.records.at(0).output_text, "beta body");
  auto single = run_setting(qs, corpus, &rankings, gen, SettingKind::SingleDoc, "bm25", {1, std::nullopt, ContextOrder::Reversed});
  EXPECT_EQ(single.records.at(0).setting.doc_id, "a");
  EXPECT_EQ(parse_context_order("rank"), ContextOrder::Rank);
  EXPECT_THROW(parse_context_order("random"), ConfigError);
}

TEST(RunSetting, ServiceFailuresBecomeFailures) {
  std::vector<Document> docs{doc("a", "Alpha", "x"), doc("b", "Beta", "y")};
  Corpus corpus(docs, {{"A", {"a1", "a2"}}});
  std::vector<QueryInstance> qs{query(docs[0], Task::ArticleGeneration), query(docs[1], Task::ArticleGeneration)};
  FlakyGenerator gen("Beta");
  auto res = run_setting(qs, corpus, nullptr, gen, SettingKind::LlmOnly, "");
  EXPECT_EQ(res.records.size(), 1u);
  ASSERT_EQ(res.failures.size(), 1u);
  EXPECT_EQ(res.failures[0].query_id, qs[1].query_id);
  EXPECT_EQ(res.failures[0].stage, "generate:llm_only");
}

TEST(RunSetting, TitleRagBeatsLlmOnlyWhenSourceRanksFirst) {
  // Each body query retrieves its own source first, so the mock copies the
  // right title; the LLM-only echo of the body cannot do better.
  std::vector<Document> docs{doc("a", "Red Fox", "red fox runs in woods"), doc("b", "Blue Whale", "blue whale swims deep"),
                             doc("c", "Green Frog", "green frog hops on pads")};
  Corpus corpus(docs, {{"A", {"a1", "a2"}}});
  std::vector<QueryInstance> qs;
  for (const auto& d : docs) qs.push_back(query(d, Task::TitleGeneration));
  auto idx = InvertedIndex::build(corpus, IndexField::Body);
  RankingMap rankings;
  for (const auto& q : qs) {
    auto r = bm25_retrieve(idx, q.query_text, 2);
    r.query_id = q.query_id;
    ASSERT_EQ(r.entries.at(0).doc_id, q.source_doc_id);
    rankings[q.query_id] = r;
  }
  MockGenerator gen;
  auto llm = run_setting(qs, corpus, nullptr, gen, SettingKind::LlmOnly, "").records;
  auto rag = run_setting(qs, corpus, &rankings, gen, SettingKind::Rag, "bm25").records;
  score_records(llm, qs);
  score_records(rag, qs);
  for (std::size_t i = 0; i < qs.size(); ++i) EXPECT_GE(*rag[i].accuracy, *llm[i].accuracy);
}

TEST(RecordJson, RoundTrip) {
  GenerationRecord r{"q", {SettingKind::SingleDoc, "bm25", "d7"}, "mock", {4, 16}, "out", 12.5};
  auto back = record_from_json(record_to_json(r));
  EXPECT_EQ(back.key(), r.key());
  EXPECT_EQ(back.output_text, "out");
  EXPECT_EQ(back.decoding, r.decoding);
}
