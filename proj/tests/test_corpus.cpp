#include <sstream>

#include <gtest/gtest.h>

#include "ragfair/corpus.hpp"
#include "support.hpp"

using namespace ragfair;

namespace {

std::vector<FairnessCategory> two_by_two() { return {{"A", {"a1", "a2"}}, {"B", {"b1", "b2"}}}; }

Document doc(std::string id, std::string topic, std::string a, std::string b, std::string body = "some body text") {
  Document d;
  d.doc_id = std::move(id);
  d.title = "Title " + d.doc_id;
  d.body = std::move(body);
  d.topic = std::move(topic);
  d.labels = {{"A", std::move(a)}, {"B", std::move(b)}};
  d.word_count = text::word_count(d.body);
  return d;
}

std::string line(const std::string& id, const std::string& body = "x y") {
  return json{{"id", id}, {"title", "T"}, {"body", body}, {"topic", "P"}, {"labels", {{"A", "a1"}, {"B", "b1"}}}}.dump() +
         "\n";
}

}  // namespace

TEST(Categories, DefaultTableHasFourByFour) {
  auto cats = default_categories();
  ASSERT_EQ(cats.size(), 4u);
  EXPECT_EQ(cats[0].name, "AoT");
  EXPECT_EQ(cats[0].groups, (std::vector<std::string>{"Unk", "Pre-1900s", "20th century", "21st century"}));
  EXPECT_EQ(cats[1].groups, (std::vector<std::string>{"Low", "Medium-Low", "Medium-High", "High"}));
  EXPECT_EQ(cats[2].groups[0], "2001–2006");
  EXPECT_EQ(cats[3].groups[3], "s–z");
  for (const auto& c : cats) EXPECT_EQ(c.groups.size(), 4u);
}

TEST(Categories, ShippedFileEqualsBuiltIn) {
  EXPECT_EQ(load_categories(testsupport::source_dir() / "data" / "categories_default.json"), default_categories());
}

TEST(Categories, RejectsDuplicateOrEmptyGroups) {
  EXPECT_THROW(validate_category({"X", {"a", "a"}}), ConfigError);
  EXPECT_THROW(validate_category({"X", {"a", ""}}), ConfigError);
  EXPECT_THROW(validate_category({"X", {"a"}}), ConfigError);
}

TEST(LoadCorpus, ParsesWellFormedLines) {
  std::istringstream in(line("d1") + line("d2"));
  LoadReport r;
  auto c = parse_corpus(in, two_by_two(), ParseMode::Strict, r);
  EXPECT_EQ(c.size(), 2u);
  EXPECT_EQ(c.topic_counts().at("P"), 2u);
}

TEST(LoadCorpus, MissingBodyNamesLineInStrictMode) {
  std::istringstream in(R"({"id":"d1","title":"T","topic":"P","labels":{}})" "\n");
  LoadReport r;
  try {
    parse_corpus(in, two_by_two(), ParseMode::Strict, r);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 1u);
    EXPECT_NE(std::string(e.what()).find("body"), std::string::npos);
  }
}

TEST(LoadCorpus, LenientModeSkipsAndCounts) {
  std::istringstream in(line("d1") + "not json\n" + line("d1") + line("d3"));
  LoadReport r;
  auto c = parse_corpus(in, two_by_two(), ParseMode::Lenient, r);
  EXPECT_EQ(c.size(), 2u);
  EXPECT_EQ(r.skipped_lines, (std::vector<std::size_t>{2, 3}));
}

TEST(LoadCorpus, WordCountOfLongBody) {
  std::string body;
  for (int i = 0; i < 600; ++i) body += "tok ";
  std::istringstream in(line("d1", body));
  LoadReport r;
  EXPECT_EQ(parse_corpus(in, two_by_two(), ParseMode::Strict, r).at("d1").word_count, 600u);
}

TEST(LoadCorpus, UnreadableFileIsFatal) {
  EXPECT_THROW(load_corpus("/nonexistent/corpus.jsonl", two_by_two()), Error);
}

TEST(Filter, DropsLongAndUnlabeledDocuments) {
  std::string body512, body513;
  for (int i = 0; i < 512; ++i) body512 += "w ";
  body513 = body512 + "w";
  Corpus c({doc("ok", "P", "a1", "b1", body512), doc("long", "P", "a1", "b1", body513), doc("bad", "P", "zz", "b1"),
            doc("missing", "P", "a1", "b1")},
           two_by_two());
  auto docs = c.documents();
  docs[3].labels.erase("B");
  Corpus c2(docs, two_by_two());
  auto f = filter_documents(c2);
  ASSERT_EQ(f.size(), 1u);
  EXPECT_EQ(f.documents()[0].doc_id, "ok");
  for (const auto& d : f.documents()) {
    EXPECT_LE(d.word_count, 512u);
    EXPECT_TRUE(has_valid_labels(d, f.categories()));
  }
}

TEST(Topics, RankedByCountThenName) {
  Corpus c({doc("1", "Beta", "a1", "b1"), doc("2", "Beta", "a1", "b1"), doc("3", "Alpha", "a1", "b1"),
            doc("4", "Gamma", "a1", "b1"), doc("5", "Delta", "a1", "b1"), doc("6", "Delta", "a1", "b1")},
           two_by_two());
  EXPECT_EQ(select_topics(c, 3), (std::vector<std::string>{"Beta", "Delta", "Alpha"}));
  EXPECT_EQ(select_topics(c, 10).size(), 4u);
}

TEST(Cells, RowMajorProduct) {
  auto cells = cartesian_cells(two_by_two());
  ASSERT_EQ(cells.size(), 4u);
  EXPECT_EQ(cells[1], (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(cells[2], (std::vector<std::size_t>{1, 0}));
}

TEST(Sampling, OnePerPopulatedCellAndDeterministic) {
  std::vector<Document> docs;
  for (int i = 0; i < 40; ++i) {
    docs.push_back(doc("d" + std::to_string(i), i < 36 ? "P" : "Q", i % 2 ? "a1" : "a2", (i / 2) % 2 ? "b1" : "b2"));
  }
  // Leave cell (a1, b1) empty in topic P.
  std::erase_if(docs, [](const Document& d) { return d.topic == "P" && d.labels.at("A") == "a1" && d.labels.at("B") == "b1"; });
  Corpus c(docs, two_by_two());
  auto reps = sample_representatives(c, "P", two_by_two(), 42);
  ASSERT_EQ(reps.size(), 3u);
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& r : reps) {
    EXPECT_EQ(r.topic, "P");
    EXPECT_TRUE(seen.insert({r.labels.at("A"), r.labels.at("B")}).second);
  }
  auto again = sample_representatives(c, "P", two_by_two(), 42);
  for (std::size_t i = 0; i < reps.size(); ++i) EXPECT_EQ(reps[i].doc_id, again[i].doc_id);
  EXPECT_THROW(sample_representatives(c, "Nope", two_by_two(), 1), Error);
}

TEST(Sampling, SingletonCellsGiveOneQueryPerCell) {
  std::vector<Document> docs{doc("1", "P", "a1", "b1"), doc("2", "P", "a1", "b2"), doc("3", "P", "a2", "b1"),
                             doc("4", "P", "a2", "b2")};
  Corpus c(docs, two_by_two());
  EXPECT_EQ(sample_representatives(c, "P", two_by_two(), 0).size(), 4u);
}

TEST(Queries, ArticleAndTitleTasks) {
  std::vector<Document> reps{doc("d1", "P", "a1", "b2", "the body")};
  auto art = build_queries(reps, Task::ArticleGeneration);
  ASSERT_EQ(art.size(), 1u);
  EXPECT_EQ(art[0].query_text, "Title d1");
  EXPECT_EQ(art[0].ground_truth, "the body");
  EXPECT_EQ(art[0].labels, reps[0].labels);
  EXPECT_EQ(art[0].source_doc_id, "d1");
  auto tit = build_queries(reps, Task::TitleGeneration);
  EXPECT_EQ(tit[0].query_text, "the body");
  EXPECT_EQ(tit[0].ground_truth, "Title d1");
  EXPECT_NE(art[0].query_id, tit[0].query_id);
}

TEST(Queries, EmptyTitleIsSkipped) {
  auto d = doc("d1", "P", "a1", "b1");
  d.title = "  ";
  std::vector<Document> reps{d};
  EXPECT_TRUE(build_queries(reps, Task::ArticleGeneration).empty());
}

TEST(Queries, JsonRoundTrip) {
  std::vector<Document> reps{doc("d1", "P", "a1", "b2")};
  auto q = build_queries(reps, Task::TitleGeneration)[0];
  auto r = query_from_json(query_to_json(q));
  EXPECT_EQ(r.query_id, q.query_id);
  EXPECT_EQ(r.task, q.task);
  EXPECT_EQ(r.labels, q.labels);
}
