// Command-line front end: dataset build, corpus synth, index build,
// retrieve, audit run/resume/report.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <unordered_set>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "ragfair/ragfair.hpp"

namespace fs = std::filesystem;
using namespace ragfair;

namespace {

enum ExitCode { kOk = 0, kConfig = 2, kStage = 3, kFatal = 4 };

std::vector<FairnessCategory> categories_or_default(const std::string& path) {
  return path.empty() ? default_categories() : load_categories(path);
}

void print_summary(const AuditReport& r, const fs::path& dir) {
  std::printf("run: %s\n", dir.string().c_str());
  std::printf("queries: %zu scored / %zu total (%zu failed)\n", r.queries_scored, r.queries_total, r.failed_queries.size());
  if (r.overall_llm) std::printf("LLM-only accuracy: %.4f\n", *r.overall_llm);
  for (const auto& ra : r.retrievers) {
    if (ra.overall_rag) std::printf("RAG accuracy [%s]: %.4f\n", ra.retriever_id.c_str(), *ra.overall_rag);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Group-fairness audit for retrieval-augmented generation"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging");

  // dataset build
  auto* dataset = app.add_subcommand("dataset", "Query-set construction");
  dataset->require_subcommand(1);
  auto* ds_build = dataset->add_subcommand("build", "Filter a corpus and sample one query per group combination");
  std::string ds_corpus, ds_categories, ds_topic, ds_task = "article", ds_out;
  std::uint64_t ds_seed = 0;
  std::size_t ds_max_words = 512;
  bool ds_lenient = false, ds_list_topics = false;
  ds_build->add_option("--corpus", ds_corpus, "Corpus JSONL")->required()->check(CLI::ExistingFile);
  ds_build->add_option("--categories", ds_categories, "Category JSON (default: built-in table)")->check(CLI::ExistingFile);
  ds_build->add_option("--topic", ds_topic, "Topic to sample from");
  ds_build->add_option("--task", ds_task, "article|title");
  ds_build->add_option("--seed", ds_seed, "Sampling seed");
  ds_build->add_option("--max-words", ds_max_words, "Drop documents longer than this");
  ds_build->add_flag("--lenient", ds_lenient, "Skip malformed corpus lines");
  ds_build->add_flag("--list-topics", ds_list_topics, "Print topics by document count and exit");
  ds_build->add_option("--out", ds_out, "Output directory");

  // corpus synth
  auto* corpus_cmd = app.add_subcommand("corpus", "Corpus utilities");
  corpus_cmd->require_subcommand(1);
  auto* synth = corpus_cmd->add_subcommand("synth", "Generate a deterministic synthetic corpus");
  std::string sy_spec, sy_out, sy_cats_out;
  synth->add_option("--spec", sy_spec, "Synthetic corpus spec JSON")->required()->check(CLI::ExistingFile);
  synth->add_option("--out", sy_out, "Corpus JSONL to write")->required();
  synth->add_option("--categories-out", sy_cats_out, "Also write the matching category JSON");

  // index build
  auto* index_cmd = app.add_subcommand("index", "BM25 index");
  index_cmd->require_subcommand(1);
  auto* ix_build = index_cmd->add_subcommand("build", "Build a BM25 index over title and body");
  std::string ix_corpus, ix_out, ix_topic, ix_field = "title_body";
  ix_build->add_option("--corpus", ix_corpus, "Corpus JSONL")->required()->check(CLI::ExistingFile);
  ix_build->add_option("--out", ix_out, "Index file to write")->required();
  ix_build->add_option("--topic", ix_topic, "Index only this topic");
  ix_build->add_option("--field", ix_field, "body|title|title_body");

  // retrieve
  auto* retrieve = app.add_subcommand("retrieve", "Top-k retrieval for a query file");
  std::string rt_index, rt_queries, rt_retriever = "bm25", rt_out;
  std::size_t rt_k = 10;
  bool rt_exclude = false;
  retrieve->add_option("--index", rt_index, "Index file")->required()->check(CLI::ExistingFile);
  retrieve->add_option("--queries", rt_queries, "Query JSONL")->required()->check(CLI::ExistingFile);
  retrieve->add_option("--k", rt_k, "Documents per query")->check(CLI::PositiveNumber);
  retrieve->add_option("--retriever", rt_retriever, "bm25|ext:<url>");
  retrieve->add_option("--out", rt_out, "Ranked-list JSONL (default: stdout)");
  retrieve->add_flag("--exclude-source-doc", rt_exclude, "Drop each query's own source document");

  // audit
  auto* audit = app.add_subcommand("audit", "End-to-end audit");
  audit->require_subcommand(1);
  auto* au_run = audit->add_subcommand("run", "Run (or resume) the audit described by a config file");
  std::string au_config;
  bool au_check = false, au_resume = false;
  au_run->add_option("--config", au_config, "Run config JSON")->required();
  au_run->add_flag("--check-endpoints", au_check, "Probe every ext: endpoint before starting");
  au_run->add_flag("--resume", au_resume, "Accepted for clarity; an existing run directory is always resumed");
  auto* au_resume_cmd = audit->add_subcommand("resume", "Complete an interrupted run");
  std::string au_run_dir;
  au_resume_cmd->add_option("--run", au_run_dir, "Run directory")->required()->check(CLI::ExistingDirectory);
  auto* au_report = audit->add_subcommand("report", "Render the report of a run from its ledgers");
  std::string ar_run, ar_format = "json", ar_out;
  au_report->add_option("--run", ar_run, "Run directory")->required()->check(CLI::ExistingDirectory);
  au_report->add_option("--format", ar_format, "json|csv|svg");
  au_report->add_option("--out", ar_out, "Output directory (default: <run>/report)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }
  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);
  spdlog::set_pattern("%^%l%$: %v");

  try {
    if (ds_build->parsed()) {
      auto cats = categories_or_default(ds_categories);
      LoadReport lr;
      auto corpus = load_corpus(ds_corpus, cats, ds_lenient ? ParseMode::Lenient : ParseMode::Strict, lr);
      auto filtered = filter_documents(corpus, ds_max_words);
      if (ds_list_topics) {
        for (const auto& t : select_topics(filtered, filtered.topic_counts().size()))
          std::printf("%s\t%zu\n", t.c_str(), filtered.topic_counts().at(t));
        return kOk;
      }
      if (ds_topic.empty() || ds_out.empty()) throw ConfigError("--topic and --out are required");
      auto reps = sample_representatives(filtered, ds_topic, cats, ds_seed);
      auto queries = build_queries(reps, parse_task(ds_task));
      const fs::path out = ds_out;
      io::atomic_write(out / "queries.jsonl", io::to_jsonl(queries, query_to_json));
      io::atomic_write(out / "documents.jsonl", corpus_to_jsonl(filtered.topic_subset(ds_topic)));
      io::atomic_write(out / "categories.json", categories_to_json(cats).dump(2) + "\n");
      std::printf("%zu documents kept of %zu; %zu queries for topic '%s'\n", filtered.size(), corpus.size(),
                  queries.size(), ds_topic.c_str());
    } else if (synth->parsed()) {
      auto spec = synth::spec_from_json(io::read_json(sy_spec));
      auto docs = synth::generate_corpus(spec);
      io::atomic_write(sy_out, io::to_jsonl(docs, document_to_json));
      if (!sy_cats_out.empty()) {
        io::atomic_write(sy_cats_out, categories_to_json(synth::spec_categories(spec)).dump(2) + "\n");
      }
      std::printf("%zu documents written to %s\n", docs.size(), sy_out.c_str());
    } else if (ix_build->parsed()) {
      std::vector<Document> docs;
      io::for_each_jsonl(ix_corpus, [&](const json& j, std::size_t) { docs.push_back(document_from_json(j)); });
      Corpus corpus(std::move(docs), {});
      if (!ix_topic.empty()) corpus = corpus.topic_subset(ix_topic);
      auto index = InvertedIndex::build(corpus, parse_index_field(ix_field));
      index.save(ix_out);
      std::printf("indexed %zu documents, %zu terms\n", index.doc_count(), index.vocabulary_size());
    } else if (retrieve->parsed()) {
      auto index = std::make_shared<const InvertedIndex>(InvertedIndex::load(rt_index));
      auto queries = io::read_jsonl<QueryInstance>(rt_queries, query_from_json);
      std::shared_ptr<Retriever> r;
      if (rt_retriever == "bm25") {
        r = std::make_shared<Bm25Retriever>(index);
      } else if (rt_retriever.rfind("ext:", 0) == 0) {
        std::unordered_set<std::string> known(index->doc_ids().begin(), index->doc_ids().end());
        r = std::make_shared<ExternalRetriever>(rt_retriever, http::Endpoint::parse(rt_retriever.substr(4)), std::move(known));
      } else {
        throw ConfigError("invalid retriever '" + rt_retriever + "' (expected bm25|ext:<url>)");
      }
      std::vector<RankedList> lists;
      for (const auto& q : queries) {
        auto l = retrieve_for(*r, q, rt_k, rt_exclude);
        l.retriever_id = rt_retriever;
        lists.push_back(std::move(l));
      }
      auto text = io::to_jsonl(lists, ranked_list_to_json);
      if (rt_out.empty()) std::cout << text;
      else io::atomic_write(rt_out, text);
    } else if (au_run->parsed()) {
      auto cfg = validate_config(au_config, au_check);
      AuditRun run(cfg);
      auto report = run.run();
      print_summary(report, run.dir());
    } else if (au_resume_cmd->parsed()) {
      auto report = resume_audit(au_run_dir);
      print_summary(report, au_run_dir);
    } else if (au_report->parsed()) {
      auto report = report_from_run(ar_run);
      const fs::path out = ar_out.empty() ? fs::path(ar_run) / "report" : fs::path(ar_out);
      for (const auto& p : write_report(report, out, parse_report_format(ar_format))) std::printf("%s\n", p.string().c_str());
    }
  } catch (const ConfigError& e) {
    spdlog::error("config: {}", e.what());
    return kConfig;
  } catch (const StageError& e) {
    spdlog::error("{} (rerun to resume)", e.what());
    return kStage;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kFatal;
  }
  return kOk;
}
