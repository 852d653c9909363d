#include <gtest/gtest.h>

#include "ragfair/pipeline.hpp"
#include "support.hpp"

using namespace ragfair;
namespace fs = std::filesystem;

namespace {

const AuditReport& shared_report() {
  static testsupport::ScratchDir dir{"report"};
  static AuditReport report = [] {
    auto spec = testsupport::materialize(testsupport::load_spec("synth_balanced.json"), dir.path());
    return run_audit(testsupport::mock_config(dir.path(), spec.topic));
  }();
  return report;
}

}  // namespace

TEST(ReportJson, TopLevelShape) {
  auto j = report_to_json(shared_report());
  for (const char* key : {"schema_version", "run", "queries", "overall", "llm_only", "retrievers", "correlations", "failures"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
  EXPECT_EQ(j["run"]["k"], 10);
  EXPECT_EQ(j["run"]["retriever_ids"], json({"bm25"}));
  const auto& cats = j["retrievers"]["bm25"]["categories"];
  for (const char* cat : {"Era", "Region"}) {
    ASSERT_TRUE(cats.contains(cat)) << cat;
    for (const char* v : {"AC_rag", "DeltaAC", "U_hat", "U", "E_hat", "E", "A_hat", "A"}) EXPECT_TRUE(cats[cat].contains(v)) << v;
    for (const char* r : {"R_delta", "R_rag", "R_llm"}) EXPECT_TRUE(cats[cat]["ranges"].contains(r)) << r;
  }
  // 2 categories x 3 factors x 2 targets.
  EXPECT_EQ(j["correlations"].size(), 12u);
}

TEST(ReportJson, ExposureSumsToOneAndRangesAreNonNegative) {
  auto j = report_to_json(shared_report());
  for (const auto& [cat, entry] : j["retrievers"]["bm25"]["categories"].items()) {
    double sum = 0;
    for (const auto& v : entry["E"]["values"]) sum += v.get<double>();
    EXPECT_NEAR(sum, 1.0, 1e-12) << cat;
    for (const auto& [name, r] : entry["ranges"].items()) {
      if (!r["value"].is_null()) EXPECT_GE(r["value"].get<double>(), 0.0) << name;
    }
  }
}

TEST(ReportJson, StableText) {
  const auto a = report_json_text(shared_report());
  EXPECT_EQ(a, report_json_text(shared_report()));
  EXPECT_EQ(a.back(), '\n');
  EXPECT_EQ(json::parse(a), report_to_json(shared_report()));
}

TEST(ReportFiles, CsvAndSvgWritten) {
  testsupport::ScratchDir out{"report-out"};
  auto csv = write_report(shared_report(), out.path(), ReportFormat::Csv);
  EXPECT_EQ(csv.size(), 4u);
  const auto overall = io::read_file(out / "overall.csv");
  EXPECT_EQ(overall.rfind("setting,retriever,rouge_l\n", 0), 0u);
  EXPECT_NE(overall.find("rag,bm25,"), std::string::npos);
  auto svg = write_report(shared_report(), out.path(), ReportFormat::Svg);
  EXPECT_EQ(svg.size(), 4u);
  for (const auto& p : svg) {
    const auto body = io::read_file(p);
    EXPECT_EQ(body.rfind("<svg", 0), 0u) << p;
    EXPECT_NE(body.find("</svg>"), std::string::npos);
  }
}

TEST(ReportFormat, Parse) {
  EXPECT_EQ(parse_report_format("json"), ReportFormat::Json);
  EXPECT_EQ(parse_report_format("csv"), ReportFormat::Csv);
  EXPECT_EQ(parse_report_format("svg"), ReportFormat::Svg);
  EXPECT_THROW(parse_report_format("pdf"), ConfigError);
}

TEST(ReportCsv, QuotesFieldsWithCommas) {
  EXPECT_EQ(detail::csv_field("a,b"), "\"a,b\"");
  EXPECT_EQ(detail::csv_field("say \"x\""), "\"say \"\"x\"\"\"");
  EXPECT_EQ(detail::csv_field("plain"), "plain");
}
