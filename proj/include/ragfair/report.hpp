#pragma once

// Audit report serialization: JSON document, CSV tables and SVG charts.

#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "analysis.hpp"
#include "io.hpp"

namespace ragfair {

inline json report_to_json(const AuditReport& r) {
  json run = {{"topic", r.meta.topic},
              {"task", r.meta.task},
              {"generator_id", r.meta.generator_id},
              {"attributor_id", r.meta.attributor_id},
              {"retriever_ids", r.meta.retriever_ids},
              {"k", r.meta.k},
              {"seeds", {{"sample", r.meta.sample_seed}}},
              {"config_hash", r.meta.config_hash},
              {"corpus_sha256", r.meta.corpus_sha256},
              {"exclude_source_doc", r.meta.exclude_source_doc},
              {"rouge_variant", to_string(r.meta.rouge_variant)}};

  json llm_section = json::object();
  for (const auto& c : r.categories) {
    llm_section[c.name] = {{"AC_llm", group_vector_to_json(r.ac_llm.at(c.name))},
                           {"R_llm", range_to_json(r.r_llm.at(c.name))}};
  }

  json overall = {{"llm_only", r.overall_llm ? json(*r.overall_llm) : json(nullptr)}, {"rag", json::object()}};
  json retrievers = json::object();
  for (const auto& ra : r.retrievers) {
    overall["rag"][ra.retriever_id] = ra.overall_rag ? json(*ra.overall_rag) : json(nullptr);
    json cats = json::object();
    for (const auto& c : r.categories) {
      const auto& v = ra.vectors.categories.at(c.name);
      json entry = json::object();
      for (const auto* g : {&v.ac_rag, &v.delta, &v.u_hat, &v.u, &v.e_hat, &v.e, &v.a_hat, &v.a}) {
        entry[std::string(to_string(g->kind))] = group_vector_to_json(*g);
      }
      json ranges = json::object();
      for (const auto& rs : ra.ranges.at(c.name)) ranges[std::string(to_string(rs.setting))] = range_to_json(rs);
      ranges["R_llm"] = range_to_json(r.r_llm.at(c.name));
      entry["ranges"] = std::move(ranges);
      cats[c.name] = std::move(entry);
    }
    retrievers[ra.retriever_id] = {
        {"categories", std::move(cats)},
        {"doc_pairs", ra.doc_pairs},
        {"attribution", {{"absent", ra.attribution_absent}, {"truncated", ra.attribution_truncated}}}};
  }

  json corr = json::array();
  for (const auto& s : r.correlations) {
    json per = json::object();
    std::vector<std::string> undefined;
    for (const auto& [rid, rho] : s.per_retriever) {
      per[rid] = rho ? json(*rho) : json(nullptr);
      if (!rho) undefined.push_back(rid);
    }
    corr.push_back({{"category", s.category},
                    {"factor", to_string(s.factor)},
                    {"target", to_string(s.target)},
                    {"per_retriever", std::move(per)},
                    {"averaged", s.averaged ? json(*s.averaged) : json(nullptr)},
                    {"undefined_retrievers", undefined},
                    {"n", s.n}});
  }

  json failures = json::array();
  for (const auto& f : r.failures) failures.push_back({{"query_id", f.query_id}, {"stage", f.stage}, {"reason", f.reason}});

  return {{"schema_version", kReportSchemaVersion},
          {"run", std::move(run)},
          {"queries", {{"total", r.queries_total}, {"scored", r.queries_scored}, {"failed", r.failed_queries}}},
          {"overall", std::move(overall)},
          {"llm_only", std::move(llm_section)},
          {"retrievers", std::move(retrievers)},
          {"correlations", std::move(corr)},
          {"failures", std::move(failures)}};
}

/// Pretty-printed JSON with sorted keys and a trailing newline.
inline std::string report_json_text(const AuditReport& r) { return report_to_json(r).dump(2) + "\n"; }

namespace detail {

inline std::string fmt_num(std::optional<double> v) {
  if (!v) return "";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", *v);
  return buf;
}

inline std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  return out + "\"";
}

inline std::string csv_row(std::initializer_list<std::string> fields) {
  std::string out;
  bool first = true;
  for (const auto& f : fields) {
    if (!first) out.push_back(',');
    out += csv_field(f);
    first = false;
  }
  return out + "\n";
}

inline std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

}  // namespace detail

/// CSV exports keyed by file name: overall, group vectors, ranges, correlations.
inline std::map<std::string, std::string> report_csv(const AuditReport& r) {
  using detail::csv_row;
  using detail::fmt_num;
  std::map<std::string, std::string> files;

  std::string overall = csv_row({"setting", "retriever", "rouge_l"});
  overall += csv_row({"llm_only", "", fmt_num(r.overall_llm)});
  for (const auto& ra : r.retrievers) overall += csv_row({"rag", ra.retriever_id, fmt_num(ra.overall_rag)});
  files["overall.csv"] = std::move(overall);

  std::string vectors = csv_row({"retriever", "category", "kind", "group", "value"});
  for (const auto& c : r.categories) {
    const auto& llm = r.ac_llm.at(c.name);
    for (std::size_t g = 0; g < c.groups.size(); ++g) {
      vectors += csv_row({"", c.name, "AC_llm", c.groups[g], fmt_num(llm.values[g])});
    }
  }
  for (const auto& ra : r.retrievers) {
    for (const auto& c : r.categories) {
      const auto& v = ra.vectors.categories.at(c.name);
      for (const auto* gv : {&v.ac_rag, &v.delta, &v.u_hat, &v.u, &v.e_hat, &v.e, &v.a_hat, &v.a}) {
        for (std::size_t g = 0; g < c.groups.size(); ++g) {
          vectors += csv_row({ra.retriever_id, c.name, std::string(to_string(gv->kind)), c.groups[g], fmt_num(gv->values[g])});
        }
      }
    }
  }
  files["group_vectors.csv"] = std::move(vectors);

  // Grouped-bar data: one row per (retriever, category, range).
  std::string ranges = csv_row({"retriever", "category", "range", "value", "argmax", "argmin"});
  for (const auto& c : r.categories) {
    const auto& rl = r.r_llm.at(c.name);
    ranges += csv_row({"", c.name, "R_llm", fmt_num(rl.value), rl.argmax_group, rl.argmin_group});
  }
  for (const auto& ra : r.retrievers) {
    for (const auto& c : r.categories) {
      for (const auto& rs : ra.ranges.at(c.name)) {
        ranges += csv_row({ra.retriever_id, c.name, std::string(to_string(rs.setting)), fmt_num(rs.value),
                           rs.argmax_group, rs.argmin_group});
      }
    }
  }
  files["ranges.csv"] = std::move(ranges);

  // Heatmap data: averaged rho plus per-retriever values.
  std::string corr = csv_row({"category", "factor", "target", "retriever", "rho"});
  for (const auto& s : r.correlations) {
    corr += csv_row({s.category, std::string(to_string(s.factor)), std::string(to_string(s.target)), "average",
                     fmt_num(s.averaged)});
    for (const auto& [rid, rho] : s.per_retriever) {
      corr += csv_row({s.category, std::string(to_string(s.factor)), std::string(to_string(s.target)), rid, fmt_num(rho)});
    }
  }
  files["correlations.csv"] = std::move(corr);
  return files;
}

namespace detail {

/// Grouped bar chart: one cluster per category, one bar per series.
inline std::string bar_chart_svg(const std::string& title, const std::vector<std::string>& categories,
                                 const std::vector<std::string>& series,
                                 const std::vector<std::vector<std::optional<double>>>& values) {
  static const char* kColors[] = {"#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948", "#b07aa1"};
  const int bar_w = 18, gap = 24, left = 50, top = 40, height = 200;
  double vmax = 1e-9;
  for (const auto& row : values)
    for (const auto& v : row)
      if (v) vmax = std::max(vmax, *v);
  const int cluster_w = static_cast<int>(series.size()) * bar_w + gap;
  const int width = left + static_cast<int>(categories.size()) * cluster_w + 160;
  std::string svg;
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%d\" height=\"%d\" font-family=\"sans-serif\" "
                "font-size=\"11\">\n",
                width, top + height + 50);
  svg += buf;
  svg += "<text x=\"10\" y=\"20\" font-size=\"14\">" + xml_escape(title) + "</text>\n";
  std::snprintf(buf, sizeof buf, "<line x1=\"%d\" y1=\"%d\" x2=\"%d\" y2=\"%d\" stroke=\"black\"/>\n", left,
                top + height, width - 150, top + height);
  svg += buf;
  std::snprintf(buf, sizeof buf, "<text x=\"5\" y=\"%d\">%s</text>\n", top + 5, fmt_num(vmax).c_str());
  svg += buf;
  for (std::size_t c = 0; c < categories.size(); ++c) {
    const int x0 = left + static_cast<int>(c) * cluster_w + gap / 2;
    for (std::size_t s = 0; s < series.size(); ++s) {
      const auto& v = values[s][c];
      if (!v) continue;
      const double h = *v / vmax * height;
      std::snprintf(buf, sizeof buf,
                    "<rect x=\"%d\" y=\"%.2f\" width=\"%d\" height=\"%.2f\" fill=\"%s\"><title>%s</title></rect>\n",
                    x0 + static_cast<int>(s) * bar_w, top + height - h, bar_w - 2, h, kColors[s % 7],
                    fmt_num(v).c_str());
      svg += buf;
    }
    std::snprintf(buf, sizeof buf, "<text x=\"%d\" y=\"%d\">", x0, top + height + 15);
    svg += buf;
    svg += xml_escape(categories[c]) + "</text>\n";
  }
  for (std::size_t s = 0; s < series.size(); ++s) {
    const int y = top + static_cast<int>(s) * 16;
    std::snprintf(buf, sizeof buf, "<rect x=\"%d\" y=\"%d\" width=\"10\" height=\"10\" fill=\"%s\"/>\n", width - 145, y,
                  kColors[s % 7]);
    svg += buf;
    std::snprintf(buf, sizeof buf, "<text x=\"%d\" y=\"%d\">", width - 130, y + 9);
    svg += buf;
    svg += xml_escape(series[s]) + "</text>\n";
  }
  return svg + "</svg>\n";
}

/// Heatmap of averaged rho: rows are categories, columns factors.
inline std::string heatmap_svg(const std::string& title, const AuditReport& r, Target target) {
  const int cell = 60, left = 80, top = 50;
  std::string svg;
  char buf[512];
  const int rows = static_cast<int>(r.categories.size());
  std::snprintf(buf, sizeof buf,
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%d\" height=\"%d\" font-family=\"sans-serif\" "
                "font-size=\"11\">\n",
                left + 3 * cell + 20, top + rows * cell + 20);
  svg += buf;
  svg += "<text x=\"10\" y=\"20\" font-size=\"14\">" + xml_escape(title) + "</text>\n";
  const Factor factors[] = {Factor::U, Factor::E, Factor::A};
  for (int f = 0; f < 3; ++f) {
    std::snprintf(buf, sizeof buf, "<text x=\"%d\" y=\"%d\">%s</text>\n", left + f * cell + cell / 2 - 4, top - 6,
                  std::string(to_string(factors[f])).c_str());
    svg += buf;
  }
  for (int c = 0; c < rows; ++c) {
    const auto& cat = r.categories[static_cast<std::size_t>(c)].name;
    std::snprintf(buf, sizeof buf, "<text x=\"5\" y=\"%d\">", top + c * cell + cell / 2 + 4);
    svg += buf;
    svg += xml_escape(cat) + "</text>\n";
    for (int f = 0; f < 3; ++f) {
      std::optional<double> rho;
      for (const auto& s : r.correlations)
        if (s.category == cat && s.factor == factors[f] && s.target == target) rho = s.averaged;
      std::string fill = "#dddddd";
      if (rho) {
        // Blue for negative, red for positive.
        const int mag = static_cast<int>(std::lround(std::abs(*rho) * 200));
        std::snprintf(buf, sizeof buf, *rho >= 0 ? "rgb(255,%d,%d)" : "rgb(%d,%d,255)", 255 - mag, 255 - mag);
        fill = buf;
      }
      std::snprintf(buf, sizeof buf,
                    "<rect x=\"%d\" y=\"%d\" width=\"%d\" height=\"%d\" fill=\"%s\" stroke=\"white\"/>\n"
                    "<text x=\"%d\" y=\"%d\">%s</text>\n",
                    left + f * cell, top + c * cell, cell, cell, fill.c_str(), left + f * cell + 8,
                    top + c * cell + cell / 2 + 4, rho ? fmt_num(rho).substr(0, 6).c_str() : "n/a");
      svg += buf;
    }
  }
  return svg + "</svg>\n";
}

}  // namespace detail

/// SVG figures keyed by file name: range bars (R_delta, R_rag vs R_llm) and
/// correlation heatmaps for both targets.
inline std::map<std::string, std::string> report_svg(const AuditReport& r) {
  std::map<std::string, std::string> files;
  std::vector<std::string> cats;
  for (const auto& c : r.categories) cats.push_back(c.name);

  for (auto kind : {RangeKind::Delta, RangeKind::Rag}) {
    std::vector<std::string> series;
    std::vector<std::vector<std::optional<double>>> values;
    for (const auto& ra : r.retrievers) {
      series.push_back(ra.retriever_id);
      std::vector<std::optional<double>> row;
      for (const auto& c : r.categories) {
        std::optional<double> v;
        for (const auto& rs : ra.ranges.at(c.name))
          if (rs.setting == kind) v = rs.value;
        row.push_back(v);
      }
      values.push_back(std::move(row));
    }
    if (kind == RangeKind::Rag) {
      series.push_back("LLM-only (R_llm)");
      std::vector<std::optional<double>> row;
      for (const auto& c : r.categories) row.push_back(r.r_llm.at(c.name).value);
      values.push_back(std::move(row));
    }
    const std::string name = std::string("ranges_") + std::string(to_string(kind)) + ".svg";
    files[name] = detail::bar_chart_svg(std::string(to_string(kind)) + " per fairness category", cats, series, values);
  }
  files["correlations_AC_rag.svg"] = detail::heatmap_svg("Spearman rho vs AC_rag (averaged)", r, Target::AcRag);
  files["correlations_DeltaAC.svg"] = detail::heatmap_svg("Spearman rho vs DeltaAC (averaged)", r, Target::DeltaAc);
  return files;
}

enum class ReportFormat { Json, Csv, Svg };

inline ReportFormat parse_report_format(std::string_view s) {
  if (s == "json") return ReportFormat::Json;
  if (s == "csv") return ReportFormat::Csv;
  if (s == "svg") return ReportFormat::Svg;
  throw ConfigError("unknown report format '" + std::string(s) + "' (expected json|csv|svg)");
}

/// Writes the report in `format` under `dir`; returns the written paths.
inline std::vector<std::filesystem::path> write_report(const AuditReport& r, const std::filesystem::path& dir,
                                                       ReportFormat format) {
  std::vector<std::filesystem::path> written;
  auto put = [&](const std::string& name, const std::string& content) {
    io::atomic_write(dir / name, content);
    written.push_back(dir / name);
  };
  switch (format) {
    case ReportFormat::Json: put("report.json", report_json_text(r)); break;
    case ReportFormat::Csv:
      for (const auto& [name, content] : report_csv(r)) put(name, content);
      break;
    case ReportFormat::Svg:
      for (const auto& [name, content] : report_svg(r)) put(name, content);
      break;
  }
  return written;
}

}  // namespace ragfair
