#include "rageval/report.hpp"

#include <algorithm>

#include <fmt/format.h>

namespace rageval::report {
namespace {

std::string format_mean(const std::optional<double>& value) {
  return value ? fmt::format("{:.6f}", *value) : std::string("n/a");
}

std::string pad(std::string_view s, std::size_t width) {
  std::string out(s);
  // Count code points so "±" does not skew alignment.
  std::size_t visible = 0;
  for (unsigned char c : s) visible += (c & 0xC0) != 0x80;
  if (visible < width) out.append(width - visible, ' ');
  return out;
}

}  // namespace

std::string format_fraction(const std::optional<double>& value) {
  if (!value) return "n/a";
  auto text = fmt::format("{:.4f}", *value);
  if (text.rfind("0.", 0) == 0) text.erase(0, 1);
  if (text.rfind("-0.", 0) == 0) text.erase(1, 1);
  return text;
}

std::string render_aggregate(const metrics::AggregateReport& report) {
  std::string out = fmt::format("{:<20} {:<20} {:<12} {:>4} {:>10} {:>8} {:>9} {:>11}\n", "corpus", "retriever",
                                "metric", "k", "mean", "backends", "evaluated", "unevaluable");
  for (const auto& row : report.rows) {
    out += fmt::format("{:<20} {:<20} {:<12} {:>4} {:>10} {:>8} {:>9} {:>11}\n", row.corpus_id, row.retriever_id,
                       row.metric, row.k, format_mean(row.mean), row.backends, row.evaluated, row.unevaluable);
  }
  out += fmt::format("empty groups: {}\n", report.empty_groups);
  return out;
}

std::string aggregate_jsonl(const metrics::AggregateReport& report) {
  std::vector<Json> records;
  for (const auto& row : report.rows) records.push_back(metrics::to_json(row));
  return to_jsonl(records);
}

std::map<std::string, std::string> aggregate_csv(const metrics::AggregateReport& report) {
  std::map<std::string, std::string> files;
  for (const auto metric : metrics::kMetricNames) {
    files[std::string(metric)] = "corpus_id,retriever_id,k,mean,backends,evaluated,unevaluable\n";
  }
  for (const auto& row : report.rows) {
    files[row.metric] += fmt::format("{},{},{},{},{},{},{}\n", row.corpus_id, row.retriever_id, row.k,
                                     row.mean ? fmt::format("{:.17g}", *row.mean) : std::string(), row.backends,
                                     row.evaluated, row.unevaluable);
  }
  return files;
}

std::string render_frequency_table(const judge::FrequencyTable& table) {
  auto find = [&](std::size_t panel, std::size_t k, judge::Source source) -> const judge::FrequencyRow* {
    for (const auto& r : table.rows) {
      if (r.chunk_budget == panel && r.k == k && r.source == source) return &r;
    }
    return nullptr;
  };

  std::string out =
      "Relevance scores (%): 0 = completely irrelevant, 1 = slightly relevant, 2 = moderately relevant, "
      "3 = highly relevant\n";
  out += fmt::format("{:<8}{:<11}", "Top-K", "Method");
  for (const auto panel : table.panels) out += fmt::format("| {:<31}", fmt::format("{} tokens", panel));
  out += '\n';
  out += fmt::format("{:<8}{:<11}", "", "");
  for (std::size_t p = 0; p < table.panels.size(); ++p) {
    out += fmt::format("| {:>6} {:>7} {:>7} {:>7} ", "0", "1", "2", "3");
  }
  out += '\n';
  for (const auto k : table.top_k) {
    for (const auto source : {judge::Source::kRetriever, judge::Source::kReranked}) {
      out += fmt::format("{:<8}{:<11}", source == judge::Source::kRetriever ? fmt::format("Top-{}", k) : "",
                         source == judge::Source::kRetriever ? "Retriever" : "Reranked");
      for (const auto panel : table.panels) {
        const auto* row = find(panel, k, source);
        if (row == nullptr) {
          out += fmt::format("| {:>6} {:>7} {:>7} {:>7} ", "-", "-", "-", "-");
          continue;
        }
        out += fmt::format("| {:>6.2f} {:>7.2f} {:>7.2f} {:>7.2f} ", row->percent[0], row->percent[1],
                           row->percent[2], row->percent[3]);
      }
      out += '\n';
    }
  }
  out += fmt::format("omitted rows: {}, unparseable labels: {}\n", table.omitted_rows, table.unparseable);
  return out;
}

std::string format_summary(const judge::Summary& summary) {
  if (!summary.mean) return "n/a";
  const double mean = *summary.mean;
  const double sd = summary.sd.value_or(0.0);
  return fmt::format("{:.2f} ± {:.2f} [{:.2f};{:.2f}]", mean, sd, std::max(1.0, mean - sd),
                     std::min(5.0, mean + sd));
}

std::string render_answer_report(const judge::AnswerReport& report) {
  const std::string cells[] = {
      format_summary(report.faithfulness),
      format_summary(report.relevance),
      report.noise_applicable ? format_summary(report.noise_robustness) : std::string("n/a"),
      fmt::format("{}/{}", report.accuracy.correct, report.accuracy.total),
      fmt::format("{}/{}", report.accuracy_without_context.correct, report.accuracy_without_context.total),
  };
  constexpr std::size_t kWidth = 28;
  std::string header;
  std::string values;
  for (std::size_t i = 0; i < std::size(cells); ++i) {
    const char* sep = i + 1 < std::size(cells) ? " | " : "\n";
    header += pad(kAnswerColumns[i], kWidth) + sep;
    values += pad(cells[i], kWidth) + sep;
  }
  return header + values +
         fmt::format("items: {}, skipped with context: {}, skipped without context: {}\n", report.items,
                     report.skipped_with_context, report.skipped_without_context);
}

std::string render_classifier(std::span<const rerank::ClassifierReport> reports) {
  std::vector<std::string> subsets;
  std::vector<std::string> backends;
  for (const auto& r : reports) {
    if (std::find(subsets.begin(), subsets.end(), r.subset) == subsets.end()) subsets.push_back(r.subset);
    if (std::find(backends.begin(), backends.end(), r.backend_id) == backends.end()) backends.push_back(r.backend_id);
  }
  auto find = [&](const std::string& subset, const std::string& backend) -> const rerank::ClassifierReport* {
    for (const auto& r : reports) {
      if (r.subset == subset && r.backend_id == backend) return &r;
    }
    return nullptr;
  };

  std::string out = fmt::format("{:<18}{:<20}", "Setting", "Label");
  for (const auto& b : backends) out += fmt::format("| {:<29}", b);
  out += '\n';
  out += fmt::format("{:<18}{:<20}", "", "");
  for (std::size_t i = 0; i < backends.size(); ++i) {
    out += fmt::format("| {:>9} {:>9} {:>9} ", "Precision", "Recall", "F1-Score");
  }
  out += '\n';

  for (const auto& subset : subsets) {
    const std::pair<const char*, const metrics::LabelMetrics metrics::ClassifierMetrics::*> rows[] = {
        {"Irrelevant Context", &metrics::ClassifierMetrics::irrelevant},
        {"Relevant Context", &metrics::ClassifierMetrics::relevant},
        {"Macro Avg", &metrics::ClassifierMetrics::macro},
    };
    bool first = true;
    for (const auto& [label, member] : rows) {
      out += fmt::format("{:<18}{:<20}", first ? subset : "", label);
      first = false;
      for (const auto& b : backends) {
        const auto* r = find(subset, b);
        if (r == nullptr) {
          out += fmt::format("| {:>9} {:>9} {:>9} ", "-", "-", "-");
          continue;
        }
        const auto& m = r->metrics.*member;
        out += fmt::format("| {:>9} {:>9} {:>9} ", format_fraction(m.precision), format_fraction(m.recall),
                           format_fraction(m.f1));
      }
      out += '\n';
    }
    out += fmt::format("{:<18}{:<20}", "", "Accuracy");
    for (const auto& b : backends) {
      const auto* r = find(subset, b);
      out += fmt::format("| {:^29} ", r == nullptr ? std::string("-") : format_fraction(r->metrics.accuracy));
    }
    out += '\n';
    for (const auto& b : backends) {
      if (const auto* r = find(subset, b); r != nullptr && r->skipped > 0) {
        out += fmt::format("{:<18}{} skipped items for {}\n", "", r->skipped, b);
      }
    }
  }
  return out;
}

}  // namespace rageval::report
