#include "nepner/evalkit.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <sstream>

#include "nepner/error.hpp"

namespace nepner {

namespace {

double ratio(std::uint64_t num, std::uint64_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

void check_alignment(const std::vector<SpanSet>& gold, const std::vector<SpanSet>& pred) {
  if (gold.size() != pred.size()) {
    throw invalid_argument("score: " + std::to_string(gold.size()) + " gold sentences vs " +
                           std::to_string(pred.size()) + " predicted");
  }
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (gold[i].sentence_id != pred[i].sentence_id) {
      throw invalid_argument("score: sentence id mismatch at position " + std::to_string(i) +
                             " ('" + gold[i].sentence_id + "' vs '" + pred[i].sentence_id + "')");
    }
  }
}

// Alphabetical, as in the per-type result tables.
constexpr std::array<EntityType, kNumEntityTypes> kDisplayOrder = {
    EntityType::kDate, EntityType::kEvent, EntityType::kLocation, EntityType::kOrganization,
    EntityType::kPerson};

}  // namespace

Metrics Metrics::from_counts(const Counts& c) {
  Metrics m;
  m.counts = c;
  m.support = c.tp + c.fn;
  m.precision = ratio(c.tp, c.tp + c.fp);
  m.recall = ratio(c.tp, c.tp + c.fn);
  m.f1 = (m.precision + m.recall) == 0.0 ? 0.0
                                         : 2.0 * m.precision * m.recall / (m.precision + m.recall);
  return m;
}

EvalReport report_from_counts(const std::array<Counts, kNumEntityTypes>& counts) {
  EvalReport r;
  Counts total;
  for (std::size_t i = 0; i < kNumEntityTypes; ++i) {
    r.per_type[i] = Metrics::from_counts(counts[i]);
    total.tp += counts[i].tp;
    total.fp += counts[i].fp;
    total.fn += counts[i].fn;
    r.macro_precision += r.per_type[i].precision;
    r.macro_recall += r.per_type[i].recall;
    r.macro_f1 += r.per_type[i].f1;
  }
  r.macro_precision /= kNumEntityTypes;
  r.macro_recall /= kNumEntityTypes;
  r.macro_f1 /= kNumEntityTypes;
  r.micro = Metrics::from_counts(total);
  return r;
}

EvalReport score(const std::vector<SpanSet>& gold, const std::vector<SpanSet>& pred) {
  check_alignment(gold, pred);
  std::array<Counts, kNumEntityTypes> counts{};
  std::vector<EntitySpan> g, p;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    g = gold[i].spans;
    p = pred[i].spans;
    std::sort(g.begin(), g.end());
    g.erase(std::unique(g.begin(), g.end()), g.end());
    std::sort(p.begin(), p.end());
    p.erase(std::unique(p.begin(), p.end()), p.end());
    // Sorted merge walk.
    std::size_t a = 0, b = 0;
    while (a < g.size() || b < p.size()) {
      if (b == p.size() || (a < g.size() && g[a] < p[b])) {
        ++counts[index_of(g[a++].type)].fn;
      } else if (a == g.size() || p[b] < g[a]) {
        ++counts[index_of(p[b++].type)].fp;
      } else {
        ++counts[index_of(g[a].type)].tp;
        ++a;
        ++b;
      }
    }
  }
  auto report = report_from_counts(counts);
  report.sentences = gold.size();
  return report;
}

EvalReport entitywise_score(const std::map<EntityType, std::vector<SpanSet>>& gold,
                            const std::map<EntityType, std::vector<SpanSet>>& pred) {
  std::array<Counts, kNumEntityTypes> counts{};
  std::uint64_t sentences = 0;
  for (auto type : kAllEntityTypes) {
    auto g = gold.find(type);
    auto p = pred.find(type);
    if (g == gold.end() && p == pred.end()) continue;
    static const std::vector<SpanSet> kEmpty;
    const auto& gs = g == gold.end() ? kEmpty : g->second;
    const auto& ps = p == pred.end() ? kEmpty : p->second;
    auto restrict = [type](const std::vector<SpanSet>& in) {
      std::vector<SpanSet> out;
      out.reserve(in.size());
      for (const auto& s : in) out.push_back({s.sentence_id, filter_spans(s.spans, type)});
      return out;
    };
    auto single = score(restrict(gs), restrict(ps));
    counts[index_of(type)] = single.of(type).counts;
    sentences = std::max<std::uint64_t>(sentences, single.sentences);
  }
  auto report = report_from_counts(counts);
  report.sentences = sentences;
  return report;
}

std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

std::string format_per_type_markdown(const EvalReport& report) {
  std::ostringstream out;
  out << "| Entity | Pre. | Rec. | F1 | Support |\n";
  out << "|---|---:|---:|---:|---:|\n";
  for (auto t : kDisplayOrder) {
    const auto& m = report.of(t);
    out << "| " << long_name(t) << " | " << fixed(m.precision, 2) << " | " << fixed(m.recall, 2)
        << " | " << fixed(m.f1, 2) << " | " << m.support << " |\n";
  }
  return out.str();
}

std::string format_verification_markdown(const EvalReport& without, const EvalReport& with) {
  std::ostringstream out;
  out << "| Entity | Pre. (without) | Rec. (without) | F1 (without) | Pre. (with) | Rec. (with) | F1 (with) |\n";
  out << "|---|---:|---:|---:|---:|---:|---:|\n";
  auto cells = [&](const Metrics& m) {
    out << " | " << fixed(m.precision, 2) << " | " << fixed(m.recall, 2) << " | " << fixed(m.f1, 2);
  };
  for (auto t : kDisplayOrder) {
    out << "| " << long_name(t);
    cells(without.of(t));
    cells(with.of(t));
    out << " |\n";
  }
  out << "| Micro avg";
  cells(without.micro);
  cells(with.micro);
  out << " |\n";
  return out.str();
}

std::string format_report_csv_rows(const std::string& mode, const EvalReport& report) {
  std::ostringstream out;
  auto row = [&](std::string_view entity, const Metrics& m) {
    out << mode << ',' << entity << ',' << fixed(m.precision, 6) << ',' << fixed(m.recall, 6) << ','
        << fixed(m.f1, 6) << ',' << m.support << ',' << m.counts.tp << ',' << m.counts.fp << ','
        << m.counts.fn << '\n';
  };
  for (auto t : kDisplayOrder) row(long_name(t), report.of(t));
  row("MICRO", report.micro);
  out << mode << ",MACRO," << fixed(report.macro_precision, 6) << ',' << fixed(report.macro_recall, 6)
      << ',' << fixed(report.macro_f1, 6) << ",,,,\n";
  return out.str();
}

}  // namespace nepner
