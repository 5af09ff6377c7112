#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "nepner/corpus.hpp"

namespace nepner {

struct SpanSet {
  std::string sentence_id;
  std::vector<EntitySpan> spans;
};

struct Counts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
};

// Precision/recall/F1 with 0/0 defined as 0.
struct Metrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::uint64_t support = 0;  // gold spans = tp + fn
  Counts counts;

  static Metrics from_counts(const Counts& c);
};

struct EvalReport {
  std::array<Metrics, kNumEntityTypes> per_type;
  Metrics micro;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;  // unweighted mean over all five types
  std::uint64_t sentences = 0;
  std::uint64_t failed_decodes = 0;

  const Metrics& of(EntityType t) const { return per_type[index_of(t)]; }
};

// Exact (start, end, type) matching. gold and pred must list the same
// sentence ids in the same order; duplicates within a sentence count once.
EvalReport score(const std::vector<SpanSet>& gold, const std::vector<SpanSet>& pred);

// Each type scored on its own single-type view of the inputs.
EvalReport entitywise_score(const std::map<EntityType, std::vector<SpanSet>>& gold,
                            const std::map<EntityType, std::vector<SpanSet>>& pred);

// Builds the report from per-type counts (micro = summed counts).
EvalReport report_from_counts(const std::array<Counts, kNumEntityTypes>& counts);

// --- formatting -----------------------------------------------------------------

std::string fixed(double v, int decimals);

// | Entity | Pre. | Rec. | F1 | Support |, rows in alphabetical type order.
std::string format_per_type_markdown(const EvalReport& report);
// Two-block self-verification comparison with a Micro avg row.
std::string format_verification_markdown(const EvalReport& without, const EvalReport& with);
// mode,entity,precision,recall,f1,support,tp,fp,fn
std::string format_report_csv_rows(const std::string& mode, const EvalReport& report);
inline constexpr const char* kReportCsvHeader = "mode,entity,precision,recall,f1,support,tp,fp,fn\n";

}  // namespace nepner
