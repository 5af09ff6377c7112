#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "nepner/corpus.hpp"
#include "nepner/gateway.hpp"
#include "nepner/promptkit.hpp"

namespace nepner {

enum class Verdict { kYes, kNo, kUnparseable };

std::string_view to_string(Verdict v);

// Trims whitespace and trailing punctuation, then matches a leading
// "yes"/"no" word case-insensitively.
Verdict parse_yes_no(std::string_view text);

struct VerificationOutcome {
  EntitySpan span;
  std::string answer_raw;
  Verdict verdict = Verdict::kUnparseable;
  bool retained = true;
  std::string diagnostic;  // set for unparseable answers and gateway errors
};

struct VerifyOptions {
  std::string model_id;
  double temperature = 0.0;
  int max_output_tokens = 8;
};

// The whitespace-joined tokens of the span.
std::string span_surface(const Sentence& sentence, const EntitySpan& span);

// One request per span. NO discards; YES and UNPARSEABLE retain; a gateway
// error retains the span with a diagnostic.
std::vector<VerificationOutcome> verify_predictions(const Sentence& sentence,
                                                    const std::vector<EntitySpan>& spans,
                                                    Gateway& gateway, EntityType etype,
                                                    const PromptTemplates& templates,
                                                    const VerifyOptions& options);

std::vector<EntitySpan> retained_spans(const std::vector<VerificationOutcome>& outcomes);

}  // namespace nepner
