#include "nepner/verify.hpp"

#include <cctype>

#include "nepner/log.hpp"

namespace nepner {

std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::kYes:
      return "YES";
    case Verdict::kNo:
      return "NO";
    case Verdict::kUnparseable:
      return "UNPARSEABLE";
  }
  return "UNPARSEABLE";
}

Verdict parse_yes_no(std::string_view text) {
  auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
  auto is_punct = [](unsigned char c) { return std::ispunct(c) != 0; };
  while (!text.empty() && is_space(text.front())) text.remove_prefix(1);
  while (!text.empty() && (is_space(text.back()) || is_punct(text.back()))) text.remove_suffix(1);

  auto word_is = [&](std::string_view word) {
    if (text.size() < word.size()) return false;
    for (std::size_t i = 0; i < word.size(); ++i) {
      if (std::tolower(static_cast<unsigned char>(text[i])) != word[i]) return false;
    }
    // "Not sure" must not read as "No".
    return text.size() == word.size() || !std::isalnum(static_cast<unsigned char>(text[word.size()]));
  };
  if (word_is("yes")) return Verdict::kYes;
  if (word_is("no")) return Verdict::kNo;
  return Verdict::kUnparseable;
}

std::string span_surface(const Sentence& sentence, const EntitySpan& span) {
  std::string out;
  for (auto i = span.start; i < span.end && i < sentence.tokens.size(); ++i) {
    if (i != span.start) out += ' ';
    out += sentence.tokens[i];
  }
  return out;
}

std::vector<VerificationOutcome> verify_predictions(const Sentence& sentence,
                                                    const std::vector<EntitySpan>& spans,
                                                    Gateway& gateway, EntityType etype,
                                                    const PromptTemplates& templates,
                                                    const VerifyOptions& options) {
  std::vector<VerificationOutcome> outcomes;
  outcomes.reserve(spans.size());
  for (const auto& span : spans) {
    VerificationOutcome out;
    out.span = span;
    CompletionRequest req;
    req.model_id = options.model_id;
    req.temperature = options.temperature;
    req.max_output_tokens = options.max_output_tokens;
    req.prompt = render_verification_prompt(templates, sentence, span_surface(sentence, span), etype);
    req.request_tag = make_request_tag({sentence.sentence_id, etype, "verify", span});
    try {
      auto resp = gateway.complete(req, "verify");
      out.answer_raw = resp.text;
      out.verdict = parse_yes_no(resp.text);
      out.retained = out.verdict != Verdict::kNo;
      if (out.verdict == Verdict::kUnparseable) {
        out.diagnostic = "unparseable verification answer; span retained";
        log_warning("[" + req.request_tag + "] " + out.diagnostic);
      }
    } catch (const std::exception& e) {
      out.verdict = Verdict::kUnparseable;
      out.retained = true;
      out.diagnostic = std::string("verification request failed; span retained: ") + e.what();
      log_warning(out.diagnostic);
    }
    outcomes.push_back(std::move(out));
  }
  return outcomes;
}

std::vector<EntitySpan> retained_spans(const std::vector<VerificationOutcome>& outcomes) {
  std::vector<EntitySpan> out;
  for (const auto& o : outcomes) {
    if (o.retained) out.push_back(o.span);
  }
  return out;
}

}  // namespace nepner
