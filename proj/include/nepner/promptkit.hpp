#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "nepner/corpus.hpp"

namespace nepner {

enum class PromptLanguage { kEnglish, kNepali };

std::string_view to_string(PromptLanguage lang);
std::optional<PromptLanguage> parse_prompt_language(std::string_view s);

struct FewShotExample {
  Sentence sentence;
  std::vector<EntitySpan> spans;  // all of the prompt's entity type
};

// Text assets for one prompt language. Placeholders use `{name}` syntax:
//   ner_template           {entity_name} {examples} {test_sentence}
//   example_block          {input} {output}
//   verification_template  {sentence} {surface} {entity_name}
// {examples} expands to examples_header followed by one example_block per
// example, or to zero_shot_directive when there are no examples.
struct PromptTemplates {
  std::string ner_template;
  std::string examples_header;
  std::string example_block;
  std::string zero_shot_directive;
  std::string verification_template;
  std::array<std::string, kNumEntityTypes> entity_names;  // empty = missing

  static PromptTemplates defaults(PromptLanguage lang);
  // JSON document; keys absent from the file keep the built-in default.
  static PromptTemplates load(const std::string& path, PromptLanguage lang);
  static PromptTemplates from_json_text(std::string_view json, PromptLanguage lang);
  std::string to_json_text() const;

  // Throws Error(kConfig) when the lexicon has no name for the type.
  const std::string& entity_name(EntityType t) const;
};

struct PromptSpec {
  PromptLanguage language = PromptLanguage::kEnglish;
  EntityType etype = EntityType::kLocation;
  std::size_t k = 0;
  std::vector<FewShotExample> examples;
  Sentence test_sentence;
  std::string rendered;
};

// Whitespace-joined tokens with "@@" glued to the first token and "##" to
// the last token of every span. Throws Error(kInvalid) on overlap.
std::string annotate_with_delimiters(const Sentence& sentence,
                                     const std::vector<EntitySpan>& spans);

// Single pass: text substituted into a placeholder is never re-scanned.
// Unknown placeholders are left verbatim.
std::string substitute(std::string_view tmpl,
                       const std::vector<std::pair<std::string_view, std::string_view>>& values);

PromptSpec render_ner_prompt(const PromptTemplates& templates, PromptLanguage language,
                             EntityType etype, std::vector<FewShotExample> examples,
                             const Sentence& test_sentence);

std::string render_verification_prompt(const PromptTemplates& templates,
                                       const Sentence& sentence, std::string_view surface,
                                       EntityType etype);

}  // namespace nepner
