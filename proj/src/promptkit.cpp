#include "nepner/promptkit.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "nepner/error.hpp"

namespace nepner {

namespace detail {
extern const std::string_view kEnglishPromptAsset;
extern const std::string_view kNepaliPromptAsset;
}  // namespace detail

namespace {

void apply_json(PromptTemplates& t, const nlohmann::json& j) {
  auto take = [&](const char* key, std::string& field) {
    if (!j.contains(key)) return;
    if (!j[key].is_string()) throw config_error(std::string("prompt asset: '") + key + "' must be a string");
    field = j[key].get<std::string>();
  };
  take("ner_template", t.ner_template);
  take("examples_header", t.examples_header);
  take("example_block", t.example_block);
  take("zero_shot_directive", t.zero_shot_directive);
  take("verification_template", t.verification_template);
  if (j.contains("entity_names")) {
    const auto& names = j["entity_names"];
    if (!names.is_object()) throw config_error("prompt asset: 'entity_names' must be an object");
    for (const auto& [key, value] : names.items()) {
      auto type = parse_entity_type(key);
      if (!type) throw config_error("prompt asset: unknown entity type '" + key + "'");
      if (!value.is_string()) throw config_error("prompt asset: entity name for '" + key + "' must be a string");
      t.entity_names[index_of(*type)] = value.get<std::string>();
    }
  }
}

nlohmann::json parse_asset(std::string_view text, const std::string& origin) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw config_error("prompt asset " + origin + ": " + e.what());
  }
}

}  // namespace

std::string_view to_string(PromptLanguage lang) {
  return lang == PromptLanguage::kEnglish ? "english" : "nepali";
}

std::optional<PromptLanguage> parse_prompt_language(std::string_view s) {
  if (s == "english" || s == "en" || s == "ENGLISH") return PromptLanguage::kEnglish;
  if (s == "nepali" || s == "ne" || s == "NEPALI") return PromptLanguage::kNepali;
  return std::nullopt;
}

PromptTemplates PromptTemplates::defaults(PromptLanguage lang) {
  PromptTemplates t;
  auto text = lang == PromptLanguage::kEnglish ? detail::kEnglishPromptAsset
                                               : detail::kNepaliPromptAsset;
  apply_json(t, parse_asset(text, "<built-in>"));
  return t;
}

PromptTemplates PromptTemplates::from_json_text(std::string_view json, PromptLanguage lang) {
  auto t = defaults(lang);
  apply_json(t, parse_asset(json, "<inline>"));
  return t;
}

PromptTemplates PromptTemplates::load(const std::string& path, PromptLanguage lang) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open prompt asset '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  auto t = defaults(lang);
  apply_json(t, parse_asset(buf.str(), "'" + path + "'"));
  return t;
}

std::string PromptTemplates::to_json_text() const {
  nlohmann::ordered_json j;
  j["ner_template"] = ner_template;
  j["examples_header"] = examples_header;
  j["example_block"] = example_block;
  j["zero_shot_directive"] = zero_shot_directive;
  j["verification_template"] = verification_template;
  auto names = nlohmann::ordered_json::object();
  for (auto t : kAllEntityTypes) {
    if (!entity_names[index_of(t)].empty()) names[std::string(long_name(t))] = entity_names[index_of(t)];
  }
  j["entity_names"] = names;
  return j.dump(2);
}

const std::string& PromptTemplates::entity_name(EntityType t) const {
  const auto& name = entity_names[index_of(t)];
  if (name.empty()) {
    throw config_error("prompt lexicon has no entity name for " + std::string(long_name(t)));
  }
  return name;
}

std::string annotate_with_delimiters(const Sentence& sentence,
                                     const std::vector<EntitySpan>& spans) {
  // spans_to_bio does the range and overlap checks.
  auto bio = spans_to_bio(sentence, spans);
  const auto n = sentence.tokens.size();
  std::string out;
  for (std::size_t i = 0; i < n; ++i) {
    if (i) out += ' ';
    if (bio[i].kind == BioTag::Kind::kBegin) out += "@@";
    out += sentence.tokens[i];
    bool span_ends = !bio[i].is_outside() &&
                     (i + 1 == n || bio[i + 1].kind != BioTag::Kind::kInside);
    if (span_ends) out += "##";
  }
  return out;
}

std::string substitute(std::string_view tmpl,
                       const std::vector<std::pair<std::string_view, std::string_view>>& values) {
  std::string out;
  out.reserve(tmpl.size());
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl[i] == '{') {
      auto close = tmpl.find('}', i + 1);
      if (close != std::string_view::npos) {
        auto name = tmpl.substr(i + 1, close - i - 1);
        bool replaced = false;
        for (const auto& [key, value] : values) {
          if (key == name) {
            out += value;
            replaced = true;
            break;
          }
        }
        if (replaced) {
          i = close + 1;
          continue;
        }
      }
    }
    out += tmpl[i++];
  }
  return out;
}

PromptSpec render_ner_prompt(const PromptTemplates& templates, PromptLanguage language,
                             EntityType etype, std::vector<FewShotExample> examples,
                             const Sentence& test_sentence) {
  const auto& name = templates.entity_name(etype);

  std::string example_text;
  if (examples.empty()) {
    example_text = templates.zero_shot_directive;
  } else {
    example_text = templates.examples_header;
    for (const auto& ex : examples) {
      for (const auto& s : ex.spans) {
        if (s.type != etype) {
          throw invalid_argument("few-shot example " + ex.sentence.sentence_id +
                                 " carries a span of type " + std::string(long_name(s.type)) +
                                 " in a " + std::string(long_name(etype)) + " prompt");
        }
      }
      auto input = ex.sentence.text();
      auto output = annotate_with_delimiters(ex.sentence, ex.spans);
      example_text += substitute(templates.example_block, {{"input", input}, {"output", output}});
    }
  }

  PromptSpec spec;
  spec.language = language;
  spec.etype = etype;
  spec.k = examples.size();
  spec.test_sentence = test_sentence;
  auto test_text = test_sentence.text();
  spec.rendered = substitute(templates.ner_template, {{"entity_name", name},
                                                      {"examples", example_text},
                                                      {"test_sentence", test_text}});
  spec.examples = std::move(examples);
  return spec;
}

std::string render_verification_prompt(const PromptTemplates& templates,
                                       const Sentence& sentence, std::string_view surface,
                                       EntityType etype) {
  auto text = sentence.text();
  return substitute(templates.verification_template,
                    {{"sentence", text}, {"surface", surface},
                     {"entity_name", templates.entity_name(etype)}});
}

}  // namespace nepner
