#include <doctest.h>

#include <random>
#include <sstream>

#include "nepner/error.hpp"
#include "nepner/promptkit.hpp"

using namespace nepner;

namespace {

Sentence split(const std::string& text) {
  Sentence s;
  std::istringstream in(text);
  for (std::string t; in >> t;) s.tokens.push_back(t);
  return s;
}

std::size_t count(const std::string& hay, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = hay.find(needle); pos != std::string::npos; pos = hay.find(needle, pos + needle.size())) ++n;
  return n;
}

const auto ORG = EntityType::kOrganization;

// Example and test sentence of the ORGANIZATION prompt figures.
const std::string kExample =
    "तर, भारत को राष्ट्रिय टोली बाट खेलि सकेका खेलाडी लाई बिसिसिआई ले अन्य देश को लागि मा खेल्ने "
    "अनुमति दिंदैन।";
const std::string kExampleOut =
    "तर, @@भारत## को राष्ट्रिय टोली बाट खेलि सकेका खेलाडी लाई @@बिसिसिआई## ले अन्य देश को लागि मा "
    "खेल्ने अनुमति दिंदैन।";
const std::string kTest = "अंक तालिका मा युएइ शीर्षस्थान मा छ भने नेपाल दोस्रो स्थान मा छ।";

std::vector<FewShotExample> org_example() {
  return {{split(kExample), {{1, 2, ORG}, {10, 11, ORG}}}};
}

}  // namespace

TEST_CASE("annotate places delimiters flush against tokens") {
  auto s = split("अंक तालिका मा युएइ शीर्षस्थान मा छ भने नेपाल दोस्रो स्थान मा छ ।");
  CHECK(annotate_with_delimiters(s, {{3, 4, ORG}, {8, 9, ORG}}) ==
        "अंक तालिका मा @@युएइ## शीर्षस्थान मा छ भने @@नेपाल## दोस्रो स्थान मा छ ।");
  CHECK(annotate_with_delimiters(s, {}) == s.text());
  CHECK(annotate_with_delimiters(split("t0 t1 t2"), {{0, 3, ORG}}) == "@@t0 t1 t2##");
  CHECK_THROWS_AS(annotate_with_delimiters(split("a b c"), {{0, 2, ORG}, {1, 3, ORG}}), Error);
}

TEST_CASE("annotate round trip") {
  std::mt19937 rng(3);
  for (int iter = 0; iter < 500; ++iter) {
    Sentence s;
    std::size_t n = 1 + rng() % 12;
    for (std::size_t i = 0; i < n; ++i) s.tokens.push_back("क" + std::to_string(rng() % 50));
    std::vector<EntitySpan> spans;
    for (std::size_t pos = 0; pos < n;) {
      pos += rng() % 3;
      if (pos >= n) break;
      auto end = std::min(n, pos + 1 + rng() % 3);
      spans.push_back({pos, end, ORG});
      pos = end;
    }
    auto text = annotate_with_delimiters(s, spans);
    for (const char* d : {"@@", "##"}) {
      for (auto p = text.find(d); p != std::string::npos; p = text.find(d)) text.erase(p, 2);
    }
    REQUIRE(split(text).tokens == s.tokens);
  }
}

TEST_CASE("english organization prompt with one example") {
  auto spec = render_ner_prompt(PromptTemplates::defaults(PromptLanguage::kEnglish),
                                PromptLanguage::kEnglish, ORG, org_example(), split(kTest));
  const std::string expected =
      "The task is to label Organization entities in the given Nepali sentence. Below are some "
      "examples with Input and Output pairs. For the prediction, you should generate the output in "
      "the same format as in the examples. Do not give any explanations.\n"
      "Input: " + kExample + "\n"
      "Output: " + kExampleOut + "\n"
      "Now predict the output for the following sentence.\n"
      "Input: " + kTest;
  CHECK(spec.rendered == expected);
  CHECK(spec.k == 1);
  CHECK(count(spec.rendered, "Input:") == 2);
}

TEST_CASE("nepali organization prompt with one example") {
  auto spec = render_ner_prompt(PromptTemplates::defaults(PromptLanguage::kNepali),
                                PromptLanguage::kNepali, ORG, org_example(), split(kTest));
  const std::string expected =
      "गरिनुपर्ने काम भनेको दिइएको नेपाली वाक्यमा सङ्घ संस्थाको नामको नामलाई @@ ## भित्र लेबल गर्नु हो। "
      "तल वाक्यलाई लेबल गर्दा उदाहरणको जस्तै ढाँचामा मात्र गर्नुहोस्। कुनै थप व्याख्या नगर्नुहोस्।\n"
      "उदाहरणहरू:\n"
      "वाक्य: " + kExample + "\n"
      "नतिजा: " + kExampleOut + "\n"
      "अब तल दिइएको वाक्यलाई लेबल गर्नुहोस्।\n"
      "वाक्य: " + kTest;
  CHECK(spec.rendered == expected);
  CHECK(count(spec.rendered, "वाक्य:") == 2);
}

TEST_CASE("zero shot prompt carries the directive and no example block") {
  auto spec = render_ner_prompt(PromptTemplates::defaults(PromptLanguage::kEnglish),
                                PromptLanguage::kEnglish, EntityType::kPerson, {}, split(kTest));
  CHECK(spec.rendered.rfind("The task is to label Person entities", 0) == 0);
  CHECK(spec.rendered.find("Do not give any explanations. Output the whole sentence and enclose the "
                           "entity within @@ and ##.\nNow predict") != std::string::npos);
  CHECK(count(spec.rendered, "Input:") == 1);
  CHECK(spec.rendered.find("Output:") == std::string::npos);
  CHECK(spec.k == 0);
}

TEST_CASE("k examples give k+1 input markers and the test sentence once at the end") {
  std::vector<FewShotExample> ex;
  for (int i = 0; i < 10; ++i) ex.push_back({split("उदाहरण " + std::to_string(i) + " काठमाडौं"), {{2, 3, EntityType::kLocation}}});
  for (auto lang : {PromptLanguage::kEnglish, PromptLanguage::kNepali}) {
    auto t = PromptTemplates::defaults(lang);
    auto spec = render_ner_prompt(t, lang, EntityType::kLocation, ex, split("परीक्षण वाक्य यहाँ"));
    CHECK(count(spec.rendered, lang == PromptLanguage::kEnglish ? "Input:" : "वाक्य:") == 11);
    CHECK(count(spec.rendered, "परीक्षण वाक्य यहाँ") == 1);
    CHECK(spec.rendered.size() >= std::string("परीक्षण वाक्य यहाँ").size());
    CHECK(spec.rendered.substr(spec.rendered.size() - std::string("परीक्षण वाक्य यहाँ").size()) ==
          "परीक्षण वाक्य यहाँ");
    // deterministic
    CHECK(render_ner_prompt(t, lang, EntityType::kLocation, ex, split("परीक्षण वाक्य यहाँ")).rendered ==
          spec.rendered);
  }
}

TEST_CASE("example spans of another type are rejected") {
  std::vector<FewShotExample> ex{{split("a b"), {{0, 1, EntityType::kPerson}}}};
  CHECK_THROWS_AS(render_ner_prompt(PromptTemplates::defaults(PromptLanguage::kEnglish),
                                    PromptLanguage::kEnglish, ORG, ex, split("c d")),
                  Error);
}

TEST_CASE("verification question for an event") {
  auto s = split("रियल शीर्ष स्थान को बासिलोना भन्दा १० तथा एट्लेटिको मड्रिड भन्दा ५ अंक ले पछि छ ।");
  auto q = render_verification_prompt(PromptTemplates::defaults(PromptLanguage::kEnglish), s,
                                      "बासिलोना", EntityType::kEvent);
  CHECK(q ==
        "For the sentence: 'रियल शीर्ष स्थान को बासिलोना भन्दा १० तथा एट्लेटिको मड्रिड भन्दा ५ अंक ले "
        "पछि छ ।'?\nIs the word 'बासिलोना' in the given sentence a Event entity? Please answer with Yes "
        "or No. No explanation is needed.");
}

TEST_CASE("verification question for a person quotes inputs verbatim") {
  auto t = PromptTemplates::defaults(PromptLanguage::kEnglish);
  auto s = split("O'Brien met राम today");
  auto q = render_verification_prompt(t, s, "O'Brien", EntityType::kPerson);
  CHECK(q.find("a Person entity?") != std::string::npos);
  CHECK(q.find(s.text()) != std::string::npos);
  CHECK(q.find("'O'Brien'") != std::string::npos);
  CHECK(count(q, "?") == 2);  // the sentence line and the one question
}

TEST_CASE("substitute is single pass and keeps unknown placeholders") {
  CHECK(substitute("{a} {b} {c}", {{"a", "{b}"}, {"b", "x"}}) == "{b} x {c}");
  CHECK(substitute("{a", {{"a", "x"}}) == "{a");
}

TEST_CASE("lexicon and asset loading") {
  auto t = PromptTemplates::defaults(PromptLanguage::kNepali);
  CHECK(t.entity_name(EntityType::kPerson) == "व्यक्ति");
  CHECK(t.entity_name(ORG) == "सङ्घ संस्था");
  auto partial = PromptTemplates::from_json_text(R"({"entity_names": {"PERSON": "मान्छे"}})", PromptLanguage::kNepali);
  CHECK(partial.entity_name(EntityType::kPerson) == "मान्छे");
  CHECK(partial.example_block == t.example_block);
  auto round = PromptTemplates::from_json_text(t.to_json_text(), PromptLanguage::kNepali);
  CHECK(round.ner_template == t.ner_template);
  t.entity_names[index_of(EntityType::kDate)].clear();
  try {
    (void)t.entity_name(EntityType::kDate);
    FAIL("expected a config error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kConfig);
  }
  CHECK_THROWS_AS(PromptTemplates::from_json_text("{not json", PromptLanguage::kEnglish), Error);
}

TEST_CASE("language names") {
  CHECK(parse_prompt_language("english") == PromptLanguage::kEnglish);
  CHECK(parse_prompt_language("nepali") == PromptLanguage::kNepali);
  CHECK_FALSE(parse_prompt_language("hindi").has_value());
}
