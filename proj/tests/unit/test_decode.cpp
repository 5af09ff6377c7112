#include <doctest.h>

#include <random>
#include <set>
#include <sstream>

#include "nepner/decode.hpp"
#include "nepner/promptkit.hpp"

using namespace nepner;

namespace {

Sentence split(const std::string& text) {
  Sentence s;
  std::istringstream in(text);
  for (std::string t; in >> t;) s.tokens.push_back(t);
  return s;
}

const auto ORG = EntityType::kOrganization;

const std::string kStockSentence =
    "नेपाल स्टक एक्सचेन्ज को कारोबार परिपाटी अनुसार यो कारोबार राफसाफ हुन ३ दिन लाग्छ र बिहीबार मात्र "
    "यस को भुक्तानी प्राप्त हुन्छ ।";

std::string surface(const Sentence& s, const EntitySpan& sp) {
  std::string out;
  for (auto i = sp.start; i < sp.end; ++i) out += (i == sp.start ? "" : " ") + s.tokens[i];
  return out;
}

}  // namespace

TEST_CASE("segment extraction") {
  auto d = extract_delimited_segments(
      "अंक तालिका मा @@युएइ## शीर्षस्थान मा छ भने @@नेपाल## दोस्रो स्थान मा छ।");
  CHECK(d.clean_text == "अंक तालिका मा युएइ शीर्षस्थान मा छ भने नेपाल दोस्रो स्थान मा छ।");
  REQUIRE(d.segments.size() == 2);
  CHECK(d.clean_text.substr(d.segments[0].begin, d.segments[0].end - d.segments[0].begin) == "युएइ");
  CHECK(d.clean_text.substr(d.segments[1].begin, d.segments[1].end - d.segments[1].begin) == "नेपाल");

  auto plain = extract_delimited_segments("abc");
  CHECK(plain.clean_text == "abc");
  CHECK(plain.segments.empty());
  CHECK(plain.diagnostics.empty());

  auto open = extract_delimited_segments("@@x yz");
  CHECK(open.clean_text == "x yz");
  CHECK(open.segments.empty());
  CHECK(open.diagnostics.size() == 1);

  auto stray = extract_delimited_segments("a## b");
  CHECK(stray.clean_text == "a b");
  CHECK(stray.diagnostics.size() == 1);

  auto nested = extract_delimited_segments("@@a @@b## c");
  CHECK(nested.segments.size() == 1);
  CHECK(nested.clean_text == "a @@b c");
}

TEST_CASE("well-formed, over-marked and chatty answers") {
  auto s = split(kStockSentence);
  CHECK(s.tokens.size() == 23);

  auto gpt = decode_to_bio(
      s,
      "नेपाल @@स्टक एक्सचेन्ज## को कारोबार परिपाटी अनुसार यो कारोबार राफसाफ हुन ३ दिन लाग्छ र बिहीबार मात्र "
      "यस को भुक्तानी प्राप्त हुन्छ ।",
      ORG);
  CHECK(gpt.prediction.status == DecodeStatus::kExact);
  REQUIRE(gpt.prediction.spans.size() == 1);
  CHECK(gpt.prediction.spans[0] == EntitySpan{1, 3, ORG});
  CHECK(surface(s, gpt.prediction.spans[0]) == "स्टक एक्सचेन्ज");

  auto llama = decode_to_bio(s, "@@नेपाल स्टक एक्सचेन्ज## कारोबार परिपाटी##", ORG);
  CHECK(llama.prediction.status == DecodeStatus::kFailed);
  CHECK(llama.prediction.spans.empty());
  CHECK(to_string(llama.bio) == to_string(BioSequence(23, BioTag::outside())));

  auto mistral = decode_to_bio(
      s,
      "In this sentence, \"स्टक एक्सचेन्ज\" (Stock Exchange) is identified as an Organization entity and "
      "is labeled accordingly.",
      ORG);
  CHECK(mistral.prediction.status == DecodeStatus::kFailed);
}

TEST_CASE("few-shot example answer decodes to two organizations") {
  auto s = split("अंक तालिका मा युएइ शीर्षस्थान मा छ भने नेपाल दोस्रो स्थान मा छ।");
  auto r = decode_to_bio(s, "अंक तालिका मा @@युएइ## शीर्षस्थान मा छ भने @@नेपाल## दोस्रो स्थान मा छ।", ORG);
  CHECK(r.prediction.status == DecodeStatus::kExact);
  CHECK(to_string(r.bio) == "O O O B-ORG O O O O B-ORG O O O O");
  auto none = decode_to_bio(s, s.text(), ORG);
  CHECK(none.prediction.status == DecodeStatus::kExact);
  CHECK(none.prediction.spans.empty());
}

TEST_CASE("touching segments stay separate") {
  auto r = decode_to_bio(split("a b c"), "@@a## @@b## c", EntityType::kPerson);
  CHECK(r.prediction.spans ==
        std::vector<EntitySpan>{{0, 1, EntityType::kPerson}, {1, 2, EntityType::kPerson}});
}

TEST_CASE("mid-token delimiters") {
  auto s = split("नेपाल स्टक एक्सचेन्ज को");
  auto glued = decode_to_bio(s, "नेपाल@@स्टक एक्सचेन्ज## को", ORG);
  CHECK(glued.prediction.status != DecodeStatus::kFailed);
  CHECK(glued.prediction.spans == std::vector<EntitySpan>{{1, 3, ORG}});
  // segment inside a token widens to the token
  auto inner = decode_to_bio(split("काठमाडौंमा बैठक"), "काठमाडौं@@मा## बैठक", ORG);
  CHECK(inner.prediction.status == DecodeStatus::kExact);
  CHECK(inner.prediction.spans == std::vector<EntitySpan>{{0, 1, ORG}});
  CHECK_FALSE(inner.prediction.diagnostics.empty());
}

TEST_CASE("aligned recovery when the model drops a token") {
  auto s = split("a b c d e f g h i j");
  auto r = decode_to_bio(s, "a b @@c d## e f g h j", ORG);
  CHECK(r.prediction.status == DecodeStatus::kAligned);
  CHECK(r.prediction.spans == std::vector<EntitySpan>{{2, 4, ORG}});
  // a segment whose tokens are not all in the sentence is discarded
  auto partial = decode_to_bio(s, "a b @@c X## d e f g h i j", ORG);
  CHECK(partial.prediction.status == DecodeStatus::kAligned);
  CHECK(partial.prediction.spans.empty());
  // threshold is configurable
  auto strict = decode_to_bio(s, "a b @@c d## e f g h j", ORG, 0.95);
  CHECK(strict.prediction.status == DecodeStatus::kFailed);
}

TEST_CASE("overlapping decoded spans merge with a diagnostic") {
  // Same surface twice in the output maps to overlapping ranges after alignment widening.
  auto r = decode_to_bio(split("ab cd"), "@@a##@@b## cd", ORG);
  CHECK(r.prediction.spans == std::vector<EntitySpan>{{0, 1, ORG}});
  CHECK_FALSE(r.prediction.diagnostics.empty());
}

TEST_CASE("annotate then decode is exact for random span sets") {
  std::mt19937 rng(17);
  const std::vector<std::string> vocab{"नेपाल", "स्टक", "को", "मा", "ले", "।", "राम", "अंक", "a", "b,"};
  for (int iter = 0; iter < 1500; ++iter) {
    Sentence s;
    std::size_t n = 1 + rng() % 25;
    for (std::size_t i = 0; i < n; ++i) s.tokens.push_back(vocab[rng() % vocab.size()]);
    std::vector<EntitySpan> spans;
    for (std::size_t pos = 0; pos < n;) {
      pos += rng() % 4;
      if (pos >= n) break;
      auto end = std::min(n, pos + 1 + rng() % 3);
      spans.push_back({pos, end, ORG});
      pos = end;
    }
    auto r = decode_to_bio(s, annotate_with_delimiters(s, spans), ORG);
    REQUIRE(r.prediction.status == DecodeStatus::kExact);
    REQUIRE(r.prediction.spans == spans);
  }
}

TEST_CASE("deleting one non-entity token never yields wrong entity tokens") {
  std::mt19937 rng(23);
  const std::vector<std::string> vocab{"क", "ख", "ग", "घ", "ङ", "च", "छ", "ज", "झ", "ञ", "ट", "ठ"};
  int aligned = 0;
  for (int iter = 0; iter < 1000; ++iter) {
    Sentence s;
    std::size_t n = 6 + rng() % 20;
    for (std::size_t i = 0; i < n; ++i) s.tokens.push_back(vocab[rng() % vocab.size()]);
    std::vector<EntitySpan> spans;
    std::vector<bool> inside(n, false);
    for (std::size_t pos = 0; pos < n;) {
      pos += 1 + rng() % 4;
      if (pos >= n) break;
      auto end = std::min(n, pos + 1 + rng() % 2);
      spans.push_back({pos, end, ORG});
      for (auto i = pos; i < end; ++i) inside[i] = true;
      pos = end;
    }
    std::vector<std::size_t> outside;
    for (std::size_t i = 0; i < n; ++i) {
      if (!inside[i]) outside.push_back(i);
    }
    if (outside.empty()) continue;
    auto victim = outside[rng() % outside.size()];
    Sentence shorter = s;
    shorter.tokens.erase(shorter.tokens.begin() + static_cast<long>(victim));
    std::vector<EntitySpan> shifted;
    for (auto sp : spans) {
      if (sp.start > victim) {
        --sp.start;
        --sp.end;
      }
      shifted.push_back(sp);
    }
    auto corrupted = annotate_with_delimiters(shorter, shifted);
    auto r = decode_to_bio(s, corrupted, ORG);
    if (shorter.tokens == s.tokens) continue;
    REQUIRE(r.prediction.status != DecodeStatus::kExact);
    std::set<std::string> allowed;
    for (const auto& sp : spans) allowed.insert(surface(s, sp));
    for (const auto& sp : r.prediction.spans) {
      REQUIRE(sp.end <= n);
      REQUIRE(allowed.count(surface(s, sp)) == 1);
    }
    if (r.prediction.status == DecodeStatus::kAligned) ++aligned;
  }
  CHECK(aligned > 0);
}

TEST_CASE("lcs alignment") {
  std::vector<std::string_view> a{"x", "b", "c", "y"};
  std::vector<std::string> b{"a", "b", "c", "d"};
  auto pairs = lcs_alignment(a, b);
  REQUIRE(pairs.size() == 2);
  CHECK(pairs[0] == std::pair<std::size_t, std::size_t>{1, 1});
  CHECK(pairs[1] == std::pair<std::size_t, std::size_t>{2, 2});
  CHECK(lcs_alignment({}, b).empty());
}
