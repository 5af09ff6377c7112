#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "nepner/log.hpp"

namespace nepner {

// Declaration order is the default merge priority (highest first).
enum class EntityType : std::uint8_t { kLocation, kOrganization, kPerson, kDate, kEvent };

inline constexpr std::size_t kNumEntityTypes = 5;
inline constexpr std::array<EntityType, kNumEntityTypes> kAllEntityTypes = {
    EntityType::kLocation, EntityType::kOrganization, EntityType::kPerson, EntityType::kDate,
    EntityType::kEvent};

inline constexpr std::size_t index_of(EntityType t) { return static_cast<std::size_t>(t); }

// "LOC", "ORG", "PER", "DATE", "EVENT" -- the tag mnemonic.
std::string_view tag_name(EntityType t);
// "LOCATION", "ORGANIZATION", ... -- used in configs and reports.
std::string_view long_name(EntityType t);
// Accepts either the mnemonic or the long name.
std::optional<EntityType> parse_entity_type(std::string_view s);

struct Sentence {
  std::vector<std::string> tokens;
  std::string article_id;
  std::string sentence_id;

  std::string text() const;  // tokens joined by a single space
};

// Half-open token range [start, end).
struct EntitySpan {
  std::size_t start = 0;
  std::size_t end = 0;
  EntityType type = EntityType::kLocation;

  friend auto operator<=>(const EntitySpan&, const EntitySpan&) = default;
};

struct BioTag {
  enum class Kind : std::uint8_t { kOutside, kBegin, kInside };
  Kind kind = Kind::kOutside;
  EntityType type = EntityType::kLocation;  // meaningless when kind == kOutside

  static BioTag outside() { return {}; }
  static BioTag begin(EntityType t) { return {Kind::kBegin, t}; }
  static BioTag inside(EntityType t) { return {Kind::kInside, t}; }
  bool is_outside() const { return kind == Kind::kOutside; }

  friend bool operator==(const BioTag& a, const BioTag& b) {
    return a.kind == b.kind && (a.kind == Kind::kOutside || a.type == b.type);
  }
};

using BioSequence = std::vector<BioTag>;

std::string to_string(const BioTag& tag);
std::string to_string(const BioSequence& seq);  // space separated

struct LabeledSentence {
  Sentence sentence;
  std::vector<EntitySpan> gold;  // sorted by (start, type)
};

struct LabeledCorpus {
  std::vector<LabeledSentence> sentences;
  std::string split_name;
  // Whether the source carried -DOCSTART- markers; used by write_conll.
  bool has_doc_markers = false;
};

// Tag suffix -> entity type. The default knows the five mnemonics only.
class TagMapping {
 public:
  static TagMapping defaults();
  void set(std::string suffix, EntityType type);
  std::optional<EntityType> lookup(std::string_view suffix) const;

 private:
  std::map<std::string, EntityType, std::less<>> table_;
};

// Validates a token for ingestion; returns an error message or empty.
std::string check_token(std::string_view token);

// Reads the one-token-per-line format. Sentence ids are
// "<split>-<6-digit index>"; article ids are "<split>-a<index>".
// Throws Error(kData) naming the line number on malformed input.
LabeledCorpus parse_conll(std::istream& in, std::string split_name,
                          const TagMapping& mapping = TagMapping::defaults(),
                          Diagnostics* diag = nullptr);
LabeledCorpus load_conll(const std::string& path, std::string split_name,
                         const TagMapping& mapping = TagMapping::defaults(),
                         Diagnostics* diag = nullptr);

void write_conll(std::ostream& out, const LabeledCorpus& corpus);

// Throws Error(kInvalid) on out-of-range or overlapping spans. With a
// filter, spans of other types are ignored entirely.
BioSequence spans_to_bio(const Sentence& sentence, const std::vector<EntitySpan>& spans,
                         std::optional<EntityType> filter = std::nullopt);
BioSequence spans_to_bio(std::size_t length, const std::vector<EntitySpan>& spans,
                         std::optional<EntityType> filter = std::nullopt);

// Maximal spans; an I-tag that does not continue its own type starts a new
// span. Output sorted by start.
std::vector<EntitySpan> extract_spans(const BioSequence& bio);

void validate_spans(std::size_t length, const std::vector<EntitySpan>& spans);

std::vector<EntitySpan> filter_spans(const std::vector<EntitySpan>& spans, EntityType type);

struct StatsTable {
  std::string name;
  std::size_t articles = 0;
  std::size_t sentences = 0;
  std::size_t tokens = 0;
  std::array<std::size_t, kNumEntityTypes> entities{};

  double average_sentence_length() const {
    return sentences == 0 ? 0.0 : static_cast<double>(tokens) / static_cast<double>(sentences);
  }
};

StatsTable corpus_stats(const LabeledCorpus& corpus);
StatsTable combine_stats(const std::vector<StatsTable>& parts, std::string name);

// Data / Articles / Sentences / Tokens / Avg. Sent. Len / LOC ORG PER EVT DAT
std::string format_stats_markdown(const std::vector<StatsTable>& rows);
std::string format_stats_csv(const std::vector<StatsTable>& rows);

}  // namespace nepner
