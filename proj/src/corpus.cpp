#include "nepner/corpus.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "nepner/error.hpp"

namespace nepner {

namespace {

constexpr std::array<std::string_view, kNumEntityTypes> kTagNames = {"LOC", "ORG", "PER", "DATE",
                                                                    "EVENT"};
constexpr std::array<std::string_view, kNumEntityTypes> kLongNames = {
    "LOCATION", "ORGANIZATION", "PERSON", "DATE", "EVENT"};

bool is_ascii_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

bool is_blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), is_ascii_space);
}

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    auto tab = line.find('\t', pos);
    if (tab == std::string_view::npos) {
      out.push_back(line.substr(pos));
      return out;
    }
    out.push_back(line.substr(pos, tab - pos));
    pos = tab + 1;
  }
}

std::string pad_index(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06zu", i);
  return buf;
}

// Unicode whitespace that can appear inside a UTF-8 token field: NBSP,
// the U+2000 block, line/paragraph separators, ideographic space.
bool contains_unicode_space(std::string_view s) {
  static constexpr std::string_view kSpaces[] = {"\xC2\xA0", "\xE2\x80\x80", "\xE2\x80\x81",
                                                 "\xE2\x80\x82", "\xE2\x80\x83", "\xE2\x80\x84",
                                                 "\xE2\x80\x85", "\xE2\x80\x86", "\xE2\x80\x87",
                                                 "\xE2\x80\x88", "\xE2\x80\x89", "\xE2\x80\x8A",
                                                 "\xE2\x80\xA8", "\xE2\x80\xA9", "\xE3\x80\x80"};
  for (auto sp : kSpaces) {
    if (s.find(sp) != std::string_view::npos) return true;
  }
  return false;
}

}  // namespace

std::string_view tag_name(EntityType t) { return kTagNames[index_of(t)]; }
std::string_view long_name(EntityType t) { return kLongNames[index_of(t)]; }

std::optional<EntityType> parse_entity_type(std::string_view s) {
  for (auto t : kAllEntityTypes) {
    if (s == tag_name(t) || s == long_name(t)) return t;
  }
  return std::nullopt;
}

std::string Sentence::text() const {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

std::string to_string(const BioTag& tag) {
  switch (tag.kind) {
    case BioTag::Kind::kOutside:
      return "O";
    case BioTag::Kind::kBegin:
      return "B-" + std::string(tag_name(tag.type));
    case BioTag::Kind::kInside:
      return "I-" + std::string(tag_name(tag.type));
  }
  return "O";
}

std::string to_string(const BioSequence& seq) {
  std::string out;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (i) out += ' ';
    out += to_string(seq[i]);
  }
  return out;
}

TagMapping TagMapping::defaults() {
  TagMapping m;
  for (auto t : kAllEntityTypes) m.set(std::string(tag_name(t)), t);
  return m;
}

void TagMapping::set(std::string suffix, EntityType type) { table_[std::move(suffix)] = type; }

std::optional<EntityType> TagMapping::lookup(std::string_view suffix) const {
  auto it = table_.find(suffix);
  if (it == table_.end()) return std::nullopt;
  return it->second;
}

std::string check_token(std::string_view token) {
  if (token.empty()) return "empty token";
  if (std::any_of(token.begin(), token.end(), is_ascii_space) || contains_unicode_space(token)) {
    return "token contains whitespace";
  }
  if (token.find("@@") != std::string_view::npos || token.find("##") != std::string_view::npos) {
    return "token contains a reserved delimiter (\"@@\" or \"##\")";
  }
  return {};
}

LabeledCorpus parse_conll(std::istream& in, std::string split_name, const TagMapping& mapping,
                          Diagnostics* diag) {
  LabeledCorpus corpus;
  corpus.split_name = split_name;

  std::size_t article_index = 0;
  bool article_has_sentences = false;
  std::vector<std::string> tokens;
  BioSequence tags;

  auto fail = [&](std::size_t line_no, const std::string& msg) {
    return data_error(split_name + ": line " + std::to_string(line_no) + ": " + msg);
  };

  auto flush_sentence = [&]() {
    if (tokens.empty()) return;
    LabeledSentence ls;
    ls.sentence.tokens = std::move(tokens);
    ls.sentence.sentence_id = split_name + "-" + pad_index(corpus.sentences.size());
    ls.sentence.article_id = split_name + "-a" + std::to_string(article_index);
    ls.gold = extract_spans(tags);
    corpus.sentences.push_back(std::move(ls));
    article_has_sentences = true;
    tokens.clear();
    tags.clear();
  };

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (is_blank(line)) {
      flush_sentence();
      continue;
    }
    auto fields = split_tabs(line);
    if (fields[0] == "-DOCSTART-" && fields.size() <= 2) {
      flush_sentence();
      corpus.has_doc_markers = true;
      if (article_has_sentences) {
        ++article_index;
        article_has_sentences = false;
      }
      continue;
    }
    if (fields.size() != 2) {
      throw fail(line_no, "expected token<TAB>tag, found " + std::to_string(fields.size()) +
                              " field(s)");
    }
    auto token = fields[0];
    auto tag_str = fields[1];
    if (auto problem = check_token(token); !problem.empty()) {
      throw fail(line_no, problem + ": '" + std::string(token) + "'");
    }

    BioTag tag;
    if (tag_str == "O") {
      tag = BioTag::outside();
    } else if (tag_str.size() > 2 && (tag_str[0] == 'B' || tag_str[0] == 'I') &&
               tag_str[1] == '-') {
      auto type = mapping.lookup(tag_str.substr(2));
      if (!type) throw fail(line_no, "unknown tag '" + std::string(tag_str) + "'");
      tag = tag_str[0] == 'B' ? BioTag::begin(*type) : BioTag::inside(*type);
    } else {
      throw fail(line_no, "unknown tag '" + std::string(tag_str) + "'");
    }

    if (tag.kind == BioTag::Kind::kInside) {
      bool continues = !tags.empty() && !tags.back().is_outside() && tags.back().type == tag.type;
      if (!continues) {
        warn(diag, split_name + ": line " + std::to_string(line_no) + ": orphan " +
                       std::string(tag_str) + " repaired to B-" + std::string(tag_str.substr(2)));
        tag.kind = BioTag::Kind::kBegin;
      }
    }
    tokens.emplace_back(token);
    tags.push_back(tag);
  }
  if (in.bad()) throw io_error(split_name + ": read failure at line " + std::to_string(line_no));
  flush_sentence();
  return corpus;
}

LabeledCorpus load_conll(const std::string& path, std::string split_name,
                         const TagMapping& mapping, Diagnostics* diag) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open corpus file '" + path + "'");
  return parse_conll(in, std::move(split_name), mapping, diag);
}

void write_conll(std::ostream& out, const LabeledCorpus& corpus) {
  const std::string* current_article = nullptr;
  for (const auto& ls : corpus.sentences) {
    if (corpus.has_doc_markers &&
        (current_article == nullptr || *current_article != ls.sentence.article_id)) {
      out << "-DOCSTART-\tO\n\n";
      current_article = &ls.sentence.article_id;
    }
    auto bio = spans_to_bio(ls.sentence, ls.gold);
    for (std::size_t i = 0; i < bio.size(); ++i) {
      out << ls.sentence.tokens[i] << '\t' << to_string(bio[i]) << '\n';
    }
    out << '\n';
  }
}

void validate_spans(std::size_t length, const std::vector<EntitySpan>& spans) {
  for (const auto& s : spans) {
    if (s.start >= s.end || s.end > length) {
      throw invalid_argument("span [" + std::to_string(s.start) + "," + std::to_string(s.end) +
                             ") invalid for a sentence of " + std::to_string(length) + " tokens");
    }
  }
}

BioSequence spans_to_bio(std::size_t length, const std::vector<EntitySpan>& spans,
                         std::optional<EntityType> filter) {
  validate_spans(length, spans);
  BioSequence bio(length);
  std::vector<bool> used(length, false);
  for (const auto& s : spans) {
    if (filter && s.type != *filter) continue;
    for (auto i = s.start; i < s.end; ++i) {
      if (used[i]) {
        throw invalid_argument("overlapping spans at token " + std::to_string(i));
      }
      used[i] = true;
      bio[i] = i == s.start ? BioTag::begin(s.type) : BioTag::inside(s.type);
    }
  }
  return bio;
}

BioSequence spans_to_bio(const Sentence& sentence, const std::vector<EntitySpan>& spans,
                         std::optional<EntityType> filter) {
  return spans_to_bio(sentence.tokens.size(), spans, filter);
}

std::vector<EntitySpan> extract_spans(const BioSequence& bio) {
  std::vector<EntitySpan> out;
  std::optional<EntitySpan> open;
  for (std::size_t i = 0; i < bio.size(); ++i) {
    const auto& tag = bio[i];
    bool continues = tag.kind == BioTag::Kind::kInside && open && open->type == tag.type;
    if (continues) {
      open->end = i + 1;
      continue;
    }
    if (open) out.push_back(*open);
    open.reset();
    if (!tag.is_outside()) open = EntitySpan{i, i + 1, tag.type};
  }
  if (open) out.push_back(*open);
  return out;
}

std::vector<EntitySpan> filter_spans(const std::vector<EntitySpan>& spans, EntityType type) {
  std::vector<EntitySpan> out;
  std::copy_if(spans.begin(), spans.end(), std::back_inserter(out),
               [type](const EntitySpan& s) { return s.type == type; });
  return out;
}

StatsTable corpus_stats(const LabeledCorpus& corpus) {
  StatsTable t;
  t.name = corpus.split_name;
  std::vector<std::string_view> articles;
  for (const auto& ls : corpus.sentences) {
    if (articles.empty() || articles.back() != ls.sentence.article_id) {
      articles.push_back(ls.sentence.article_id);
    }
    ++t.sentences;
    t.tokens += ls.sentence.tokens.size();
    for (const auto& s : ls.gold) ++t.entities[index_of(s.type)];
  }
  std::sort(articles.begin(), articles.end());
  t.articles = static_cast<std::size_t>(std::unique(articles.begin(), articles.end()) -
                                        articles.begin());
  return t;
}

StatsTable combine_stats(const std::vector<StatsTable>& parts, std::string name) {
  StatsTable t;
  t.name = std::move(name);
  for (const auto& p : parts) {
    t.articles += p.articles;
    t.sentences += p.sentences;
    t.tokens += p.tokens;
    for (std::size_t i = 0; i < kNumEntityTypes; ++i) t.entities[i] += p.entities[i];
  }
  return t;
}

namespace {

// Table column order: LOC ORG PER EVT DAT.
constexpr std::array<EntityType, kNumEntityTypes> kStatsColumns = {
    EntityType::kLocation, EntityType::kOrganization, EntityType::kPerson, EntityType::kEvent,
    EntityType::kDate};

std::string with_commas(std::size_t n) {
  auto digits = std::to_string(n);
  std::string out;
  for (std::size_t i = 0; i < digits.size(); ++i) {
    if (i != 0 && (digits.size() - i) % 3 == 0) out += ',';
    out += digits[i];
  }
  return out;
}

std::string fixed2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace

std::string format_stats_markdown(const std::vector<StatsTable>& rows) {
  std::ostringstream out;
  out << "| Data | Articles | Sentences | Tokens | Avg. Sent. Len | LOC | ORG | PER | EVT | DAT |\n";
  out << "|---|---:|---:|---:|---:|---:|---:|---:|---:|---:|\n";
  for (const auto& r : rows) {
    out << "| " << r.name << " | " << with_commas(r.articles) << " | " << with_commas(r.sentences)
        << " | " << with_commas(r.tokens) << " | " << fixed2(r.average_sentence_length());
    for (auto t : kStatsColumns) out << " | " << with_commas(r.entities[index_of(t)]);
    out << " |\n";
  }
  return out.str();
}

std::string format_stats_csv(const std::vector<StatsTable>& rows) {
  std::ostringstream out;
  out << "data,articles,sentences,tokens,avg_sent_len,LOC,ORG,PER,EVT,DAT\n";
  for (const auto& r : rows) {
    out << r.name << ',' << r.articles << ',' << r.sentences << ',' << r.tokens << ','
        << fixed2(r.average_sentence_length());
    for (auto t : kStatsColumns) out << ',' << r.entities[index_of(t)];
    out << '\n';
  }
  return out.str();
}

}  // namespace nepner
