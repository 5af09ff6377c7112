#include "nepner/decode.hpp"

#include <algorithm>
#include <cstdint>
#include <cstdio>

#include "nepner/error.hpp"

namespace nepner {

namespace {

struct TokenRange {
  std::size_t begin;
  std::size_t end;
};

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

std::vector<TokenRange> whitespace_tokens(std::string_view text) {
  std::vector<TokenRange> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    if (i >= text.size()) break;
    auto start = i;
    while (i < text.size() && !is_space(text[i])) ++i;
    out.push_back({start, i});
  }
  return out;
}

// Cuts tokens at segment boundaries that fall strictly inside them, so
// "x@@y" style attachments become separate tokens.
std::vector<TokenRange> refine_tokens(const std::vector<TokenRange>& tokens,
                                      const std::vector<Segment>& segments) {
  std::vector<std::size_t> cuts;
  for (const auto& s : segments) {
    cuts.push_back(s.begin);
    cuts.push_back(s.end);
  }
  std::sort(cuts.begin(), cuts.end());
  std::vector<TokenRange> out;
  for (const auto& t : tokens) {
    auto start = t.begin;
    for (auto c : cuts) {
      if (c > start && c < t.end) {
        out.push_back({start, c});
        start = c;
      }
    }
    out.push_back({start, t.end});
  }
  return out;
}

std::string ratio_text(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

// Trims whitespace off both ends of each segment; drops empty ones.
std::vector<Segment> trimmed_segments(std::string_view clean, const std::vector<Segment>& in,
                                      std::vector<std::string>& diagnostics) {
  std::vector<Segment> out;
  for (auto s : in) {
    while (s.begin < s.end && is_space(clean[s.begin])) ++s.begin;
    while (s.end > s.begin && is_space(clean[s.end - 1])) --s.end;
    if (s.begin == s.end) {
      diagnostics.push_back("blank delimited segment dropped");
      continue;
    }
    out.push_back(s);
  }
  return out;
}

}  // namespace

std::string_view to_string(DecodeStatus s) {
  switch (s) {
    case DecodeStatus::kExact:
      return "EXACT";
    case DecodeStatus::kAligned:
      return "ALIGNED";
    case DecodeStatus::kFailed:
      return "FAILED";
  }
  return "FAILED";
}

DelimitedText extract_delimited_segments(std::string_view text) {
  DelimitedText out;
  out.clean_text.reserve(text.size());
  bool open = false;
  std::size_t seg_start = 0;
  std::size_t opener_at = 0;
  std::size_t i = 0;
  while (i < text.size()) {
    auto two = text.substr(i, 2);
    if (two == "@@") {
      if (!open) {
        open = true;
        seg_start = out.clean_text.size();
        opener_at = i;
      } else {
        out.diagnostics.push_back("'@@' inside an open segment at byte " + std::to_string(i) +
                                  " kept as text");
        out.clean_text += "@@";
      }
      i += 2;
      continue;
    }
    if (two == "##") {
      if (open) {
        if (out.clean_text.size() > seg_start) {
          out.segments.push_back({seg_start, out.clean_text.size()});
        } else {
          out.diagnostics.push_back("empty segment at byte " + std::to_string(opener_at) + " dropped");
        }
        open = false;
      } else {
        out.diagnostics.push_back("stray '##' at byte " + std::to_string(i) + " dropped");
      }
      i += 2;
      continue;
    }
    out.clean_text += text[i++];
  }
  if (open) {
    out.diagnostics.push_back("unmatched '@@' at byte " + std::to_string(opener_at) + " dropped");
  }
  return out;
}

std::vector<std::pair<std::size_t, std::size_t>> lcs_alignment(
    const std::vector<std::string_view>& a, const std::vector<std::string>& b) {
  const auto n = a.size();
  const auto m = b.size();
  std::vector<std::uint32_t> dp((n + 1) * (m + 1), 0);
  auto at = [m](std::size_t i, std::size_t j) { return i * (m + 1) + j; };
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      dp[at(i, j)] = a[i - 1] == b[j - 1] ? dp[at(i - 1, j - 1)] + 1
                                          : std::max(dp[at(i - 1, j)], dp[at(i, j - 1)]);
    }
  }
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  auto i = n, j = m;
  while (i > 0 && j > 0) {
    if (a[i - 1] == b[j - 1]) {
      pairs.emplace_back(i - 1, j - 1);
      --i;
      --j;
    } else if (dp[at(i - 1, j)] >= dp[at(i, j - 1)]) {
      --i;
    } else {
      --j;
    }
  }
  std::reverse(pairs.begin(), pairs.end());
  return pairs;
}

DecodedPrediction align_to_tokens(const Sentence& sentence, const DelimitedText& delimited,
                                  EntityType etype, double threshold) {
  DecodedPrediction pred;
  pred.diagnostics = delimited.diagnostics;
  std::string_view clean = delimited.clean_text;
  auto segments = trimmed_segments(clean, delimited.segments, pred.diagnostics);
  auto tokens = whitespace_tokens(clean);
  const auto& original = sentence.tokens;

  auto text_of = [&](const TokenRange& r) { return clean.substr(r.begin, r.end - r.begin); };

  bool exact = tokens.size() == original.size();
  for (std::size_t i = 0; exact && i < tokens.size(); ++i) exact = text_of(tokens[i]) == original[i];

  if (exact) {
    pred.status = DecodeStatus::kExact;
    for (const auto& seg : segments) {
      std::size_t first = tokens.size(), last = 0;
      for (std::size_t t = 0; t < tokens.size(); ++t) {
        if (tokens[t].end > seg.begin && tokens[t].begin < seg.end) {
          first = std::min(first, t);
          last = t;
        }
      }
      if (first == tokens.size()) continue;
      if (tokens[first].begin != seg.begin || tokens[last].end != seg.end) {
        pred.diagnostics.push_back("segment inside token(s) " + std::to_string(first) + ".." +
                                   std::to_string(last) + " widened to token boundaries");
      }
      pred.spans.push_back({first, last + 1, etype});
    }
    return pred;
  }

  if (original.empty()) {
    pred.status = DecodeStatus::kFailed;
    pred.diagnostics.push_back("empty sentence");
    return pred;
  }

  auto refined = refine_tokens(tokens, segments);
  std::vector<std::string_view> refined_text;
  refined_text.reserve(refined.size());
  for (const auto& r : refined) refined_text.push_back(text_of(r));
  auto pairs = lcs_alignment(refined_text, original);
  double ratio = static_cast<double>(pairs.size()) / static_cast<double>(original.size());
  if (ratio < threshold) {
    pred.status = DecodeStatus::kFailed;
    pred.diagnostics.push_back("token match ratio " + ratio_text(ratio) + " below threshold " +
                               ratio_text(threshold));
    return pred;
  }

  pred.status = DecodeStatus::kAligned;
  constexpr auto kUnmatched = static_cast<std::size_t>(-1);
  std::vector<std::size_t> maps_to(refined.size(), kUnmatched);
  for (auto [out_i, orig_j] : pairs) maps_to[out_i] = orig_j;

  for (const auto& seg : segments) {
    std::vector<std::size_t> covered;
    for (std::size_t t = 0; t < refined.size(); ++t) {
      if (refined[t].begin >= seg.begin && refined[t].end <= seg.end) covered.push_back(t);
    }
    if (covered.empty()) continue;
    bool ok = true;
    for (std::size_t c = 0; ok && c < covered.size(); ++c) {
      auto mapped = maps_to[covered[c]];
      if (mapped == kUnmatched) ok = false;
      if (ok && c > 0 && mapped != maps_to[covered[c - 1]] + 1) ok = false;
      if (ok && c > 0 && covered[c] != covered[c - 1] + 1) ok = false;
    }
    if (!ok) {
      pred.diagnostics.push_back("segment '" + std::string(clean.substr(seg.begin, seg.end - seg.begin)) +
                                 "' does not align to a contiguous sentence range; dropped");
      continue;
    }
    pred.spans.push_back({maps_to[covered.front()], maps_to[covered.back()] + 1, etype});
  }
  return pred;
}

DecodeResult decode_to_bio(const Sentence& sentence, std::string_view llm_text, EntityType etype,
                           double threshold) {
  auto delimited = extract_delimited_segments(llm_text);
  DecodeResult result;
  result.prediction = align_to_tokens(sentence, delimited, etype, threshold);
  auto& spans = result.prediction.spans;
  std::sort(spans.begin(), spans.end());
  std::vector<EntitySpan> merged;
  for (const auto& s : spans) {
    if (!merged.empty() && s.start < merged.back().end) {
      result.prediction.diagnostics.push_back("overlapping spans at token " + std::to_string(s.start) +
                                              " merged");
      merged.back().end = std::max(merged.back().end, s.end);
      continue;
    }
    merged.push_back(s);
  }
  spans = std::move(merged);
  result.bio = spans_to_bio(sentence, spans);
  return result;
}

}  // namespace nepner
