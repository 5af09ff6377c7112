#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "nepner/corpus.hpp"

namespace nepner {

enum class DecodeStatus { kExact, kAligned, kFailed };

std::string_view to_string(DecodeStatus s);

struct DecodedPrediction {
  std::vector<EntitySpan> spans;  // empty when status == kFailed
  DecodeStatus status = DecodeStatus::kFailed;
  std::vector<std::string> diagnostics;
};

// Byte range [begin, end) in the clean text.
struct Segment {
  std::size_t begin = 0;
  std::size_t end = 0;
  friend bool operator==(const Segment&, const Segment&) = default;
};

struct DelimitedText {
  std::string clean_text;
  std::vector<Segment> segments;
  std::vector<std::string> diagnostics;
};

// Left-to-right, non-nesting scan for "@@" ... "##". Unmatched openers and
// stray closers are dropped with a diagnostic; an "@@" inside an open
// segment is kept as literal text.
DelimitedText extract_delimited_segments(std::string_view text);

inline constexpr double kDefaultMatchThreshold = 0.8;

// Maps segments onto sentence token ranges. EXACT when the whitespace
// tokens of clean_text equal the sentence tokens; otherwise an LCS
// alignment over tokens decides (ALIGNED, or FAILED below the threshold).
// Span types are set to `etype`.
DecodedPrediction align_to_tokens(const Sentence& sentence, const DelimitedText& delimited,
                                  EntityType etype, double threshold = kDefaultMatchThreshold);

struct DecodeResult {
  BioSequence bio;
  DecodedPrediction prediction;
};

// extract + align, merging overlapping spans, then spans_to_bio.
DecodeResult decode_to_bio(const Sentence& sentence, std::string_view llm_text, EntityType etype,
                           double threshold = kDefaultMatchThreshold);

// Index pairs (a_i, b_j) of one longest common subsequence, increasing in
// both coordinates.
std::vector<std::pair<std::size_t, std::size_t>> lcs_alignment(
    const std::vector<std::string_view>& a, const std::vector<std::string>& b);

}  // namespace nepner
