#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "nepner/corpus.hpp"
#include "nepner/decode.hpp"
#include "nepner/evalkit.hpp"
#include "nepner/gateway.hpp"
#include "nepner/merge.hpp"
#include "nepner/promptkit.hpp"

namespace nepner {

enum class Selection { kNone, kRandom, kSemantic };

std::string_view to_string(Selection s);
std::optional<Selection> parse_selection(std::string_view s);

struct BackendConfig {
  // "echo_gold" | "scripted" | "replay" | "http"
  std::string kind;
  std::string url;
  std::string api_key_env;
  std::string fixture;   // replay
  std::string manifest;  // scripted
  RetryPolicy retry;
  double requests_per_minute = 0.0;
  double timeout_seconds = 120.0;
};

struct EmbeddingConfig {
  // "none" | "file" | "hashed" | "http"
  std::string kind = "none";
  std::string path;
  std::string url;
  std::string model;
  std::string api_key_env;
  std::size_t dim = 64;
  std::uint64_t seed = 0;
};

struct MatrixAxes {
  std::vector<Selection> selection;
  std::vector<std::size_t> k;
  std::vector<PromptLanguage> language;
  std::vector<bool> verify;
};

struct ExperimentConfig {
  std::string name = "run";
  std::string train_path;
  std::string test_path;
  std::map<std::string, EntityType> tag_map;  // extra tag suffixes
  EmbeddingConfig embeddings;
  BackendConfig backend;
  std::string model_id = "gpt-4o";
  double temperature = 0.0;
  int max_output_tokens = 1024;
  PromptLanguage language = PromptLanguage::kEnglish;
  PromptLanguage verification_language = PromptLanguage::kEnglish;
  std::map<PromptLanguage, std::string> prompt_assets;
  Selection selection = Selection::kNone;
  std::size_t k = 0;
  bool merged = true;
  bool verify = false;
  bool repair_merged = true;
  PriorityOrder priority;
  double match_threshold = kDefaultMatchThreshold;
  std::uint64_t seed = 0;
  std::optional<std::size_t> sample_limit;
  RateTable rates;
  std::string cache_dir;
  std::string output_dir;
  std::size_t concurrency = 4;
  std::optional<MatrixAxes> matrix;

  // Throws Error(kConfig) describing the first violated constraint.
  void validate() const;
};

// Relative paths are resolved against `base_dir`.
ExperimentConfig parse_config(std::string_view json_text, const std::string& base_dir);
ExperimentConfig load_config(const std::string& path);

struct PredictionRecord {
  std::string sentence_id;
  EntityType etype = EntityType::kLocation;
  std::string prompt_sha256;
  DecodeStatus status = DecodeStatus::kFailed;
  std::vector<EntitySpan> spans_before;  // decoded
  std::vector<EntitySpan> spans_after;   // after verification (== before without it)
  std::uint64_t prompt_tokens = 0;
  std::uint64_t output_tokens = 0;
  std::size_t examples = 0;
  std::size_t verify_requests = 0;
  std::vector<std::string> diagnostics;
};

struct DecodeTally {
  std::uint64_t exact = 0;
  std::uint64_t aligned = 0;
  std::uint64_t failed = 0;
};

struct RunResult {
  std::string name;
  Selection selection = Selection::kNone;
  std::size_t k = 0;
  PromptLanguage language = PromptLanguage::kEnglish;
  bool verify = false;
  bool merged = true;

  EvalReport entitywise;
  EvalReport merged_report;
  // Present when verification ran: the same predictions scored before it.
  std::optional<EvalReport> entitywise_unverified;
  std::optional<EvalReport> merged_unverified;
  DecodeTally decode;
  CostLedger ledger;
  std::size_t cache_hits = 0;
  std::vector<PredictionRecord> records;  // sentence-major, type order
};

struct RunOptions {
  Backend* backend_override = nullptr;  // replaces config.backend when set
  bool write_outputs = true;
};

// Select, prompt, complete, decode (and verify) every (test sentence, type)
// pair, then score entity-wise and merged from the same records. Writes
// predictions.jsonl, runlog.jsonl, report.* and ledger.* into config.output_dir.
RunResult run_experiment(const ExperimentConfig& config, const RunOptions& options = {});

// Scores records against gold; shared by run_experiment and rescoring.
void score_records(RunResult& result, const LabeledCorpus& test, const PriorityOrder& order,
                   bool repair_merged);

std::string format_report_markdown(const RunResult& result);
std::string format_report_csv(const RunResult& result);
std::string report_to_json_text(const RunResult& result);
RunResult report_from_json_text(std::string_view text);

// Writes report.md, report.csv, report.json, ledger.csv and ledger.md. Cost
// stays out of report.* so a warm-cache re-run reproduces them byte for byte.
void emit_report(const RunResult& result, const std::string& output_dir);

// Rewrites report.md / report.csv / ledger.* from <run_dir>/report.json.
void reemit_report(const std::string& run_dir);

std::string predictions_to_jsonl(const std::vector<PredictionRecord>& records);
std::vector<PredictionRecord> predictions_from_jsonl(std::istream& in, const std::string& origin);

// Offline re-scoring of a predictions.jsonl file against a gold corpus.
RunResult rescore_predictions(const std::string& predictions_path, const std::string& gold_path,
                              const PriorityOrder& order = PriorityOrder(),
                              bool repair_merged = true,
                              const TagMapping& mapping = TagMapping::defaults());

// Expands config.matrix into child configs (output_dir/<child name>).
std::vector<ExperimentConfig> expand_matrix(const ExperimentConfig& config);

struct MatrixResult {
  std::vector<RunResult> runs;
};

// Runs every child sharing one cache; writes matrix_report.md/.csv into
// config.output_dir.
MatrixResult run_matrix(const ExperimentConfig& config, const RunOptions& options = {});
std::string format_matrix_markdown(const std::vector<RunResult>& runs);
std::string format_matrix_csv(const std::vector<RunResult>& runs);

}  // namespace nepner
