#include "nepner/nepner.h"

#include <cstring>
#include <filesystem>
#include <iostream>
#include <memory>
#include <sstream>

#include <json.hpp>

#include "nepner/decode.hpp"
#include "nepner/log.hpp"
#include "nepner/runner.hpp"

using namespace nepner;

struct nepner_corpus {
  LabeledCorpus corpus;
};

struct nepner_run {
  RunResult result;
  std::string output_dir;
};

namespace {

thread_local std::string g_last_error;

nepner_status status_of(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig:
      return NEPNER_ERR_CONFIG;
    case ErrorKind::kIo:
      return NEPNER_ERR_IO;
    case ErrorKind::kBackend:
      return NEPNER_ERR_BACKEND;
    case ErrorKind::kData:
      return NEPNER_ERR_DATA;
    case ErrorKind::kInvalid:
      return NEPNER_ERR_INVALID;
  }
  return NEPNER_ERR_INTERNAL;
}

template <typename F>
nepner_status guarded(F&& body) {
  try {
    body();
    return NEPNER_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return status_of(e.kind());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
  } catch (const std::exception& e) {
    g_last_error = e.what();
  } catch (...) {
    g_last_error = "unknown error";
  }
  return NEPNER_ERR_INTERNAL;
}

char* dup_string(const std::string& s) {
  auto* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.data(), s.size() + 1);
  return out;
}

void require(const void* p, const char* name) {
  if (p == nullptr) throw invalid_argument(std::string(name) + " must not be NULL");
}

const EvalReport* report_for(const RunResult& r, nepner_mode mode) {
  switch (mode) {
    case NEPNER_MODE_ENTITYWISE:
      return &r.entitywise;
    case NEPNER_MODE_MERGED:
      return r.merged ? &r.merged_report : nullptr;
    case NEPNER_MODE_ENTITYWISE_UNVERIFIED:
      return r.entitywise_unverified ? &*r.entitywise_unverified : nullptr;
    case NEPNER_MODE_MERGED_UNVERIFIED:
      return r.merged_unverified ? &*r.merged_unverified : nullptr;
  }
  return nullptr;
}

}  // namespace

extern "C" {

const char* nepner_version(void) { return "0.1.0"; }

const char* nepner_last_error(void) { return g_last_error.c_str(); }

void nepner_free_string(char* s) { std::free(s); }

void nepner_set_log_level(int level) {
  if (level >= 4) {
    set_log_sink({});
    return;
  }
  set_log_sink([level](LogLevel l, std::string_view msg) {
    if (static_cast<int>(l) < level) return;
    static constexpr const char* kPrefix[] = {"debug: ", "", "warning: ", "error: "};
    std::cerr << kPrefix[static_cast<int>(l)] << msg << '\n';
  });
}

nepner_status nepner_corpus_load(const char* path, const char* split_name, nepner_corpus** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = nullptr;
    auto c = std::make_unique<nepner_corpus>();
    c->corpus = load_conll(path, split_name ? split_name : "corpus");
    *out = c.release();
  });
}

void nepner_corpus_free(nepner_corpus* corpus) { delete corpus; }

size_t nepner_corpus_sentence_count(const nepner_corpus* corpus) {
  return corpus == nullptr ? 0 : corpus->corpus.sentences.size();
}

nepner_status nepner_stats_table(const nepner_corpus* const* corpora, size_t count, int add_total,
                                 nepner_format format, char** out) {
  return guarded([&] {
    require(out, "out");
    if (count > 0) require(corpora, "corpora");
    std::vector<StatsTable> rows;
    for (size_t i = 0; i < count; ++i) {
      require(corpora[i], "corpus");
      rows.push_back(corpus_stats(corpora[i]->corpus));
    }
    if (add_total) rows.push_back(combine_stats(rows, "Total"));
    *out = dup_string(format == NEPNER_FORMAT_CSV ? format_stats_csv(rows) : format_stats_markdown(rows));
  });
}

nepner_status nepner_run_create(const char* config_path, nepner_run** out) {
  return guarded([&] {
    require(config_path, "config_path");
    require(out, "out");
    *out = nullptr;
    auto config = load_config(config_path);
    if (config.matrix) throw config_error("config has a matrix section; use the matrix command");
    auto run = std::make_unique<nepner_run>();
    run->result = run_experiment(config);
    run->output_dir = config.output_dir;
    *out = run.release();
  });
}

void nepner_run_free(nepner_run* run) { delete run; }

nepner_status nepner_run_metric(const nepner_run* run, nepner_mode mode, int entity,
                                nepner_metrics* out) {
  return guarded([&] {
    require(run, "run");
    require(out, "out");
    const auto* report = report_for(run->result, mode);
    if (report == nullptr) throw invalid_argument("the run has no report for this mode");
    if (entity != NEPNER_ENTITY_MICRO && (entity < 0 || entity >= static_cast<int>(kNumEntityTypes))) {
      throw invalid_argument("entity index out of range");
    }
    const auto& m = entity == NEPNER_ENTITY_MICRO ? report->micro : report->per_type[entity];
    *out = {m.precision, m.recall, m.f1, m.support, m.counts.tp, m.counts.fp, m.counts.fn,
            entity == NEPNER_ENTITY_MICRO ? report->macro_f1 : 0.0};
  });
}

nepner_status nepner_run_report(const nepner_run* run, nepner_format format, char** out) {
  return guarded([&] {
    require(run, "run");
    require(out, "out");
    *out = dup_string(format == NEPNER_FORMAT_CSV ? format_report_csv(run->result)
                                                  : format_report_markdown(run->result));
  });
}

const char* nepner_run_output_dir(const nepner_run* run) {
  return run == nullptr ? "" : run->output_dir.c_str();
}

size_t nepner_run_cache_hits(const nepner_run* run) { return run == nullptr ? 0 : run->result.cache_hits; }

nepner_status nepner_matrix_run(const char* config_path, nepner_format format, char** out) {
  return guarded([&] {
    require(config_path, "config_path");
    auto config = load_config(config_path);
    if (!config.matrix) throw config_error("config has no matrix section");
    auto result = run_matrix(config);
    if (out != nullptr) {
      *out = dup_string(format == NEPNER_FORMAT_CSV ? format_matrix_csv(result.runs)
                                                    : format_matrix_markdown(result.runs));
    }
  });
}

nepner_status nepner_score_file(const char* predictions_path, const char* gold_path,
                                const char* out_dir, nepner_format format, char** out) {
  return guarded([&] {
    require(predictions_path, "predictions_path");
    require(gold_path, "gold_path");
    auto result = rescore_predictions(predictions_path, gold_path);
    if (out_dir != nullptr) emit_report(result, out_dir);
    if (out != nullptr) {
      *out = dup_string(format == NEPNER_FORMAT_CSV ? format_report_csv(result)
                                                    : format_report_markdown(result));
    }
  });
}

nepner_status nepner_report_reemit(const char* run_dir) {
  return guarded([&] {
    require(run_dir, "run_dir");
    reemit_report(run_dir);
  });
}

nepner_status nepner_decode(const char* sentence, const char* llm_text, const char* entity_type,
                            char** out) {
  return guarded([&] {
    require(sentence, "sentence");
    require(llm_text, "llm_text");
    require(entity_type, "entity_type");
    require(out, "out");
    auto type = parse_entity_type(entity_type);
    if (!type) throw invalid_argument(std::string("unknown entity type '") + entity_type + "'");
    Sentence s;
    std::istringstream in(sentence);
    for (std::string tok; in >> tok;) s.tokens.push_back(tok);
    s.sentence_id = "input";
    auto decoded = decode_to_bio(s, llm_text, *type);
    nlohmann::json spans = nlohmann::json::array();
    for (const auto& sp : decoded.prediction.spans) spans.push_back({sp.start, sp.end});
    nlohmann::json j = {{"status", std::string(to_string(decoded.prediction.status))},
                        {"spans", spans},
                        {"bio", to_string(decoded.bio)},
                        {"diagnostics", decoded.prediction.diagnostics}};
    *out = dup_string(j.dump());
  });
}

}  // extern "C"
