/* C interface to the nepner core. Every call returns a status; on failure
 * nepner_last_error() holds a message for the calling thread until its next
 * failing call. Strings handed out through char** are owned by the caller
 * and released with nepner_free_string. */
#ifndef NEPNER_NEPNER_H
#define NEPNER_NEPNER_H

#include <stddef.h>

#if defined(_WIN32)
#define NEPNER_API __declspec(dllexport)
#else
#define NEPNER_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Values double as CLI exit codes. */
typedef enum nepner_status {
  NEPNER_OK = 0,
  NEPNER_ERR_INTERNAL = 1,
  NEPNER_ERR_CONFIG = 2,
  NEPNER_ERR_IO = 3,
  NEPNER_ERR_BACKEND = 4,
  NEPNER_ERR_DATA = 5,
  NEPNER_ERR_INVALID = 6
} nepner_status;

typedef enum nepner_format { NEPNER_FORMAT_MARKDOWN = 0, NEPNER_FORMAT_CSV = 1 } nepner_format;

typedef enum nepner_mode {
  NEPNER_MODE_ENTITYWISE = 0,
  NEPNER_MODE_MERGED = 1,
  NEPNER_MODE_ENTITYWISE_UNVERIFIED = 2,
  NEPNER_MODE_MERGED_UNVERIFIED = 3
} nepner_mode;

/* entity: 0..4 = LOCATION, ORGANIZATION, PERSON, DATE, EVENT; -1 = micro. */
#define NEPNER_ENTITY_MICRO (-1)

typedef struct nepner_metrics {
  double precision;
  double recall;
  double f1;
  unsigned long long support;
  unsigned long long tp;
  unsigned long long fp;
  unsigned long long fn;
  double macro_f1; /* filled for NEPNER_ENTITY_MICRO only */
} nepner_metrics;

typedef struct nepner_corpus nepner_corpus;
typedef struct nepner_run nepner_run;

NEPNER_API const char* nepner_version(void);
NEPNER_API const char* nepner_last_error(void);
NEPNER_API void nepner_free_string(char* s);

/* Messages below this level are dropped: 0 debug, 1 info, 2 warning
 * (default), 3 error, 4 silent. */
NEPNER_API void nepner_set_log_level(int level);

/* Corpus ingestion and statistics. */
NEPNER_API nepner_status nepner_corpus_load(const char* path, const char* split_name,
                                            nepner_corpus** out);
NEPNER_API void nepner_corpus_free(nepner_corpus* corpus);
NEPNER_API size_t nepner_corpus_sentence_count(const nepner_corpus* corpus);

/* One row per corpus; a "Total" row is appended when add_total != 0. */
NEPNER_API nepner_status nepner_stats_table(const nepner_corpus* const* corpora, size_t count,
                                            int add_total, nepner_format format, char** out);

/* Runs the experiment described by a config file. */
NEPNER_API nepner_status nepner_run_create(const char* config_path, nepner_run** out);
NEPNER_API void nepner_run_free(nepner_run* run);
NEPNER_API nepner_status nepner_run_metric(const nepner_run* run, nepner_mode mode, int entity,
                                           nepner_metrics* out);
NEPNER_API nepner_status nepner_run_report(const nepner_run* run, nepner_format format, char** out);
NEPNER_API const char* nepner_run_output_dir(const nepner_run* run);
NEPNER_API size_t nepner_run_cache_hits(const nepner_run* run);

/* Runs every child of the config's matrix section; *out receives the
 * combined table. */
NEPNER_API nepner_status nepner_matrix_run(const char* config_path, nepner_format format,
                                           char** out);

/* Re-scores a predictions.jsonl file against a gold corpus. When out_dir is
 * non-NULL the reports are written there as well. */
NEPNER_API nepner_status nepner_score_file(const char* predictions_path, const char* gold_path,
                                           const char* out_dir, nepner_format format, char** out);

/* Rewrites the report files of a finished run from its report.json. */
NEPNER_API nepner_status nepner_report_reemit(const char* run_dir);

/* Decodes one LLM answer against a whitespace-tokenized sentence. *out
 * receives a JSON object {"status": ..., "spans": [[start, end], ...],
 * "diagnostics": [...]}. */
NEPNER_API nepner_status nepner_decode(const char* sentence, const char* llm_text,
                                       const char* entity_type, char** out);

#ifdef __cplusplus
}
#endif

#endif
