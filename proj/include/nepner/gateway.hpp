#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <fstream>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>

#include "nepner/corpus.hpp"
#include "nepner/error.hpp"

namespace nepner {

struct CompletionRequest {
  std::string model_id;
  std::string prompt;
  double temperature = 0.0;
  int max_output_tokens = 1024;
  std::string request_tag;  // "<sentence_id>|<TYPE>|<stage>[|<start>-<end>]"
};

struct CompletionResponse {
  std::string text;
  std::uint64_t prompt_tokens = 0;
  std::uint64_t output_tokens = 0;
  bool tokens_estimated = false;
  bool from_cache = false;
};

// What a backend hands back; token counts are optional on the wire.
struct BackendReply {
  std::string text;
  std::optional<std::uint64_t> prompt_tokens;
  std::optional<std::uint64_t> output_tokens;
};

class BackendError : public Error {
 public:
  enum class Reason { kAuth, kRetriesExhausted, kMalformedPayload, kRejected, kNoFixture };

  BackendError(Reason reason, std::string request_tag, const std::string& detail);
  Reason reason() const { return reason_; }
  const std::string& request_tag() const { return request_tag_; }

 private:
  Reason reason_;
  std::string request_tag_;
};

std::string_view to_string(BackendError::Reason r);

class Backend {
 public:
  virtual ~Backend() = default;
  // Stable identity; part of the cache key.
  virtual std::string id() const = 0;
  virtual BackendReply call(const CompletionRequest& req) = 0;
};

// ceil(utf8 bytes / 4)
std::uint64_t estimate_tokens(std::string_view text);

// Forwards to the backend and fills in estimated token counts when the
// backend did not report them.
CompletionResponse complete(Backend& backend, const CompletionRequest& req);

// --- request tags ----------------------------------------------------------

struct RequestTag {
  std::string sentence_id;
  EntityType etype = EntityType::kLocation;
  std::string stage;                  // "ner" or "verify"
  std::optional<EntitySpan> span;     // verify requests only
};

std::string make_request_tag(const RequestTag& tag);
std::optional<RequestTag> parse_request_tag(std::string_view tag);

// --- backends ----------------------------------------------------------------

// Prompt-hash -> text fixtures, one JSON object per line:
//   {"prompt_sha256": "<hex>", "text": "...", "prompt_tokens": 12, "output_tokens": 3}
// "prompt" may be given instead of "prompt_sha256". Never touches the network.
class ReplayBackend : public Backend {
 public:
  static std::unique_ptr<ReplayBackend> load(const std::string& path);
  static std::unique_ptr<ReplayBackend> parse(std::istream& in, std::string origin);
  void add(const std::string& prompt_sha256, BackendReply reply);

  std::string id() const override { return "replay"; }
  BackendReply call(const CompletionRequest& req) override;
  std::size_t size() const { return fixtures_.size(); }

 private:
  std::unordered_map<std::string, BackendReply> fixtures_;
};

// Answers through a caller-supplied function; counts invocations.
class ScriptedBackend : public Backend {
 public:
  using Responder = std::function<std::string(const CompletionRequest&)>;
  ScriptedBackend(std::string id, Responder responder)
      : id_(std::move(id)), responder_(std::move(responder)) {}

  std::string id() const override { return id_; }
  BackendReply call(const CompletionRequest& req) override;
  std::size_t calls() const { return calls_.load(); }

 private:
  std::string id_;
  Responder responder_;
  std::atomic<std::size_t> calls_{0};
};

struct RetryPolicy {
  int max_attempts = 5;
  std::chrono::milliseconds initial_delay{500};
  double multiplier = 2.0;
  std::chrono::milliseconds max_delay{30000};

  // Delay before attempt `attempt` (1-based retry count).
  std::chrono::milliseconds delay_for(int retry) const;
};

// Chat-completions style endpoint:
//   POST <url> {"model": m, "messages": [{"role": "user", "content": prompt}],
//               "temperature": t, "max_tokens": n}
// reply: choices[0].message.content, optional usage.{prompt,completion}_tokens.
class HttpBackend : public Backend {
 public:
  struct Options {
    std::string url;
    std::string api_key;
    RetryPolicy retry;
    double requests_per_minute = 0.0;  // 0 = unlimited
    double timeout_seconds = 120.0;
  };
  explicit HttpBackend(Options options);

  std::string id() const override { return "http:" + options_.url; }
  BackendReply call(const CompletionRequest& req) override;
  std::size_t attempts() const { return attempts_.load(); }

 private:
  void wait_for_rate_slot();

  Options options_;
  std::mutex rate_mutex_;
  std::chrono::steady_clock::time_point next_slot_{};
  std::atomic<std::size_t> attempts_{0};
};

// --- cache -------------------------------------------------------------------

std::string cache_key(std::string_view backend_id, const CompletionRequest& req);

// Content-addressed response cache in a directory:
//   entries.jsonl  append-only, one JSON record per response
//   index.json     key -> byte offset, replaced atomically (tmp + rename)
// Entries appended after the last index write are recovered by scanning the
// data file on open. Unreadable entries count as misses.
class ResponseCache {
 public:
  explicit ResponseCache(std::string directory);
  ~ResponseCache();
  ResponseCache(const ResponseCache&) = delete;
  ResponseCache& operator=(const ResponseCache&) = delete;

  std::optional<CompletionResponse> lookup(const std::string& key);
  void store(const std::string& key, const CompletionResponse& response);
  void flush_index();
  std::size_t size() const;

 private:
  friend CompletionResponse cached_complete(ResponseCache&, Backend&, const CompletionRequest&);

  std::optional<CompletionResponse> lookup_locked(const std::string& key);
  void store_locked(const std::string& key, const CompletionResponse& response);
  void write_index_locked();
  void load();

  std::string dir_;
  std::string data_path_;
  std::string index_path_;
  mutable std::mutex mutex_;
  std::unordered_map<std::string, std::uint64_t> offsets_;
  std::uint64_t data_bytes_ = 0;
  std::size_t unflushed_ = 0;
  std::unordered_map<std::string, std::shared_future<CompletionResponse>> inflight_;
};

// Hit: cached text with from_cache=true and no backend call. Miss: delegate
// and persist. Concurrent misses on one key share a single backend call.
CompletionResponse cached_complete(ResponseCache& cache, Backend& backend,
                                   const CompletionRequest& req);

// --- cost accounting ---------------------------------------------------------

struct RateTable {
  double prompt_per_1k = 0.0;
  double output_per_1k = 0.0;
};

struct StageUsage {
  std::uint64_t requests = 0;
  std::uint64_t prompt_tokens = 0;
  std::uint64_t output_tokens = 0;
  std::uint64_t estimated_requests = 0;
  double cost = 0.0;
};

class CostLedger {
 public:
  CostLedger() = default;
  explicit CostLedger(RateTable rates) : rates_(rates) {}

  // Cache hits leave the ledger unchanged.
  void record(const CompletionResponse& resp, std::string_view stage);
  double cost_of(const CompletionResponse& resp) const;

  const RateTable& rates() const { return rates_; }
  const std::map<std::string, StageUsage, std::less<>>& stages() const { return stages_; }
  StageUsage total() const;
  // Adds previously recorded usage (used when reloading a saved ledger).
  void add_usage(std::string_view stage, const StageUsage& usage);

 private:
  RateTable rates_;
  std::map<std::string, StageUsage, std::less<>> stages_;
};

CostLedger record_usage(CostLedger ledger, const CompletionResponse& resp, std::string_view stage);

// stage,requests,prompt_tokens,output_tokens,estimated_requests,cost
std::string format_ledger_csv(const CostLedger& ledger);
std::string format_ledger_markdown(const CostLedger& ledger);

// --- run log -------------------------------------------------------------------

// One JSON line per request. Thread-safe.
class RunLog {
 public:
  explicit RunLog(const std::string& path);
  void record(const CompletionRequest& req, std::string_view stage,
              const CompletionResponse* resp, double latency_ms, std::string_view error = {});

 private:
  std::mutex mutex_;
  std::ofstream out_;
};

// Backend + optional cache + ledger + log, as used by the pipeline stages.
class Gateway {
 public:
  Gateway(Backend& backend, ResponseCache* cache, RateTable rates, RunLog* log = nullptr)
      : backend_(backend), cache_(cache), ledger_(rates), log_(log) {}

  CompletionResponse complete(const CompletionRequest& req, std::string_view stage);
  CostLedger ledger() const;
  std::size_t cache_hits() const { return cache_hits_.load(); }

 private:
  Backend& backend_;
  ResponseCache* cache_;
  mutable std::mutex ledger_mutex_;
  CostLedger ledger_;
  RunLog* log_;
  std::atomic<std::size_t> cache_hits_{0};
};

}  // namespace nepner
