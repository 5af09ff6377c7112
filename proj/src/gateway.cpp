#include "nepner/gateway.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "http_util.hpp"
#include "nepner/digest.hpp"
#include "nepner/log.hpp"

namespace nepner {

namespace fs = std::filesystem;
using nlohmann::json;

BackendError::BackendError(Reason reason, std::string request_tag, const std::string& detail)
    : Error(ErrorKind::kBackend,
            std::string(to_string(reason)) + " [" + request_tag + "]: " + detail),
      reason_(reason),
      request_tag_(std::move(request_tag)) {}

std::string_view to_string(BackendError::Reason r) {
  switch (r) {
    case BackendError::Reason::kAuth:
      return "authentication failed";
    case BackendError::Reason::kRetriesExhausted:
      return "retries exhausted";
    case BackendError::Reason::kMalformedPayload:
      return "malformed backend payload";
    case BackendError::Reason::kRejected:
      return "request rejected";
    case BackendError::Reason::kNoFixture:
      return "no replay fixture";
  }
  return "backend error";
}

std::uint64_t estimate_tokens(std::string_view text) { return (text.size() + 3) / 4; }

CompletionResponse complete(Backend& backend, const CompletionRequest& req) {
  if (req.prompt.empty()) throw invalid_argument("completion request with empty prompt [" + req.request_tag + "]");
  auto reply = backend.call(req);
  CompletionResponse resp;
  resp.text = std::move(reply.text);
  resp.tokens_estimated = !reply.prompt_tokens || !reply.output_tokens;
  resp.prompt_tokens = reply.prompt_tokens ? *reply.prompt_tokens : estimate_tokens(req.prompt);
  resp.output_tokens = reply.output_tokens ? *reply.output_tokens : estimate_tokens(resp.text);
  return resp;
}

// --- request tags ------------------------------------------------------------

std::string make_request_tag(const RequestTag& tag) {
  auto out = tag.sentence_id + "|" + std::string(long_name(tag.etype)) + "|" + tag.stage;
  if (tag.span) out += "|" + std::to_string(tag.span->start) + "-" + std::to_string(tag.span->end);
  return out;
}

std::optional<RequestTag> parse_request_tag(std::string_view tag) {
  std::vector<std::string_view> parts;
  std::size_t pos = 0;
  while (true) {
    auto bar = tag.find('|', pos);
    parts.push_back(tag.substr(pos, bar == std::string_view::npos ? bar : bar - pos));
    if (bar == std::string_view::npos) break;
    pos = bar + 1;
  }
  if (parts.size() != 3 && parts.size() != 4) return std::nullopt;
  auto type = parse_entity_type(parts[1]);
  if (!type || parts[0].empty()) return std::nullopt;
  RequestTag out{std::string(parts[0]), *type, std::string(parts[2]), std::nullopt};
  if (parts.size() == 4) {
    auto dash = parts[3].find('-');
    if (dash == std::string_view::npos) return std::nullopt;
    try {
      auto start = std::stoull(std::string(parts[3].substr(0, dash)));
      auto end = std::stoull(std::string(parts[3].substr(dash + 1)));
      out.span = EntitySpan{start, end, *type};
    } catch (const std::logic_error&) {
      return std::nullopt;
    }
  }
  return out;
}

// --- replay / scripted -------------------------------------------------------

std::unique_ptr<ReplayBackend> ReplayBackend::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open replay fixture '" + path + "'");
  return parse(in, path);
}

std::unique_ptr<ReplayBackend> ReplayBackend::parse(std::istream& in, std::string origin) {
  auto backend = std::make_unique<ReplayBackend>();
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    try {
      auto j = json::parse(line);
      std::string hash;
      if (j.contains("prompt_sha256")) {
        hash = j.at("prompt_sha256").get<std::string>();
      } else {
        hash = sha256_hex(j.at("prompt").get<std::string>());
      }
      BackendReply reply;
      reply.text = j.at("text").get<std::string>();
      if (j.contains("prompt_tokens")) reply.prompt_tokens = j["prompt_tokens"].get<std::uint64_t>();
      if (j.contains("output_tokens")) reply.output_tokens = j["output_tokens"].get<std::uint64_t>();
      backend->add(hash, std::move(reply));
    } catch (const json::exception& e) {
      throw data_error(origin + ": line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return backend;
}

void ReplayBackend::add(const std::string& prompt_sha256, BackendReply reply) {
  fixtures_[prompt_sha256] = std::move(reply);
}

BackendReply ReplayBackend::call(const CompletionRequest& req) {
  auto hash = sha256_hex(req.prompt);
  auto it = fixtures_.find(hash);
  if (it == fixtures_.end()) {
    throw BackendError(BackendError::Reason::kNoFixture, req.request_tag, "prompt " + hash);
  }
  return it->second;
}

BackendReply ScriptedBackend::call(const CompletionRequest& req) {
  ++calls_;
  return BackendReply{responder_(req), std::nullopt, std::nullopt};
}

// --- http ----------------------------------------------------------------------

std::chrono::milliseconds RetryPolicy::delay_for(int retry) const {
  double ms = static_cast<double>(initial_delay.count()) * std::pow(multiplier, std::max(0, retry - 1));
  ms = std::min(ms, static_cast<double>(max_delay.count()));
  return std::chrono::milliseconds(static_cast<std::int64_t>(ms));
}

HttpBackend::HttpBackend(Options options) : options_(std::move(options)) {
  detail::parse_url(options_.url);
  if (options_.retry.max_attempts < 1) throw config_error("retry.max_attempts must be >= 1");
}

void HttpBackend::wait_for_rate_slot() {
  if (options_.requests_per_minute <= 0.0) return;
  auto interval = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
      std::chrono::duration<double>(60.0 / options_.requests_per_minute));
  std::chrono::steady_clock::time_point slot;
  {
    std::lock_guard<std::mutex> lock(rate_mutex_);
    auto now = std::chrono::steady_clock::now();
    slot = std::max(now, next_slot_);
    next_slot_ = slot + interval;
  }
  std::this_thread::sleep_until(slot);
}

BackendReply HttpBackend::call(const CompletionRequest& req) {
  auto url = detail::parse_url(options_.url);
  json body = {{"model", req.model_id},
               {"messages", json::array({{{"role", "user"}, {"content", req.prompt}}})},
               {"temperature", req.temperature},
               {"max_tokens", req.max_output_tokens}};
  auto payload = body.dump();
  httplib::Headers headers;
  if (!options_.api_key.empty()) headers.emplace("Authorization", "Bearer " + options_.api_key);

  std::string last_error;
  for (int attempt = 1; attempt <= options_.retry.max_attempts; ++attempt) {
    wait_for_rate_slot();
    ++attempts_;
    httplib::Client cli(url.scheme_host_port);
    auto secs = static_cast<time_t>(options_.timeout_seconds);
    cli.set_connection_timeout(secs, 0);
    cli.set_read_timeout(secs, 0);
    cli.set_write_timeout(secs, 0);
    auto res = cli.Post(url.path, headers, payload, "application/json");

    std::optional<std::chrono::milliseconds> server_delay;
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
    } else if (res->status == 401 || res->status == 403) {
      throw BackendError(BackendError::Reason::kAuth, req.request_tag,
                         "HTTP " + std::to_string(res->status));
    } else if (res->status == 429 || res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      if (res->has_header("Retry-After")) {
        try {
          auto secs_after = std::stod(res->get_header_value("Retry-After"));
          if (secs_after >= 0) server_delay = std::chrono::milliseconds(static_cast<std::int64_t>(secs_after * 1000));
        } catch (const std::logic_error&) {
        }
      }
    } else if (res->status != 200) {
      throw BackendError(BackendError::Reason::kRejected, req.request_tag,
                         "HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200));
    } else {
      try {
        auto j = json::parse(res->body);
        BackendReply reply;
        reply.text = j.at("choices").at(0).at("message").at("content").get<std::string>();
        if (j.contains("usage") && j["usage"].is_object()) {
          const auto& u = j["usage"];
          if (u.contains("prompt_tokens")) reply.prompt_tokens = u["prompt_tokens"].get<std::uint64_t>();
          if (u.contains("completion_tokens")) reply.output_tokens = u["completion_tokens"].get<std::uint64_t>();
        }
        return reply;
      } catch (const json::exception& e) {
        throw BackendError(BackendError::Reason::kMalformedPayload, req.request_tag, e.what());
      }
    }

    if (attempt < options_.retry.max_attempts) {
      auto delay = options_.retry.delay_for(attempt);
      if (server_delay) delay = std::min(std::max(delay, *server_delay), options_.retry.max_delay);
      log_info("retrying [" + req.request_tag + "] after " + last_error);
      std::this_thread::sleep_for(delay);
    }
  }
  throw BackendError(BackendError::Reason::kRetriesExhausted, req.request_tag,
                     std::to_string(options_.retry.max_attempts) + " attempt(s), last: " + last_error);
}

// --- cache -----------------------------------------------------------------------

std::string cache_key(std::string_view backend_id, const CompletionRequest& req) {
  char temp[64];
  std::snprintf(temp, sizeof temp, "%.17g", req.temperature);
  std::string material;
  material.reserve(backend_id.size() + req.model_id.size() + req.prompt.size() + 40);
  material.append(backend_id).push_back('\0');
  material.append(req.model_id).push_back('\0');
  material.append(temp).push_back('\0');
  material.append(req.prompt);
  return sha256_hex(material);
}

namespace {
constexpr std::size_t kIndexFlushEvery = 64;
}

ResponseCache::ResponseCache(std::string directory)
    : dir_(std::move(directory)),
      data_path_((fs::path(dir_) / "entries.jsonl").string()),
      index_path_((fs::path(dir_) / "index.json").string()) {
  std::error_code ec;
  fs::create_directories(dir_, ec);
  if (ec) throw io_error("cannot create cache directory '" + dir_ + "': " + ec.message());
  load();
}

ResponseCache::~ResponseCache() {
  try {
    flush_index();
  } catch (const std::exception& e) {
    log_warning(std::string("response cache: index flush failed: ") + e.what());
  }
}

void ResponseCache::load() {
  std::uint64_t indexed_bytes = 0;
  std::error_code ec;
  auto data_size = fs::exists(data_path_, ec) ? fs::file_size(data_path_, ec) : 0;
  if (ec) data_size = 0;

  if (fs::exists(index_path_)) {
    try {
      std::ifstream in(index_path_, std::ios::binary);
      auto j = json::parse(in);
      auto bytes = j.at("data_bytes").get<std::uint64_t>();
      if (bytes > data_size) throw std::runtime_error("index covers more bytes than the data file");
      std::unordered_map<std::string, std::uint64_t> offsets;
      for (const auto& [key, off] : j.at("entries").items()) offsets[key] = off.get<std::uint64_t>();
      offsets_ = std::move(offsets);
      indexed_bytes = bytes;
    } catch (const std::exception& e) {
      log_warning("response cache: ignoring unreadable index (" + std::string(e.what()) + "); rebuilding");
      offsets_.clear();
      indexed_bytes = 0;
    }
  }

  // Recover entries appended after the last index write.
  if (data_size > indexed_bytes) {
    std::ifstream in(data_path_, std::ios::binary);
    in.seekg(static_cast<std::streamoff>(indexed_bytes));
    std::uint64_t offset = indexed_bytes;
    std::string line;
    while (std::getline(in, line)) {
      bool complete_line = !in.eof();
      auto next = offset + line.size() + (complete_line ? 1 : 0);
      if (complete_line && !line.empty()) {
        try {
          auto j = json::parse(line);
          offsets_[j.at("key").get<std::string>()] = offset;
        } catch (const std::exception&) {
          log_warning("response cache: skipping corrupt entry at byte " + std::to_string(offset));
        }
      } else if (!line.empty()) {
        log_warning("response cache: ignoring torn entry at byte " + std::to_string(offset));
      }
      offset = next;
    }
    ++unflushed_;
  }
  data_bytes_ = data_size;
}

std::optional<CompletionResponse> ResponseCache::lookup(const std::string& key) {
  std::lock_guard<std::mutex> lock(mutex_);
  return lookup_locked(key);
}

std::optional<CompletionResponse> ResponseCache::lookup_locked(const std::string& key) {
  auto it = offsets_.find(key);
  if (it == offsets_.end()) return std::nullopt;
  try {
    std::ifstream in(data_path_, std::ios::binary);
    in.seekg(static_cast<std::streamoff>(it->second));
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("entry beyond end of data file");
    auto j = json::parse(line);
    if (j.at("key").get<std::string>() != key) throw std::runtime_error("key mismatch");
    CompletionResponse resp;
    resp.text = j.at("text").get<std::string>();
    resp.prompt_tokens = j.at("prompt_tokens").get<std::uint64_t>();
    resp.output_tokens = j.at("output_tokens").get<std::uint64_t>();
    resp.tokens_estimated = j.value("estimated", false);
    resp.from_cache = true;
    return resp;
  } catch (const std::exception& e) {
    log_warning("response cache: corrupt entry for key " + key + " treated as miss (" + e.what() + ")");
    offsets_.erase(it);
    return std::nullopt;
  }
}

void ResponseCache::store(const std::string& key, const CompletionResponse& response) {
  std::lock_guard<std::mutex> lock(mutex_);
  store_locked(key, response);
}

void ResponseCache::store_locked(const std::string& key, const CompletionResponse& response) {
  json j = {{"key", key},
            {"text", response.text},
            {"prompt_tokens", response.prompt_tokens},
            {"output_tokens", response.output_tokens},
            {"estimated", response.tokens_estimated}};
  auto line = j.dump() + "\n";

  bool needs_separator = false;
  if (data_bytes_ > 0) {
    std::ifstream in(data_path_, std::ios::binary);
    in.seekg(static_cast<std::streamoff>(data_bytes_ - 1));
    char last = '\n';
    in.get(last);
    needs_separator = last != '\n';
  }
  std::ofstream out(data_path_, std::ios::binary | std::ios::app);
  if (!out) throw io_error("cannot append to cache file '" + data_path_ + "'");
  if (needs_separator) {
    out << '\n';
    ++data_bytes_;
  }
  out << line;
  out.flush();
  if (!out) throw io_error("write to cache file '" + data_path_ + "' failed");
  offsets_[key] = data_bytes_;
  data_bytes_ += line.size();
  if (++unflushed_ >= kIndexFlushEvery) write_index_locked();
}

void ResponseCache::flush_index() {
  std::lock_guard<std::mutex> lock(mutex_);
  if (unflushed_ > 0) write_index_locked();
}

void ResponseCache::write_index_locked() {
  json entries = json::object();
  // Sorted for a stable on-disk form.
  std::vector<std::pair<std::string, std::uint64_t>> sorted(offsets_.begin(), offsets_.end());
  std::sort(sorted.begin(), sorted.end());
  for (const auto& [k, off] : sorted) entries[k] = off;
  json j = {{"version", 1}, {"data_bytes", data_bytes_}, {"entries", entries}};
  auto tmp = index_path_ + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("cannot write cache index '" + tmp + "'");
    out << j.dump() << '\n';
    if (!out.flush()) throw io_error("write to cache index '" + tmp + "' failed");
  }
  std::error_code ec;
  fs::rename(tmp, index_path_, ec);
  if (ec) throw io_error("cannot replace cache index '" + index_path_ + "': " + ec.message());
  unflushed_ = 0;
}

std::size_t ResponseCache::size() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return offsets_.size();
}

CompletionResponse cached_complete(ResponseCache& cache, Backend& backend,
                                   const CompletionRequest& req) {
  auto key = cache_key(backend.id(), req);
  std::promise<CompletionResponse> promise;
  {
    std::unique_lock<std::mutex> lock(cache.mutex_);
    if (auto hit = cache.lookup_locked(key)) return *hit;
    auto it = cache.inflight_.find(key);
    if (it != cache.inflight_.end()) {
      auto fut = it->second;
      lock.unlock();
      auto resp = fut.get();
      resp.from_cache = true;
      return resp;
    }
    cache.inflight_.emplace(key, promise.get_future().share());
  }

  CompletionResponse resp;
  try {
    resp = complete(backend, req);
    std::lock_guard<std::mutex> lock(cache.mutex_);
    cache.store_locked(key, resp);
    cache.inflight_.erase(key);
  } catch (...) {
    {
      std::lock_guard<std::mutex> lock(cache.mutex_);
      cache.inflight_.erase(key);
    }
    promise.set_exception(std::current_exception());
    throw;
  }
  promise.set_value(resp);
  return resp;
}

// --- ledger ------------------------------------------------------------------------

double CostLedger::cost_of(const CompletionResponse& resp) const {
  if (resp.from_cache) return 0.0;
  return static_cast<double>(resp.prompt_tokens) / 1000.0 * rates_.prompt_per_1k +
         static_cast<double>(resp.output_tokens) / 1000.0 * rates_.output_per_1k;
}

void CostLedger::record(const CompletionResponse& resp, std::string_view stage) {
  if (resp.from_cache) return;
  auto it = stages_.find(stage);
  if (it == stages_.end()) it = stages_.emplace(std::string(stage), StageUsage{}).first;
  auto& s = it->second;
  ++s.requests;
  s.prompt_tokens += resp.prompt_tokens;
  s.output_tokens += resp.output_tokens;
  if (resp.tokens_estimated) ++s.estimated_requests;
  s.cost += cost_of(resp);
}

StageUsage CostLedger::total() const {
  StageUsage t;
  for (const auto& [_, s] : stages_) {
    t.requests += s.requests;
    t.prompt_tokens += s.prompt_tokens;
    t.output_tokens += s.output_tokens;
    t.estimated_requests += s.estimated_requests;
    t.cost += s.cost;
  }
  return t;
}

void CostLedger::add_usage(std::string_view stage, const StageUsage& usage) {
  auto it = stages_.find(stage);
  if (it == stages_.end()) it = stages_.emplace(std::string(stage), StageUsage{}).first;
  auto& s = it->second;
  s.requests += usage.requests;
  s.prompt_tokens += usage.prompt_tokens;
  s.output_tokens += usage.output_tokens;
  s.estimated_requests += usage.estimated_requests;
  s.cost += usage.cost;
}

CostLedger record_usage(CostLedger ledger, const CompletionResponse& resp, std::string_view stage) {
  ledger.record(resp, stage);
  return ledger;
}

namespace {

std::string money(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

std::string format_ledger_csv(const CostLedger& ledger) {
  std::ostringstream out;
  out << "stage,requests,prompt_tokens,output_tokens,estimated_requests,cost\n";
  auto row = [&](std::string_view name, const StageUsage& s) {
    out << name << ',' << s.requests << ',' << s.prompt_tokens << ',' << s.output_tokens << ','
        << s.estimated_requests << ',' << money(s.cost) << '\n';
  };
  for (const auto& [name, s] : ledger.stages()) row(name, s);
  row("total", ledger.total());
  return out.str();
}

std::string format_ledger_markdown(const CostLedger& ledger) {
  std::ostringstream out;
  out << "| Stage | Requests | Prompt tokens | Output tokens | Estimated | Cost |\n";
  out << "|---|---:|---:|---:|---:|---:|\n";
  auto row = [&](std::string_view name, const StageUsage& s) {
    out << "| " << name << " | " << s.requests << " | " << s.prompt_tokens << " | "
        << s.output_tokens << " | " << s.estimated_requests << " | " << money(s.cost) << " |\n";
  };
  for (const auto& [name, s] : ledger.stages()) row(name, s);
  row("total", ledger.total());
  return out.str();
}

// --- run log ------------------------------------------------------------------------

RunLog::RunLog(const std::string& path) : out_(path, std::ios::binary | std::ios::trunc) {
  if (!out_) throw io_error("cannot open run log '" + path + "'");
}

void RunLog::record(const CompletionRequest& req, std::string_view stage,
                    const CompletionResponse* resp, double latency_ms, std::string_view error) {
  json j = {{"tag", req.request_tag},
            {"stage", stage},
            {"model", req.model_id},
            {"prompt_sha256", sha256_hex(req.prompt)}};
  if (resp) {
    j["response_sha256"] = sha256_hex(resp->text);
    j["prompt_tokens"] = resp->prompt_tokens;
    j["output_tokens"] = resp->output_tokens;
    j["estimated"] = resp->tokens_estimated;
    j["from_cache"] = resp->from_cache;
  }
  j["latency_ms"] = std::round(latency_ms * 1000.0) / 1000.0;
  if (!error.empty()) j["error"] = error;
  auto line = j.dump();
  std::lock_guard<std::mutex> lock(mutex_);
  out_ << line << '\n';
  out_.flush();
}

// --- gateway ----------------------------------------------------------------------

CompletionResponse Gateway::complete(const CompletionRequest& req, std::string_view stage) {
  auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  };
  try {
    auto resp = cache_ ? cached_complete(*cache_, backend_, req) : nepner::complete(backend_, req);
    if (resp.from_cache) ++cache_hits_;
    {
      std::lock_guard<std::mutex> lock(ledger_mutex_);
      ledger_.record(resp, stage);
    }
    if (log_) log_->record(req, stage, &resp, elapsed());
    return resp;
  } catch (const std::exception& e) {
    if (log_) log_->record(req, stage, nullptr, elapsed(), e.what());
    throw;
  }
}

CostLedger Gateway::ledger() const {
  std::lock_guard<std::mutex> lock(ledger_mutex_);
  return ledger_;
}

}  // namespace nepner
