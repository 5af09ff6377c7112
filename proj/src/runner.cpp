#include "nepner/runner.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "nepner/digest.hpp"
#include "nepner/log.hpp"
#include "nepner/oracle_backend.hpp"
#include "nepner/retrieval.hpp"
#include "nepner/verify.hpp"

namespace nepner {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(Selection s) {
  switch (s) {
    case Selection::kNone:
      return "none";
    case Selection::kRandom:
      return "random";
    case Selection::kSemantic:
      return "semantic";
  }
  return "none";
}

std::optional<Selection> parse_selection(std::string_view s) {
  if (s == "none" || s == "base") return Selection::kNone;
  if (s == "random") return Selection::kRandom;
  if (s == "semantic") return Selection::kSemantic;
  return std::nullopt;
}

// --- config ------------------------------------------------------------------------

namespace {

std::string resolve(const std::string& base_dir, const std::string& path) {
  if (path.empty() || base_dir.empty()) return path;
  fs::path p(path);
  return p.is_absolute() ? path : (fs::path(base_dir) / p).lexically_normal().string();
}

void reject_unknown_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  for (const auto& [key, _] : j.items()) {
    if (!allowed.count(key)) throw config_error("unknown key '" + key + "' in " + where);
  }
}

PromptLanguage language_from(const json& v) {
  auto lang = parse_prompt_language(v.get<std::string>());
  if (!lang) throw config_error("unknown prompt language '" + v.get<std::string>() + "'");
  return *lang;
}

Selection selection_from(const json& v) {
  auto sel = parse_selection(v.get<std::string>());
  if (!sel) throw config_error("unknown selection strategy '" + v.get<std::string>() + "'");
  return *sel;
}

BackendConfig backend_from(const json& j, const std::string& base_dir) {
  reject_unknown_keys(j, {"kind", "url", "api_key_env", "fixture", "manifest", "retry",
                          "requests_per_minute", "timeout_seconds"},
                      "backend");
  BackendConfig b;
  b.kind = j.at("kind").get<std::string>();
  b.url = j.value("url", "");
  b.api_key_env = j.value("api_key_env", "");
  b.fixture = resolve(base_dir, j.value("fixture", ""));
  b.manifest = resolve(base_dir, j.value("manifest", ""));
  b.requests_per_minute = j.value("requests_per_minute", 0.0);
  b.timeout_seconds = j.value("timeout_seconds", 120.0);
  if (j.contains("retry")) {
    const auto& r = j["retry"];
    reject_unknown_keys(r, {"max_attempts", "initial_delay_ms", "multiplier", "max_delay_ms"}, "backend.retry");
    b.retry.max_attempts = r.value("max_attempts", b.retry.max_attempts);
    b.retry.initial_delay = std::chrono::milliseconds(r.value("initial_delay_ms", b.retry.initial_delay.count()));
    b.retry.multiplier = r.value("multiplier", b.retry.multiplier);
    b.retry.max_delay = std::chrono::milliseconds(r.value("max_delay_ms", b.retry.max_delay.count()));
  }
  return b;
}

EmbeddingConfig embeddings_from(const json& j, const std::string& base_dir) {
  reject_unknown_keys(j, {"kind", "path", "url", "model", "api_key_env", "dim", "seed"}, "embeddings");
  EmbeddingConfig e;
  e.kind = j.value("kind", "none");
  e.path = resolve(base_dir, j.value("path", ""));
  e.url = j.value("url", "");
  e.model = j.value("model", "");
  e.api_key_env = j.value("api_key_env", "");
  e.dim = j.value("dim", e.dim);
  e.seed = j.value("seed", e.seed);
  return e;
}

}  // namespace

ExperimentConfig parse_config(std::string_view json_text, const std::string& base_dir) {
  ExperimentConfig c;
  try {
    auto j = json::parse(json_text);
    if (!j.is_object()) throw config_error("config must be a JSON object");
    reject_unknown_keys(j, {"name", "train", "test", "tag_map", "embeddings", "backend", "model",
                            "temperature", "max_output_tokens", "language",
                            "verification_language", "prompt_assets", "selection", "k", "merged",
                            "verify", "repair_merged", "priority", "match_threshold", "seed",
                            "sample_limit", "rates", "cache_dir", "output_dir", "concurrency",
                            "matrix"},
                        "config");
    c.name = j.value("name", c.name);
    c.train_path = resolve(base_dir, j.value("train", ""));
    c.test_path = resolve(base_dir, j.value("test", ""));
    if (j.contains("tag_map")) {
      for (const auto& [suffix, type] : j["tag_map"].items()) {
        auto t = parse_entity_type(type.get<std::string>());
        if (!t) throw config_error("tag_map: unknown entity type '" + type.get<std::string>() + "'");
        c.tag_map[suffix] = *t;
      }
    }
    if (j.contains("embeddings")) c.embeddings = embeddings_from(j["embeddings"], base_dir);
    if (j.contains("backend")) c.backend = backend_from(j["backend"], base_dir);
    c.model_id = j.value("model", c.model_id);
    c.temperature = j.value("temperature", c.temperature);
    c.max_output_tokens = j.value("max_output_tokens", c.max_output_tokens);
    if (j.contains("language")) c.language = language_from(j["language"]);
    if (j.contains("verification_language")) c.verification_language = language_from(j["verification_language"]);
    if (j.contains("prompt_assets")) {
      for (const auto& [lang, path] : j["prompt_assets"].items()) {
        c.prompt_assets[language_from(lang)] = resolve(base_dir, path.get<std::string>());
      }
    }
    if (j.contains("selection")) c.selection = selection_from(j["selection"]);
    c.k = j.value("k", c.k);
    c.merged = j.value("merged", c.merged);
    c.verify = j.value("verify", c.verify);
    c.repair_merged = j.value("repair_merged", c.repair_merged);
    if (j.contains("priority")) c.priority = PriorityOrder::parse(j["priority"].get<std::vector<std::string>>());
    c.match_threshold = j.value("match_threshold", c.match_threshold);
    c.seed = j.value("seed", c.seed);
    if (j.contains("sample_limit") && !j["sample_limit"].is_null()) {
      c.sample_limit = j["sample_limit"].get<std::size_t>();
    }
    if (j.contains("rates")) {
      reject_unknown_keys(j["rates"], {"prompt_per_1k", "output_per_1k"}, "rates");
      c.rates.prompt_per_1k = j["rates"].value("prompt_per_1k", 0.0);
      c.rates.output_per_1k = j["rates"].value("output_per_1k", 0.0);
    }
    c.cache_dir = resolve(base_dir, j.value("cache_dir", ""));
    c.output_dir = resolve(base_dir, j.value("output_dir", ""));
    c.concurrency = j.value("concurrency", c.concurrency);
    if (j.contains("matrix")) {
      const auto& m = j["matrix"];
      reject_unknown_keys(m, {"selection", "k", "language", "verify"}, "matrix");
      MatrixAxes axes;
      if (m.contains("selection")) {
        for (const auto& v : m["selection"]) axes.selection.push_back(selection_from(v));
      }
      if (m.contains("k")) axes.k = m["k"].get<std::vector<std::size_t>>();
      if (m.contains("language")) {
        for (const auto& v : m["language"]) axes.language.push_back(language_from(v));
      }
      if (m.contains("verify")) axes.verify = m["verify"].get<std::vector<bool>>();
      c.matrix = std::move(axes);
    }
  } catch (const json::exception& e) {
    throw config_error(std::string("config: ") + e.what());
  }
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open config '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  auto base = fs::path(path).parent_path().string();
  return parse_config(buf.str(), base.empty() ? "." : base);
}

void ExperimentConfig::validate() const {
  if (test_path.empty()) throw config_error("config: 'test' corpus path is required");
  if (k == 0 && selection != Selection::kNone) {
    throw config_error("config: k=0 requires selection 'none'");
  }
  if (k > 0 && selection == Selection::kNone) {
    throw config_error("config: k>0 requires a selection strategy (random or semantic)");
  }
  if (k > 0 && train_path.empty()) throw config_error("config: few-shot runs need a 'train' corpus");
  if (selection == Selection::kSemantic && embeddings.kind == "none") {
    throw config_error("config: semantic selection requires an embedding source");
  }
  static const std::set<std::string> kEmbeddingKinds = {"none", "file", "hashed", "http"};
  if (!kEmbeddingKinds.count(embeddings.kind)) throw config_error("config: unknown embeddings kind '" + embeddings.kind + "'");
  if (embeddings.kind == "file" && embeddings.path.empty()) throw config_error("config: embeddings.path is required");
  if (embeddings.kind == "http" && embeddings.url.empty()) throw config_error("config: embeddings.url is required");
  static const std::set<std::string> kBackendKinds = {"echo_gold", "scripted", "replay", "http"};
  if (backend.kind.empty()) throw config_error("config: backend.kind is required");
  if (!kBackendKinds.count(backend.kind)) throw config_error("config: unknown backend kind '" + backend.kind + "'");
  if (backend.kind == "http" && backend.url.empty()) throw config_error("config: backend.url is required");
  if (backend.kind == "replay" && backend.fixture.empty()) throw config_error("config: backend.fixture is required");
  if (backend.kind == "scripted" && backend.manifest.empty()) throw config_error("config: backend.manifest is required");
  if (backend.retry.max_attempts < 1) throw config_error("config: backend.retry.max_attempts must be >= 1");
  if (temperature < 0.0) throw config_error("config: temperature must be >= 0");
  if (max_output_tokens <= 0) throw config_error("config: max_output_tokens must be positive");
  if (match_threshold <= 0.0 || match_threshold > 1.0) throw config_error("config: match_threshold must be in (0, 1]");
  if (concurrency == 0) throw config_error("config: concurrency must be >= 1");
  if (sample_limit && *sample_limit == 0) throw config_error("config: sample_limit must be >= 1");
  if (rates.prompt_per_1k < 0.0 || rates.output_per_1k < 0.0) throw config_error("config: rates must be >= 0");
}

// --- run ---------------------------------------------------------------------------

namespace {

std::string env_or_throw(const std::string& var, const char* what) {
  if (var.empty()) return {};
  const char* v = std::getenv(var.c_str());
  if (v == nullptr || *v == '\0') {
    throw config_error(std::string(what) + ": credential environment variable '" + var + "' is not set");
  }
  return v;
}

std::unique_ptr<Backend> make_backend(const ExperimentConfig& c, const LabeledCorpus& test) {
  const auto& b = c.backend;
  if (b.kind == "echo_gold") return std::make_unique<OracleBackend>(test);
  if (b.kind == "scripted") return std::make_unique<OracleBackend>(test, OracleManifest::load(b.manifest));
  if (b.kind == "replay") return ReplayBackend::load(b.fixture);
  HttpBackend::Options opts;
  opts.url = b.url;
  opts.api_key = env_or_throw(b.api_key_env, "backend");
  opts.retry = b.retry;
  opts.requests_per_minute = b.requests_per_minute;
  opts.timeout_seconds = b.timeout_seconds;
  return std::make_unique<HttpBackend>(std::move(opts));
}

std::unique_ptr<EmbeddingProvider> make_provider(const EmbeddingConfig& e) {
  if (e.kind == "file") return FileEmbeddingProvider::load(e.path);
  if (e.kind == "hashed") return std::make_unique<HashedEmbeddingProvider>(e.dim, e.seed);
  if (e.kind == "http") {
    HttpEmbeddingProvider::Options o;
    o.url = e.url;
    o.model = e.model;
    o.api_key = env_or_throw(e.api_key_env, "embeddings");
    return std::make_unique<HttpEmbeddingProvider>(std::move(o));
  }
  return nullptr;
}

PromptTemplates templates_for(const ExperimentConfig& c, PromptLanguage lang) {
  auto it = c.prompt_assets.find(lang);
  return it == c.prompt_assets.end() ? PromptTemplates::defaults(lang)
                                     : PromptTemplates::load(it->second, lang);
}

std::vector<std::size_t> sample_indices(std::size_t n, std::optional<std::size_t> limit,
                                        std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  if (!limit || *limit >= n) return idx;
  auto state = mix_seed(seed, "sample");
  for (std::size_t i = 0; i < *limit; ++i) {
    auto j = i + uniform_below(state, n - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(*limit);
  std::sort(idx.begin(), idx.end());
  return idx;
}

Error with_context(const std::string& context, const std::exception& e) {
  auto kind = ErrorKind::kInvalid;
  if (auto* err = dynamic_cast<const Error*>(&e)) kind = err->kind();
  return Error(kind, "[" + context + "] " + e.what());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw io_error("cannot write '" + path.string() + "'");
  out << text;
  if (!out.flush()) throw io_error("write to '" + path.string() + "' failed");
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw io_error("cannot create output directory '" + dir + "': " + ec.message());
}

}  // namespace

RunResult run_experiment(const ExperimentConfig& config, const RunOptions& options) {
  config.validate();
  if (options.write_outputs && config.output_dir.empty()) {
    throw config_error("config: 'output_dir' is required");
  }

  auto mapping = TagMapping::defaults();
  for (const auto& [suffix, type] : config.tag_map) mapping.set(suffix, type);
  auto test = load_conll(config.test_path, "test", mapping);
  LabeledCorpus train;
  if (config.k > 0) train = load_conll(config.train_path, "train", mapping);

  auto templates = templates_for(config, config.language);
  auto verify_templates = templates_for(config, config.verification_language);

  std::unique_ptr<Backend> owned_backend;
  Backend* backend = options.backend_override;
  if (backend == nullptr) {
    owned_backend = make_backend(config, test);
    backend = owned_backend.get();
  }

  std::unique_ptr<ResponseCache> cache;
  if (!config.cache_dir.empty()) cache = std::make_unique<ResponseCache>(config.cache_dir);

  std::unique_ptr<EmbeddingProvider> provider;
  if (config.selection == Selection::kSemantic) provider = make_provider(config.embeddings);

  std::optional<ExampleIndex> index;
  std::map<std::string, const LabeledSentence*, std::less<>> train_by_id;
  if (config.k > 0) {
    index = build_index(train, provider.get());
    for (const auto& ls : train.sentences) train_by_id.emplace(ls.sentence.sentence_id, &ls);
  }

  std::unique_ptr<RunLog> runlog;
  if (options.write_outputs) {
    ensure_dir(config.output_dir);
    runlog = std::make_unique<RunLog>((fs::path(config.output_dir) / "runlog.jsonl").string());
  }
  Gateway gateway(*backend, cache.get(), config.rates, runlog.get());

  auto chosen = sample_indices(test.sentences.size(), config.sample_limit, config.seed);
  std::vector<EmbeddingVector> queries(chosen.size());
  if (provider) {
    for (std::size_t i = 0; i < chosen.size(); ++i) {
      const auto& s = test.sentences[chosen[i]].sentence;
      try {
        queries[i] = provider->embed(s);
      } catch (const std::exception& e) {
        throw with_context(s.sentence_id + "|embed", e);
      }
    }
  }

  const std::size_t total = chosen.size() * kNumEntityTypes;
  std::vector<PredictionRecord> records(total);
  VerifyOptions verify_opts{config.model_id, config.temperature, 8};

  auto process = [&](std::size_t item) {
    const auto& sentence = test.sentences[chosen[item / kNumEntityTypes]].sentence;
    const auto etype = kAllEntityTypes[item % kNumEntityTypes];
    std::string stage = "select";
    auto context = [&] { return sentence.sentence_id + "|" + std::string(long_name(etype)) + "|" + stage; };
    try {
      auto& rec = records[item];
      rec.sentence_id = sentence.sentence_id;
      rec.etype = etype;

      std::vector<FewShotExample> examples;
      if (config.k > 0) {
        std::vector<std::string> ids;
        if (config.selection == Selection::kSemantic) {
          ids = select_semantic(*index, queries[item / kNumEntityTypes], etype, config.k);
        } else {
          auto seed = mix_seed(config.seed, sentence.sentence_id + "|" + std::string(long_name(etype)));
          ids = select_random(*index, etype, config.k, seed);
        }
        for (const auto& id : ids) {
          const auto* ls = train_by_id.at(id);
          examples.push_back({ls->sentence, filter_spans(ls->gold, etype)});
        }
      }
      rec.examples = examples.size();

      stage = "prompt";
      auto spec = render_ner_prompt(templates, config.language, etype, std::move(examples), sentence);
      CompletionRequest req;
      req.model_id = config.model_id;
      req.prompt = std::move(spec.rendered);
      req.temperature = config.temperature;
      req.max_output_tokens = config.max_output_tokens;
      req.request_tag = make_request_tag({sentence.sentence_id, etype, "ner", std::nullopt});
      rec.prompt_sha256 = sha256_hex(req.prompt);

      stage = "ner";
      auto resp = gateway.complete(req, "ner");
      rec.prompt_tokens = resp.prompt_tokens;
      rec.output_tokens = resp.output_tokens;

      stage = "decode";
      auto decoded = decode_to_bio(sentence, resp.text, etype, config.match_threshold);
      rec.status = decoded.prediction.status;
      rec.spans_before = decoded.prediction.spans;
      rec.diagnostics = std::move(decoded.prediction.diagnostics);

      if (config.verify) {
        stage = "verify";
        auto outcomes = verify_predictions(sentence, rec.spans_before, gateway, etype,
                                           verify_templates, verify_opts);
        rec.verify_requests = outcomes.size();
        for (const auto& o : outcomes) {
          if (!o.diagnostic.empty()) rec.diagnostics.push_back(o.diagnostic);
        }
        rec.spans_after = retained_spans(outcomes);
      } else {
        rec.spans_after = rec.spans_before;
      }
    } catch (const std::exception& e) {
      throw with_context(context(), e);
    }
  };

  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> done{0};
  std::atomic<bool> abort{false};
  const std::size_t step = std::max<std::size_t>(1, total / 10);
  std::mutex error_mutex;
  std::exception_ptr first_error;
  auto worker = [&] {
    while (!abort.load()) {
      auto item = next.fetch_add(1);
      if (item >= total) return;
      try {
        process(item);
        auto n = done.fetch_add(1) + 1;
        if (n % step == 0 || n == total) {
          log_info(config.name + ": " + std::to_string(n) + "/" + std::to_string(total) +
                   " prompts done");
        }
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        abort = true;
      }
    }
  };
  {
    auto n_workers = std::max<std::size_t>(1, std::min(config.concurrency, total));
    std::vector<std::jthread> pool;
    for (std::size_t i = 0; i + 1 < n_workers; ++i) pool.emplace_back(worker);
    worker();
  }
  if (cache) cache->flush_index();
  if (first_error) std::rethrow_exception(first_error);

  RunResult result;
  result.name = config.name;
  result.selection = config.selection;
  result.k = config.k;
  result.language = config.language;
  result.verify = config.verify;
  result.merged = config.merged;
  result.records = std::move(records);
  score_records(result, test, config.priority, config.repair_merged);
  result.ledger = gateway.ledger();
  result.cache_hits = gateway.cache_hits();

  if (options.write_outputs) {
    write_text(fs::path(config.output_dir) / "predictions.jsonl", predictions_to_jsonl(result.records));
    emit_report(result, config.output_dir);
  }
  return result;
}

void score_records(RunResult& result, const LabeledCorpus& test, const PriorityOrder& order,
                   bool repair_merged) {
  std::map<std::string, const LabeledSentence*, std::less<>> by_id;
  for (const auto& ls : test.sentences) by_id.emplace(ls.sentence.sentence_id, &ls);

  // Sentence order of first appearance.
  std::vector<std::string> ids;
  std::map<std::string, std::vector<const PredictionRecord*>, std::less<>> per_sentence;
  result.decode = {};
  for (const auto& rec : result.records) {
    if (!by_id.count(rec.sentence_id)) {
      throw data_error("prediction for unknown sentence '" + rec.sentence_id + "'");
    }
    auto [it, inserted] = per_sentence.try_emplace(rec.sentence_id);
    if (inserted) ids.push_back(rec.sentence_id);
    it->second.push_back(&rec);
    switch (rec.status) {
      case DecodeStatus::kExact:
        ++result.decode.exact;
        break;
      case DecodeStatus::kAligned:
        ++result.decode.aligned;
        break;
      case DecodeStatus::kFailed:
        ++result.decode.failed;
        break;
    }
  }

  auto evaluate = [&](bool after_verification, EvalReport& entitywise, EvalReport& merged) {
    std::map<EntityType, std::vector<SpanSet>> gold_by_type, pred_by_type;
    std::vector<SpanSet> gold_all, pred_merged;
    for (const auto& id : ids) {
      const auto* ls = by_id.at(id);
      std::map<EntityType, std::vector<EntitySpan>> predicted;
      for (const auto* rec : per_sentence.at(id)) {
        const auto& spans = after_verification ? rec->spans_after : rec->spans_before;
        auto& dest = predicted[rec->etype];
        dest.insert(dest.end(), spans.begin(), spans.end());
      }
      for (auto t : kAllEntityTypes) {
        gold_by_type[t].push_back({id, filter_spans(ls->gold, t)});
        pred_by_type[t].push_back({id, predicted[t]});
      }
      if (result.merged) {
        std::map<EntityType, BioSequence> per_type;
        for (auto t : kAllEntityTypes) per_type[t] = spans_to_bio(ls->sentence, predicted[t], t);
        auto bio = merge_bio(per_type, order, repair_merged);
        gold_all.push_back({id, ls->gold});
        pred_merged.push_back({id, extract_spans(bio)});
      }
    }
    entitywise = entitywise_score(gold_by_type, pred_by_type);
    entitywise.failed_decodes = result.decode.failed;
    if (result.merged) {
      merged = score(gold_all, pred_merged);
      merged.failed_decodes = result.decode.failed;
    }
  };

  evaluate(true, result.entitywise, result.merged_report);
  if (result.verify) {
    EvalReport ew, mg;
    evaluate(false, ew, mg);
    result.entitywise_unverified = ew;
    if (result.merged) result.merged_unverified = mg;
  } else {
    result.entitywise_unverified.reset();
    result.merged_unverified.reset();
  }
}

// --- reports -----------------------------------------------------------------------

namespace {

std::string summary_cells(const EvalReport& r) {
  return fixed(r.micro.precision, 2) + " | " + fixed(r.micro.recall, 2) + " | " +
         fixed(r.macro_f1, 2) + " | " + fixed(r.micro.f1, 2);
}

std::string selection_label(Selection s) {
  switch (s) {
    case Selection::kNone:
      return "Base";
    case Selection::kRandom:
      return "Rand";
    case Selection::kSemantic:
      return "Sem";
  }
  return "Base";
}

std::string language_label(PromptLanguage l) {
  return l == PromptLanguage::kEnglish ? "English" : "Nepali";
}

}  // namespace

std::string format_report_markdown(const RunResult& r) {
  std::ostringstream out;
  out << "# " << r.name << "\n\n";
  out << "Selection: " << to_string(r.selection) << ", k=" << r.k << ", prompt language: "
      << to_string(r.language) << ", self-verification: " << (r.verify ? "on" : "off")
      << ", sentences: " << r.entitywise.sentences << "\n\n";
  out << "## Summary\n\n";
  out << "| Mode | Pr. | Re. | F_m | F_μ |\n|---|---:|---:|---:|---:|\n";
  out << "| Without merging | " << summary_cells(r.entitywise) << " |\n";
  if (r.merged) out << "| Merging | " << summary_cells(r.merged_report) << " |\n";
  out << "\n## Per entity type (without merging)\n\n" << format_per_type_markdown(r.entitywise);
  if (r.merged) out << "\n## Per entity type (merging)\n\n" << format_per_type_markdown(r.merged_report);
  if (r.verify && r.entitywise_unverified) {
    out << "\n## Self-verification (without merging)\n\n"
        << format_verification_markdown(*r.entitywise_unverified, r.entitywise);
  }
  out << "\n## Decoding\n\n| EXACT | ALIGNED | FAILED |\n|---:|---:|---:|\n";
  out << "| " << r.decode.exact << " | " << r.decode.aligned << " | " << r.decode.failed << " |\n";
  return out.str();
}

std::string format_report_csv(const RunResult& r) {
  std::string out = kReportCsvHeader;
  out += format_report_csv_rows("entitywise", r.entitywise);
  if (r.merged) out += format_report_csv_rows("merged", r.merged_report);
  if (r.entitywise_unverified) out += format_report_csv_rows("entitywise_unverified", *r.entitywise_unverified);
  if (r.merged_unverified) out += format_report_csv_rows("merged_unverified", *r.merged_unverified);
  return out;
}

namespace {

json eval_to_json(const EvalReport& r) {
  json counts = json::object();
  for (auto t : kAllEntityTypes) {
    const auto& c = r.of(t).counts;
    counts[std::string(long_name(t))] = {c.tp, c.fp, c.fn};
  }
  return {{"sentences", r.sentences}, {"failed_decodes", r.failed_decodes}, {"counts", counts}};
}

EvalReport eval_from_json(const json& j) {
  std::array<Counts, kNumEntityTypes> counts{};
  for (auto t : kAllEntityTypes) {
    const auto& c = j.at("counts").at(std::string(long_name(t)));
    counts[index_of(t)] = {c.at(0).get<std::uint64_t>(), c.at(1).get<std::uint64_t>(),
                           c.at(2).get<std::uint64_t>()};
  }
  auto r = report_from_counts(counts);
  r.sentences = j.at("sentences").get<std::uint64_t>();
  r.failed_decodes = j.at("failed_decodes").get<std::uint64_t>();
  return r;
}

}  // namespace

std::string report_to_json_text(const RunResult& r) {
  json stages = json::object();
  for (const auto& [name, s] : r.ledger.stages()) {
    stages[name] = {{"requests", s.requests}, {"prompt_tokens", s.prompt_tokens},
                    {"output_tokens", s.output_tokens}, {"estimated_requests", s.estimated_requests},
                    {"cost", s.cost}};
  }
  json j = {{"name", r.name},
            {"selection", std::string(to_string(r.selection))},
            {"k", r.k},
            {"language", std::string(to_string(r.language))},
            {"verify", r.verify},
            {"merged", r.merged},
            {"entitywise", eval_to_json(r.entitywise)},
            {"decode", {{"exact", r.decode.exact}, {"aligned", r.decode.aligned}, {"failed", r.decode.failed}}},
            {"ledger", {{"prompt_per_1k", r.ledger.rates().prompt_per_1k},
                        {"output_per_1k", r.ledger.rates().output_per_1k},
                        {"stages", stages}}},
            {"cache_hits", r.cache_hits}};
  if (r.merged) j["merged_report"] = eval_to_json(r.merged_report);
  if (r.entitywise_unverified) j["entitywise_unverified"] = eval_to_json(*r.entitywise_unverified);
  if (r.merged_unverified) j["merged_unverified"] = eval_to_json(*r.merged_unverified);
  return j.dump(2) + "\n";
}

RunResult report_from_json_text(std::string_view text) {
  try {
    auto j = json::parse(text);
    RunResult r;
    r.name = j.at("name").get<std::string>();
    r.selection = parse_selection(j.at("selection").get<std::string>()).value_or(Selection::kNone);
    r.k = j.at("k").get<std::size_t>();
    r.language = parse_prompt_language(j.at("language").get<std::string>()).value_or(PromptLanguage::kEnglish);
    r.verify = j.at("verify").get<bool>();
    r.merged = j.at("merged").get<bool>();
    r.entitywise = eval_from_json(j.at("entitywise"));
    if (j.contains("merged_report")) r.merged_report = eval_from_json(j["merged_report"]);
    if (j.contains("entitywise_unverified")) r.entitywise_unverified = eval_from_json(j["entitywise_unverified"]);
    if (j.contains("merged_unverified")) r.merged_unverified = eval_from_json(j["merged_unverified"]);
    const auto& d = j.at("decode");
    r.decode = {d.at("exact").get<std::uint64_t>(), d.at("aligned").get<std::uint64_t>(),
                d.at("failed").get<std::uint64_t>()};
    const auto& l = j.at("ledger");
    r.ledger = CostLedger(RateTable{l.at("prompt_per_1k").get<double>(), l.at("output_per_1k").get<double>()});
    for (const auto& [name, s] : l.at("stages").items()) {
      r.ledger.add_usage(name, StageUsage{s.at("requests").get<std::uint64_t>(),
                                          s.at("prompt_tokens").get<std::uint64_t>(),
                                          s.at("output_tokens").get<std::uint64_t>(),
                                          s.at("estimated_requests").get<std::uint64_t>(),
                                          s.at("cost").get<double>()});
    }
    r.cache_hits = j.value("cache_hits", std::size_t{0});
    return r;
  } catch (const json::exception& e) {
    throw data_error(std::string("report.json: ") + e.what());
  }
}

void emit_report(const RunResult& result, const std::string& output_dir) {
  ensure_dir(output_dir);
  fs::path dir(output_dir);
  write_text(dir / "report.md", format_report_markdown(result));
  write_text(dir / "report.csv", format_report_csv(result));
  write_text(dir / "report.json", report_to_json_text(result));
  write_text(dir / "ledger.csv", format_ledger_csv(result.ledger));
  write_text(dir / "ledger.md", format_ledger_markdown(result.ledger));
}

void reemit_report(const std::string& run_dir) {
  auto path = fs::path(run_dir) / "report.json";
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  auto result = report_from_json_text(buf.str());
  fs::path dir(run_dir);
  write_text(dir / "report.md", format_report_markdown(result));
  write_text(dir / "report.csv", format_report_csv(result));
  write_text(dir / "ledger.csv", format_ledger_csv(result.ledger));
  write_text(dir / "ledger.md", format_ledger_markdown(result.ledger));
}

// --- predictions -------------------------------------------------------------------

namespace {

json spans_json(const std::vector<EntitySpan>& spans) {
  auto arr = json::array();
  for (const auto& s : spans) arr.push_back({s.start, s.end});
  return arr;
}

std::vector<EntitySpan> spans_from(const json& arr, EntityType type) {
  std::vector<EntitySpan> out;
  for (const auto& p : arr) out.push_back({p.at(0).get<std::size_t>(), p.at(1).get<std::size_t>(), type});
  return out;
}

}  // namespace

std::string predictions_to_jsonl(const std::vector<PredictionRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    json j = {{"sentence_id", r.sentence_id},
              {"etype", std::string(long_name(r.etype))},
              {"prompt_sha256", r.prompt_sha256},
              {"status", std::string(to_string(r.status))},
              {"spans_before", spans_json(r.spans_before)},
              {"spans_after", spans_json(r.spans_after)},
              {"prompt_tokens", r.prompt_tokens},
              {"output_tokens", r.output_tokens},
              {"examples", r.examples},
              {"verify_requests", r.verify_requests},
              {"diagnostics", r.diagnostics}};
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::vector<PredictionRecord> predictions_from_jsonl(std::istream& in, const std::string& origin) {
  std::vector<PredictionRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      auto j = json::parse(line);
      PredictionRecord r;
      r.sentence_id = j.at("sentence_id").get<std::string>();
      auto type = parse_entity_type(j.at("etype").get<std::string>());
      if (!type) throw data_error("unknown etype");
      r.etype = *type;
      r.prompt_sha256 = j.value("prompt_sha256", "");
      auto status = j.value("status", std::string("EXACT"));
      r.status = status == "EXACT" ? DecodeStatus::kExact
                 : status == "ALIGNED" ? DecodeStatus::kAligned
                                       : DecodeStatus::kFailed;
      r.spans_before = spans_from(j.at("spans_before"), r.etype);
      r.spans_after = j.contains("spans_after") ? spans_from(j["spans_after"], r.etype) : r.spans_before;
      r.prompt_tokens = j.value("prompt_tokens", std::uint64_t{0});
      r.output_tokens = j.value("output_tokens", std::uint64_t{0});
      r.examples = j.value("examples", std::size_t{0});
      r.verify_requests = j.value("verify_requests", std::size_t{0});
      if (j.contains("diagnostics")) r.diagnostics = j["diagnostics"].get<std::vector<std::string>>();
      out.push_back(std::move(r));
    } catch (const std::exception& e) {
      throw data_error(origin + ": line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

RunResult rescore_predictions(const std::string& predictions_path, const std::string& gold_path,
                              const PriorityOrder& order, bool repair_merged,
                              const TagMapping& mapping) {
  std::ifstream in(predictions_path, std::ios::binary);
  if (!in) throw io_error("cannot open predictions '" + predictions_path + "'");
  auto records = predictions_from_jsonl(in, predictions_path);
  auto gold = load_conll(gold_path, "test", mapping);
  RunResult r;
  // Settings come from the run's own report.json when it sits next to the
  // predictions; otherwise only verification can be inferred.
  auto sibling = fs::path(predictions_path).parent_path() / "report.json";
  if (std::ifstream meta(sibling, std::ios::binary); meta) {
    std::stringstream buf;
    buf << meta.rdbuf();
    auto saved = report_from_json_text(buf.str());
    r.name = saved.name;
    r.selection = saved.selection;
    r.k = saved.k;
    r.language = saved.language;
    r.verify = saved.verify;
    r.merged = saved.merged;
  } else {
    r.name = "rescore";
    r.verify = std::any_of(records.begin(), records.end(), [](const PredictionRecord& p) {
      return p.verify_requests > 0 || p.spans_before != p.spans_after;
    });
  }
  for (const auto& rec : records) {
    for (const auto& s : rec.spans_before) {
      if (s.start >= s.end) throw data_error("empty span in predictions for '" + rec.sentence_id + "'");
    }
  }
  r.records = std::move(records);
  try {
    score_records(r, gold, order, repair_merged);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kInvalid) throw data_error(e.what());
    throw;
  }
  return r;
}

// --- matrix ------------------------------------------------------------------------

std::vector<ExperimentConfig> expand_matrix(const ExperimentConfig& config) {
  if (!config.matrix) return {config};
  const auto& m = *config.matrix;
  auto selections = m.selection.empty() ? std::vector<Selection>{config.selection} : m.selection;
  auto ks = m.k.empty() ? std::vector<std::size_t>{config.k} : m.k;
  auto langs = m.language.empty() ? std::vector<PromptLanguage>{config.language} : m.language;
  auto verifies = m.verify.empty() ? std::vector<bool>{config.verify} : m.verify;

  std::vector<ExperimentConfig> out;
  std::set<std::string> seen;
  for (auto lang : langs) {
    for (auto sel : selections) {
      for (auto k : ks) {
        for (bool verify : verifies) {
          auto effective = k == 0 ? Selection::kNone : sel;
          if (k > 0 && effective == Selection::kNone) continue;
          auto name = "sel-" + std::string(to_string(effective)) + "_k-" + std::to_string(k) +
                      "_lang-" + std::string(to_string(lang)) + "_verify-" + (verify ? "on" : "off");
          if (!seen.insert(name).second) continue;
          auto child = config;
          child.matrix.reset();
          child.name = config.name + "/" + name;
          child.language = lang;
          child.selection = effective;
          child.k = k;
          child.verify = verify;
          child.output_dir = (fs::path(config.output_dir) / name).string();
          if (child.cache_dir.empty()) child.cache_dir = (fs::path(config.output_dir) / "cache").string();
          out.push_back(std::move(child));
        }
      }
    }
  }
  return out;
}

MatrixResult run_matrix(const ExperimentConfig& config, const RunOptions& options) {
  if (config.output_dir.empty()) throw config_error("config: 'output_dir' is required");
  auto children = expand_matrix(config);
  for (const auto& c : children) c.validate();
  MatrixResult result;
  for (const auto& c : children) {
    log_info("matrix: running " + c.name);
    result.runs.push_back(run_experiment(c, options));
  }
  if (options.write_outputs) {
    ensure_dir(config.output_dir);
    write_text(fs::path(config.output_dir) / "matrix_report.md", format_matrix_markdown(result.runs));
    write_text(fs::path(config.output_dir) / "matrix_report.csv", format_matrix_csv(result.runs));
  }
  return result;
}

std::string format_matrix_markdown(const std::vector<RunResult>& runs) {
  std::ostringstream out;
  out << "| Lang. | Sel. | K | Verify | Pr. | Re. | F_m | F_μ | Pr. (merged) | Re. (merged) | F_m (merged) "
         "| F_μ (merged) |\n";
  out << "|---|---|---:|---|---:|---:|---:|---:|---:|---:|---:|---:|\n";
  for (const auto& r : runs) {
    out << "| " << language_label(r.language) << " | " << selection_label(r.selection) << " | " << r.k
        << " | " << (r.verify ? "yes" : "no") << " | " << summary_cells(r.entitywise) << " | "
        << (r.merged ? summary_cells(r.merged_report) : "- | - | - | -") << " |\n";
  }
  return out.str();
}

std::string format_matrix_csv(const std::vector<RunResult>& runs) {
  std::ostringstream out;
  out << "language,selection,k,verify,ew_precision,ew_recall,ew_f1_macro,ew_f1_micro,"
         "mg_precision,mg_recall,mg_f1_macro,mg_f1_micro\n";
  for (const auto& r : runs) {
    out << to_string(r.language) << ',' << to_string(r.selection) << ',' << r.k << ','
        << (r.verify ? "true" : "false") << ',' << fixed(r.entitywise.micro.precision, 6) << ','
        << fixed(r.entitywise.micro.recall, 6) << ',' << fixed(r.entitywise.macro_f1, 6) << ','
        << fixed(r.entitywise.micro.f1, 6);
    if (r.merged) {
      out << ',' << fixed(r.merged_report.micro.precision, 6) << ','
          << fixed(r.merged_report.micro.recall, 6) << ',' << fixed(r.merged_report.macro_f1, 6)
          << ',' << fixed(r.merged_report.micro.f1, 6) << '\n';
    } else {
      out << ",,,,\n";
    }
  }
  return out.str();
}

}  // namespace nepner
