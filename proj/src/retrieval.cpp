#include "nepner/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <httplib.h>
#include <json.hpp>

#include "http_util.hpp"
#include "nepner/error.hpp"

namespace nepner {

EntityTypeSet types_present(const std::vector<EntitySpan>& spans) {
  EntityTypeSet set = 0;
  for (const auto& s : spans) set |= type_bit(s.type);
  return set;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw invalid_argument("cosine_similarity: dimension mismatch (" + std::to_string(a.size()) +
                           " vs " + std::to_string(b.size()) + ")");
  }
  // extended accumulation so that parallel vectors tie exactly after rounding
  long double dot = 0.0L, na = 0.0L, nb = 0.0L;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<long double>(a[i]) * b[i];
    na += static_cast<long double>(a[i]) * a[i];
    nb += static_cast<long double>(b[i]) * b[i];
  }
  if (na == 0.0L || nb == 0.0L) throw invalid_argument("cosine_similarity: zero-norm vector");
  auto sim = static_cast<double>(dot / std::sqrt(na * nb));
  return std::clamp(sim, -1.0, 1.0);
}

void ExampleIndex::add(std::string sentence_id, EntityTypeSet types, EmbeddingVector vector) {
  if (vector.size() != dim_) {
    throw invalid_argument("embedding for '" + sentence_id + "' has " +
                           std::to_string(vector.size()) + " components, index dim is " +
                           std::to_string(dim_));
  }
  for (double v : vector) {
    if (!std::isfinite(v)) throw invalid_argument("non-finite embedding component for '" + sentence_id + "'");
  }
  if (by_id_.count(sentence_id)) throw invalid_argument("duplicate sentence id '" + sentence_id + "' in index");
  by_id_.emplace(sentence_id, entries_.size());
  entries_.push_back({std::move(sentence_id), types, std::move(vector)});
}

std::vector<const ExampleIndex::Entry*> ExampleIndex::pool(EntityType type) const {
  std::vector<const Entry*> out;
  for (const auto& e : entries_) {
    if (e.types & type_bit(type)) out.push_back(&e);
  }
  return out;
}

namespace {

std::vector<const ExampleIndex::Entry*> checked_pool(const ExampleIndex& index, EntityType type,
                                                     std::size_t k) {
  if (k == 0) throw invalid_argument("example selection requires k >= 1");
  auto pool = index.pool(type);
  if (pool.empty()) {
    throw invalid_argument("no training sentence contains a " + std::string(long_name(type)) +
                           " entity; example pool is empty");
  }
  return pool;
}

void warn_short_pool(Diagnostics* diag, EntityType type, std::size_t pool, std::size_t k) {
  warn(diag, "example pool for " + std::string(long_name(type)) + " has " +
                 std::to_string(pool) + " sentence(s), fewer than k=" + std::to_string(k) +
                 "; using the whole pool");
}

}  // namespace

std::vector<std::string> select_semantic(const ExampleIndex& index, std::span<const double> query,
                                         EntityType type, std::size_t k, Diagnostics* diag) {
  if (index.dim() == 0) throw invalid_argument("semantic selection needs an index with embeddings");
  auto pool = checked_pool(index, type, k);
  if (pool.size() < k) warn_short_pool(diag, type, pool.size(), k);

  std::vector<std::pair<double, const ExampleIndex::Entry*>> scored;
  scored.reserve(pool.size());
  for (const auto* e : pool) scored.emplace_back(cosine_similarity(query, e->vector), e);

  auto better = [](const auto& x, const auto& y) {
    if (x.first != y.first) return x.first > y.first;
    return x.second->sentence_id < y.second->sentence_id;
  };
  auto take = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take),
                    scored.end(), better);
  std::vector<std::string> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) out.push_back(scored[i].second->sentence_id);
  return out;
}

std::uint64_t fnv1a64(std::string_view data, std::uint64_t basis) {
  std::uint64_t h = basis;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t mix_seed(std::uint64_t seed, std::string_view salt) {
  std::uint64_t state = seed ^ fnv1a64(salt);
  return splitmix64(state);
}

std::uint64_t uniform_below(std::uint64_t& state, std::uint64_t bound) {
  // Reject the top partial bucket so every residue is equally likely.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  while (true) {
    auto r = splitmix64(state);
    if (r < limit) return r % bound;
  }
}

std::vector<std::string> select_random(const ExampleIndex& index, EntityType type, std::size_t k,
                                       std::uint64_t seed, Diagnostics* diag) {
  auto pool = checked_pool(index, type, k);
  if (pool.size() < k) warn_short_pool(diag, type, pool.size(), k);
  auto take = std::min(k, pool.size());
  std::uint64_t state = seed;
  // Partial Fisher-Yates.
  for (std::size_t i = 0; i < take; ++i) {
    auto j = i + uniform_below(state, pool.size() - i);
    std::swap(pool[i], pool[j]);
  }
  std::vector<std::string> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) out.push_back(pool[i]->sentence_id);
  return out;
}

// ---------------------------------------------------------------------------

std::unique_ptr<FileEmbeddingProvider> FileEmbeddingProvider::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open embedding file '" + path + "'");
  return parse(in, path);
}

std::unique_ptr<FileEmbeddingProvider> FileEmbeddingProvider::parse(std::istream& in,
                                                                    std::string origin) {
  auto p = std::unique_ptr<FileEmbeddingProvider>(new FileEmbeddingProvider());
  p->origin_ = origin;
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& msg) {
    return data_error(origin + ": line " + std::to_string(line_no) + ": " + msg);
  };
  if (!std::getline(in, line)) throw data_error(origin + ": empty embedding file");
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line.rfind("dim=", 0) != 0) throw fail("expected header 'dim=<D>'");
  try {
    std::size_t used = 0;
    auto d = std::stoull(line.substr(4), &used);
    if (used != line.size() - 4 || d == 0) throw fail("bad dimension '" + line.substr(4) + "'");
    p->dim_ = static_cast<std::size_t>(d);
  } catch (const std::logic_error&) {
    throw fail("bad dimension '" + line.substr(4) + "'");
  }

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0) throw fail("expected sentence_id<TAB>values");
    auto id = line.substr(0, tab);
    EmbeddingVector v;
    v.reserve(p->dim_);
    const char* cur = line.c_str() + tab + 1;
    const char* end = line.c_str() + line.size();
    while (cur < end) {
      while (cur < end && *cur == ' ') ++cur;
      if (cur >= end) break;
      char* next = nullptr;
      double value = std::strtod(cur, &next);
      if (next == cur || (next < end && *next != ' ')) throw fail("malformed number");
      if (!std::isfinite(value)) throw fail("non-finite component");
      v.push_back(value);
      cur = next;
    }
    if (v.size() != p->dim_) {
      throw fail("vector for '" + id + "' has " + std::to_string(v.size()) +
                 " components, expected " + std::to_string(p->dim_));
    }
    if (!p->vectors_.emplace(id, std::move(v)).second) throw fail("duplicate sentence id '" + id + "'");
  }
  return p;
}

EmbeddingVector FileEmbeddingProvider::embed(const Sentence& sentence) {
  auto it = vectors_.find(sentence.sentence_id);
  if (it == vectors_.end()) {
    throw data_error("embedding file " + origin_ + " has no vector for sentence '" +
                     sentence.sentence_id + "'");
  }
  return it->second;
}

HashedEmbeddingProvider::HashedEmbeddingProvider(std::size_t dim, std::uint64_t seed)
    : dim_(dim), seed_(seed) {
  if (dim_ < 2) throw config_error("hashed embedder needs dim >= 2");
}

std::string HashedEmbeddingProvider::id() const {
  return "hashed:" + std::to_string(dim_) + ":" + std::to_string(seed_);
}

EmbeddingVector HashedEmbeddingProvider::embed(const Sentence& sentence) {
  // Component 0 is a constant bias so no sentence maps to the zero vector;
  // each token adds four signed, hash-weighted features to the rest.
  EmbeddingVector v(dim_, 0.0);
  v[0] = 1.0;
  for (const auto& tok : sentence.tokens) {
    std::uint64_t state = mix_seed(seed_, tok);
    for (int f = 0; f < 4; ++f) {
      auto r = splitmix64(state);
      auto bucket = 1 + static_cast<std::size_t>(r % (dim_ - 1));
      double weight = 0.5 + static_cast<double>((r >> 20) & 0xFFFFF) / static_cast<double>(0xFFFFF);
      v[bucket] += (r >> 63) ? weight : -weight;
    }
  }
  return v;
}

HttpEmbeddingProvider::HttpEmbeddingProvider(Options options) : options_(std::move(options)) {
  detail::parse_url(options_.url);
}

EmbeddingVector HttpEmbeddingProvider::embed(const Sentence& sentence) {
  auto url = detail::parse_url(options_.url);
  httplib::Client cli(url.scheme_host_port);
  auto secs = static_cast<time_t>(options_.timeout_seconds);
  cli.set_read_timeout(secs, 0);
  cli.set_connection_timeout(secs, 0);
  httplib::Headers headers;
  if (!options_.api_key.empty()) headers.emplace("Authorization", "Bearer " + options_.api_key);
  nlohmann::json body = {{"input", sentence.text()}};
  if (!options_.model.empty()) body["model"] = options_.model;
  auto res = cli.Post(url.path, headers, body.dump(), "application/json");
  if (!res) {
    throw Error(ErrorKind::kBackend, "embedding endpoint " + options_.url + " unreachable: " +
                                         httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    throw Error(ErrorKind::kBackend,
                "embedding endpoint returned HTTP " + std::to_string(res->status));
  }
  EmbeddingVector v;
  try {
    auto j = nlohmann::json::parse(res->body);
    const nlohmann::json* arr = nullptr;
    if (j.contains("embedding")) {
      arr = &j["embedding"];
    } else if (j.contains("data") && j["data"].is_array() && !j["data"].empty()) {
      arr = &j["data"][0]["embedding"];
    }
    if (arr == nullptr || !arr->is_array()) throw Error(ErrorKind::kBackend, "embedding response has no vector");
    v = arr->get<EmbeddingVector>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kBackend, std::string("malformed embedding response: ") + e.what());
  }
  if (options_.dim == 0) options_.dim = v.size();
  if (v.size() != options_.dim) {
    throw Error(ErrorKind::kBackend, "embedding endpoint returned " + std::to_string(v.size()) +
                                         " components, expected " + std::to_string(options_.dim));
  }
  return v;
}

ExampleIndex build_index(const LabeledCorpus& corpus, EmbeddingProvider* provider) {
  std::vector<EmbeddingVector> vectors(corpus.sentences.size());
  if (provider) {
    for (std::size_t i = 0; i < vectors.size(); ++i) {
      vectors[i] = provider->embed(corpus.sentences[i].sentence);
    }
  }
  ExampleIndex index(vectors.empty() ? (provider ? provider->dim() : 0) : vectors.front().size());
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    const auto& ls = corpus.sentences[i];
    index.add(ls.sentence.sentence_id, types_present(ls.gold), std::move(vectors[i]));
  }
  return index;
}

}  // namespace nepner
