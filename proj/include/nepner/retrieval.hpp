#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "nepner/corpus.hpp"
#include "nepner/log.hpp"

namespace nepner {

using EmbeddingVector = std::vector<double>;

// Bit i set <=> the sentence's gold contains kAllEntityTypes[i].
using EntityTypeSet = std::uint8_t;

inline constexpr EntityTypeSet type_bit(EntityType t) {
  return static_cast<EntityTypeSet>(1u << index_of(t));
}
EntityTypeSet types_present(const std::vector<EntitySpan>& spans);

// dot(a, b) / (|a| |b|). Throws Error(kInvalid) on dimension mismatch or a
// zero-norm argument.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

// Immutable once built. An index with dim() == 0 carries no vectors and is
// only usable for random selection.
class ExampleIndex {
 public:
  struct Entry {
    std::string sentence_id;
    EntityTypeSet types = 0;
    EmbeddingVector vector;
  };

  explicit ExampleIndex(std::size_t dim) : dim_(dim) {}

  // Throws Error(kInvalid) on duplicate ids, wrong length or non-finite
  // components.
  void add(std::string sentence_id, EntityTypeSet types, EmbeddingVector vector);

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return entries_.size(); }
  const std::vector<Entry>& entries() const { return entries_; }

  // Entries whose gold contains `type`, in insertion order.
  std::vector<const Entry*> pool(EntityType type) const;

 private:
  std::size_t dim_;
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t, std::less<>> by_id_;
};

// Top-k pool entries by cosine similarity, descending; ties by ascending
// sentence id. Returns the whole pool (with a warning) when it is smaller
// than k. Throws Error(kInvalid) when the pool is empty or k == 0.
std::vector<std::string> select_semantic(const ExampleIndex& index, std::span<const double> query,
                                         EntityType type, std::size_t k,
                                         Diagnostics* diag = nullptr);

// Uniform sample without replacement from the type pool, deterministic in
// `seed` across platforms.
std::vector<std::string> select_random(const ExampleIndex& index, EntityType type, std::size_t k,
                                       std::uint64_t seed, Diagnostics* diag = nullptr);

// Portable helpers shared with the runner.
std::uint64_t fnv1a64(std::string_view data, std::uint64_t basis = 0xcbf29ce484222325ULL);
std::uint64_t mix_seed(std::uint64_t seed, std::string_view salt);
// Uniform integer in [0, bound) by rejection sampling; bound > 0.
std::uint64_t uniform_below(std::uint64_t& state, std::uint64_t bound);
std::uint64_t splitmix64(std::uint64_t& state);

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::string id() const = 0;
  virtual std::size_t dim() const = 0;
  // Deterministic per (provider, sentence). Throws on failure.
  virtual EmbeddingVector embed(const Sentence& sentence) = 0;
};

// Vectors precomputed by an external model, keyed by sentence id.
//   dim=<D>
//   <sentence_id>\t<v1> <v2> ... <vD>
class FileEmbeddingProvider : public EmbeddingProvider {
 public:
  static std::unique_ptr<FileEmbeddingProvider> load(const std::string& path);
  static std::unique_ptr<FileEmbeddingProvider> parse(std::istream& in, std::string origin);

  std::string id() const override { return "file:" + origin_; }
  std::size_t dim() const override { return dim_; }
  EmbeddingVector embed(const Sentence& sentence) override;
  bool contains(const std::string& sentence_id) const { return vectors_.count(sentence_id) != 0; }

 private:
  std::string origin_;
  std::size_t dim_ = 0;
  std::map<std::string, EmbeddingVector, std::less<>> vectors_;
};

// Deterministic hashed bag-of-tokens embedder; no external model needed.
class HashedEmbeddingProvider : public EmbeddingProvider {
 public:
  explicit HashedEmbeddingProvider(std::size_t dim, std::uint64_t seed = 0);
  std::string id() const override;
  std::size_t dim() const override { return dim_; }
  EmbeddingVector embed(const Sentence& sentence) override;

 private:
  std::size_t dim_;
  std::uint64_t seed_;
};

// POSTs {"model": ..., "input": "<sentence text>"} and accepts either
// {"embedding": [...]} or {"data": [{"embedding": [...]}]}.
class HttpEmbeddingProvider : public EmbeddingProvider {
 public:
  struct Options {
    std::string url;
    std::string model;
    std::string api_key;  // sent as a bearer token when non-empty
    std::size_t dim = 0;  // 0 = accept the first response's length
    double timeout_seconds = 30.0;
  };
  explicit HttpEmbeddingProvider(Options options);
  std::string id() const override { return "http:" + options_.url; }
  std::size_t dim() const override { return options_.dim; }
  EmbeddingVector embed(const Sentence& sentence) override;

 private:
  Options options_;
};

// Builds an index over `corpus` with one vector per sentence. With a null
// provider the index has dim 0.
ExampleIndex build_index(const LabeledCorpus& corpus, EmbeddingProvider* provider);

}  // namespace nepner
