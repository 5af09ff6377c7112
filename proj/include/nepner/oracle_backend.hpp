#pragma once

#include <atomic>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "nepner/corpus.hpp"
#include "nepner/gateway.hpp"

namespace nepner {

// Edits applied to the gold annotation by OracleBackend.
//   {"drop":      [{"sentence_id": "...", "start": 0, "end": 2, "type": "PERSON"}],
//    "inject":    [...],
//    "verify_no": [...]}
struct OracleManifest {
  using Entry = std::pair<std::string, EntitySpan>;
  std::vector<Entry> drop;
  std::vector<Entry> inject;
  std::vector<Entry> verify_no;

  bool empty() const { return drop.empty() && inject.empty() && verify_no.empty(); }
  static OracleManifest load(const std::string& path);
  static OracleManifest from_json_text(std::string_view text);
  std::string to_json_text() const;
};

// Mock LLM that knows the gold annotation of the test corpus and reads the
// request tag to decide what to say. NER requests get the gold-annotated
// sentence (minus dropped, plus injected spans); verification requests get
// "No" for spans listed in verify_no and "Yes" otherwise.
class OracleBackend : public Backend {
 public:
  explicit OracleBackend(const LabeledCorpus& gold, OracleManifest manifest = {});

  std::string id() const override { return id_; }
  BackendReply call(const CompletionRequest& req) override;
  std::size_t calls() const { return calls_.load(); }

  // The spans the NER answer for (sentence, type) will carry.
  std::vector<EntitySpan> answer_spans(const std::string& sentence_id, EntityType type) const;

 private:
  std::string id_;
  std::map<std::string, const LabeledSentence*, std::less<>> sentences_;
  std::set<OracleManifest::Entry> drop_;
  std::map<std::string, std::vector<EntitySpan>> inject_;
  std::set<OracleManifest::Entry> verify_no_;
  std::atomic<std::size_t> calls_{0};
};

}  // namespace nepner
