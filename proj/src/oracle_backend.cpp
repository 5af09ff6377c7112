#include "nepner/oracle_backend.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "nepner/digest.hpp"
#include "nepner/promptkit.hpp"

namespace nepner {

using nlohmann::json;

namespace {

std::vector<OracleManifest::Entry> read_entries(const json& j, const char* key) {
  std::vector<OracleManifest::Entry> out;
  if (!j.contains(key)) return out;
  for (const auto& e : j.at(key)) {
    auto type = parse_entity_type(e.at("type").get<std::string>());
    if (!type) throw config_error("oracle manifest: unknown type '" + e.at("type").get<std::string>() + "'");
    EntitySpan span{e.at("start").get<std::size_t>(), e.at("end").get<std::size_t>(), *type};
    if (span.start >= span.end) throw config_error("oracle manifest: empty span");
    out.emplace_back(e.at("sentence_id").get<std::string>(), span);
  }
  return out;
}

json write_entries(const std::vector<OracleManifest::Entry>& entries) {
  auto arr = json::array();
  for (const auto& [id, s] : entries) {
    arr.push_back({{"sentence_id", id}, {"start", s.start}, {"end", s.end},
                   {"type", std::string(long_name(s.type))}});
  }
  return arr;
}

}  // namespace

OracleManifest OracleManifest::from_json_text(std::string_view text) {
  try {
    auto j = json::parse(text);
    OracleManifest m;
    m.drop = read_entries(j, "drop");
    m.inject = read_entries(j, "inject");
    m.verify_no = read_entries(j, "verify_no");
    return m;
  } catch (const json::exception& e) {
    throw config_error(std::string("oracle manifest: ") + e.what());
  }
}

OracleManifest OracleManifest::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open oracle manifest '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return from_json_text(buf.str());
}

std::string OracleManifest::to_json_text() const {
  json j = {{"drop", write_entries(drop)}, {"inject", write_entries(inject)},
            {"verify_no", write_entries(verify_no)}};
  return j.dump(2);
}

OracleBackend::OracleBackend(const LabeledCorpus& gold, OracleManifest manifest) {
  for (const auto& ls : gold.sentences) sentences_.emplace(ls.sentence.sentence_id, &ls);
  auto known = [&](const OracleManifest::Entry& e) {
    auto it = sentences_.find(e.first);
    if (it == sentences_.end()) throw config_error("oracle manifest: unknown sentence '" + e.first + "'");
    if (e.second.end > it->second->sentence.tokens.size()) {
      throw config_error("oracle manifest: span out of range in '" + e.first + "'");
    }
  };
  for (const auto& e : manifest.drop) {
    known(e);
    drop_.insert(e);
  }
  for (const auto& e : manifest.inject) {
    known(e);
    inject_[e.first].push_back(e.second);
  }
  for (const auto& e : manifest.verify_no) {
    known(e);
    verify_no_.insert(e);
  }
  // Every answer must be renderable.
  for (const auto& [id, _] : inject_) {
    for (auto t : kAllEntityTypes) spans_to_bio(sentences_.at(id)->sentence, answer_spans(id, t));
  }
  id_ = manifest.empty() ? "echo-gold" : "scripted:" + sha256_hex(manifest.to_json_text()).substr(0, 16);
}

std::vector<EntitySpan> OracleBackend::answer_spans(const std::string& sentence_id,
                                                    EntityType type) const {
  std::vector<EntitySpan> out;
  auto it = sentences_.find(sentence_id);
  if (it == sentences_.end()) return out;
  for (const auto& s : it->second->gold) {
    if (s.type == type && !drop_.count({sentence_id, s})) out.push_back(s);
  }
  if (auto inj = inject_.find(sentence_id); inj != inject_.end()) {
    for (const auto& s : inj->second) {
      if (s.type == type) out.push_back(s);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

BackendReply OracleBackend::call(const CompletionRequest& req) {
  ++calls_;
  auto tag = parse_request_tag(req.request_tag);
  if (!tag) throw BackendError(BackendError::Reason::kRejected, req.request_tag, "unrecognised request tag");
  auto it = sentences_.find(tag->sentence_id);
  if (it == sentences_.end()) {
    throw BackendError(BackendError::Reason::kRejected, req.request_tag, "unknown sentence");
  }
  if (tag->stage == "verify") {
    if (!tag->span) throw BackendError(BackendError::Reason::kRejected, req.request_tag, "verify tag without span");
    return {verify_no_.count({tag->sentence_id, *tag->span}) ? "No" : "Yes", std::nullopt, std::nullopt};
  }
  return {annotate_with_delimiters(it->second->sentence, answer_spans(tag->sentence_id, tag->etype)),
          std::nullopt, std::nullopt};
}

}  // namespace nepner
