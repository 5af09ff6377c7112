#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>

#include "nepner/error.hpp"
#include "nepner/runner.hpp"
#include "temp_dir.hpp"

using namespace nepner;
namespace fs = std::filesystem;

namespace {

std::string data(const std::string& leaf) { return std::string(NEPNER_SOURCE_DIR) + "/tests/data/" + leaf; }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ExperimentConfig echo_config(const std::string& out) {
  auto cfg = parse_config(R"({"test": ")" + data("test.bio") + R"(", "backend": {"kind": "echo_gold"},
                             "output_dir": ")" + out + R"("})",
                          ".");
  return cfg;
}

std::optional<ErrorKind> kind_of(const std::string& json) {
  try {
    auto cfg = parse_config(json, "/tmp");
    cfg.validate();
  } catch (const Error& e) {
    return e.kind();
  }
  return std::nullopt;
}

std::string message_of(const std::string& json) {
  try {
    parse_config(json, "/tmp").validate();
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("config validation") {
  const std::string base = R"("test": "t.bio", "output_dir": "o", )";
  CHECK(kind_of("{" + base + R"("backend": {"kind": "echo_gold"}})") == std::nullopt);
  CHECK(message_of("{" + base + R"("backend": {"kind": "echo_gold"}, "selection": "random", "k": 0})")
            .find("k=0") != std::string::npos);
  CHECK(message_of("{" + base + R"("backend": {"kind": "echo_gold"}, "selection": "none", "k": 3, "train": "x"})")
            .find("selection") != std::string::npos);
  CHECK(message_of("{" + base + R"("backend": {"kind": "echo_gold"}, "selection": "semantic", "k": 3, "train": "x"})")
            .find("embedding") != std::string::npos);
  CHECK(message_of("{" + base + R"("backend": {"kind": "echo_gold"}, "selection": "random", "k": 3})")
            .find("train") != std::string::npos);
  CHECK(message_of("{" + base + R"("backend": {"kind": "echo_gold"}, "colour": 1})").find("colour") !=
        std::string::npos);
  CHECK(message_of("{" + base + R"("backend": {"kind": "echo_gold", "retries": 1}})").find("retries") !=
        std::string::npos);
  CHECK(kind_of("{" + base + R"("backend": {"kind": "telepathy"}})") == ErrorKind::kConfig);
  CHECK(kind_of("{" + base + R"("backend": {"kind": "http"}})") == ErrorKind::kConfig);
  CHECK(kind_of(R"({"backend": {"kind": "echo_gold"}})") == ErrorKind::kConfig);
  CHECK(kind_of("{" + base + R"("backend": {"kind": "echo_gold"}, "language": "klingon"})") == ErrorKind::kConfig);
  CHECK(kind_of("{" + base + R"("backend": {"kind": "echo_gold"}, "temperature": -1})") == ErrorKind::kConfig);
  CHECK(kind_of("{" + base + R"("backend": {"kind": "echo_gold"}, "k": "many"})") == ErrorKind::kConfig);
  CHECK(kind_of("{not json") == ErrorKind::kConfig);
}

TEST_CASE("relative paths resolve against the config directory") {
  auto cfg = parse_config(R"({"test": "t.bio", "output_dir": "out", "backend": {"kind": "echo_gold"}})", "/srv/cfg");
  CHECK(cfg.test_path == "/srv/cfg/t.bio");
  CHECK(cfg.output_dir == "/srv/cfg/out");
}

TEST_CASE("missing credential variable is a config error") {
  ::unsetenv("NEPNER_TEST_NO_SUCH_KEY");
  TempDir tmp;
  auto cfg = parse_config(R"({"test": ")" + data("test.bio") + R"(", "output_dir": ")" + tmp.str("o") +
                              R"(", "backend": {"kind": "http", "url": "http://127.0.0.1:9/v1",
                              "api_key_env": "NEPNER_TEST_NO_SUCH_KEY"}})",
                          ".");
  try {
    run_experiment(cfg);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kConfig);
    CHECK(std::string(e.what()).find("NEPNER_TEST_NO_SUCH_KEY") != std::string::npos);
  }
}

TEST_CASE("echo run is perfect and writes its outputs") {
  TempDir tmp;
  auto cfg = echo_config(tmp.str("run"));
  cfg.verify = true;
  auto r = run_experiment(cfg);
  CHECK(r.entitywise.micro.f1 == 1.0);
  CHECK(r.merged_report.micro.f1 == 1.0);
  CHECK(r.entitywise_unverified->micro.f1 == 1.0);
  CHECK(r.decode.failed == 0);
  CHECK(r.records.size() == 500);
  for (auto leaf : {"report.md", "report.csv", "report.json", "ledger.csv", "ledger.md", "predictions.jsonl",
                    "runlog.jsonl"})
    CHECK(fs::exists(fs::path(cfg.output_dir) / leaf));

  SUBCASE("report round-trips through json and re-emission") {
    auto md = slurp(fs::path(cfg.output_dir) / "report.md");
    auto csv = slurp(fs::path(cfg.output_dir) / "report.csv");
    fs::remove(fs::path(cfg.output_dir) / "report.md");
    reemit_report(cfg.output_dir);
    CHECK(slurp(fs::path(cfg.output_dir) / "report.md") == md);
    CHECK(slurp(fs::path(cfg.output_dir) / "report.csv") == csv);
  }
  SUBCASE("rescoring predictions gives the same numbers") {
    auto again = rescore_predictions((fs::path(cfg.output_dir) / "predictions.jsonl").string(), cfg.test_path);
    CHECK(format_report_csv(again) == format_report_csv(r));
  }
}

TEST_CASE("sample limit picks a seeded, stable subset") {
  TempDir tmp;
  auto cfg = echo_config(tmp.str("a"));
  cfg.sample_limit = 17;
  cfg.seed = 3;
  RunOptions opt;
  opt.write_outputs = false;
  auto a = run_experiment(cfg, opt);
  auto b = run_experiment(cfg, opt);
  CHECK(a.entitywise.sentences == 17);
  std::set<std::string> ids_a, ids_b;
  for (auto& rec : a.records) ids_a.insert(rec.sentence_id);
  for (auto& rec : b.records) ids_b.insert(rec.sentence_id);
  CHECK(ids_a.size() == 17);
  CHECK(ids_a == ids_b);
  cfg.seed = 4;
  auto c = run_experiment(cfg, opt);
  std::set<std::string> ids_c;
  for (auto& rec : c.records) ids_c.insert(rec.sentence_id);
  CHECK(ids_c != ids_a);
}

TEST_CASE("matrix expansion") {
  auto cfg = parse_config(R"({"test": "t.bio", "train": "tr.bio", "output_dir": "/o",
      "backend": {"kind": "echo_gold"}, "embeddings": {"kind": "hashed"},
      "matrix": {"selection": ["random", "semantic"], "k": [0, 1, 5],
                 "language": ["english", "nepali"], "verify": [false, true]}})",
                          "/");
  auto kids = expand_matrix(cfg);
  // k=0 collapses both strategies into one zero-shot cell
  CHECK(kids.size() == (1 + 2 * 2) * 2 * 2);
  std::set<std::string> names;
  for (auto& k : kids) {
    names.insert(fs::path(k.output_dir).filename().string());
    CHECK_FALSE(k.matrix.has_value());
    if (k.k == 0) CHECK(k.selection == Selection::kNone);
    CHECK("/o/" + fs::path(k.output_dir).filename().string() == k.output_dir);
    CHECK(k.name == "run/" + fs::path(k.output_dir).filename().string());
  }
  CHECK(names.size() == kids.size());
  CHECK(names.count("sel-semantic_k-5_lang-nepali_verify-on") == 1);
}

TEST_CASE("errors carry the failing item and keep the partial runlog") {
  TempDir tmp;
  auto cfg = echo_config(tmp.str("fail"));
  cfg.concurrency = 1;
  ScriptedBackend b("flaky", [](const CompletionRequest& r) -> std::string {
    auto tag = parse_request_tag(r.request_tag);
    if (tag->sentence_id == "test-000003") throw data_error("boom");
    return "nothing here";
  });
  RunOptions opt;
  opt.backend_override = &b;
  try {
    run_experiment(cfg, opt);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kData);
    std::string what = e.what();
    CHECK(what.find("[test-000003|") != std::string::npos);
    CHECK(what.find("|ner]") != std::string::npos);
  }
  auto log = slurp(fs::path(cfg.output_dir) / "runlog.jsonl");
  CHECK(log.find("test-000000") != std::string::npos);
}
