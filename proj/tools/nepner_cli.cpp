// nepner command-line driver. Links only the C interface.
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nepner/nepner.h"

namespace {

int fail(nepner_status st) {
  std::fprintf(stderr, "nepner: %s\n", nepner_last_error());
  return static_cast<int>(st);
}

// Takes ownership of a C string and writes it to `path` or stdout.
int emit(char* text, const std::string& path) {
  std::string body = text ? text : "";
  nepner_free_string(text);
  if (path.empty() || path == "-") {
    std::fwrite(body.data(), 1, body.size(), stdout);
    return 0;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out || !(out << body) || !out.flush()) {
    std::fprintf(stderr, "nepner: cannot write '%s'\n", path.c_str());
    return NEPNER_ERR_IO;
  }
  return 0;
}

nepner_format parse_format(const std::string& f) {
  return f == "csv" ? NEPNER_FORMAT_CSV : NEPNER_FORMAT_MARKDOWN;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Few-shot LLM named entity recognition experiments"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(nepner_version()));
  int verbosity = 0;
  bool quiet = false;
  app.add_flag("-v,--verbose", verbosity, "Progress messages (repeat for debug output)");
  app.add_flag("-q,--quiet", quiet, "Only print errors");

  std::string format = "md";
  std::string out_path;
  auto add_output = [&](CLI::App* cmd) {
    cmd->add_option("--format", format, "Table format")->check(CLI::IsMember({"md", "csv"}));
    cmd->add_option("-o,--output", out_path, "Write the table to a file instead of stdout");
  };

  auto* stats = app.add_subcommand("stats", "Dataset statistics for one or more BIO files");
  std::vector<std::string> splits;
  bool total = false;
  stats->add_option("splits", splits, "NAME=PATH pairs, one per split")->required();
  stats->add_flag("--total", total, "Append a row summing all splits");
  add_output(stats);

  auto* run = app.add_subcommand("run", "Run one experiment config");
  std::string config_path;
  run->add_option("config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  add_output(run);

  auto* matrix = app.add_subcommand("matrix", "Run every child of a config's matrix section");
  matrix->add_option("config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  add_output(matrix);

  auto* score = app.add_subcommand("score", "Re-score logged predictions against gold");
  std::string predictions, gold, out_dir;
  score->add_option("predictions", predictions, "predictions.jsonl from a run")->required();
  score->add_option("gold", gold, "Gold BIO file")->required();
  score->add_option("--out-dir", out_dir, "Also write report files into this directory");
  add_output(score);

  auto* report = app.add_subcommand("report", "Re-emit report tables of a finished run");
  std::string run_dir;
  report->add_option("run_dir", run_dir, "Run output directory")->required()->check(CLI::ExistingDirectory);

  auto* decode = app.add_subcommand("decode", "Decode one delimited LLM answer");
  std::string sentence, answer, etype;
  decode->add_option("--sentence", sentence, "Whitespace-tokenized input sentence")->required();
  decode->add_option("--answer", answer, "LLM output text")->required();
  decode->add_option("--type", etype, "Entity type")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : NEPNER_ERR_CONFIG;
  }

  nepner_set_log_level(quiet ? 3 : verbosity >= 2 ? 0 : verbosity == 1 ? 1 : 2);

  if (*stats) {
    std::vector<nepner_corpus*> corpora;
    auto cleanup = [&] {
      for (auto* c : corpora) nepner_corpus_free(c);
    };
    for (const auto& spec : splits) {
      auto eq = spec.find('=');
      std::string name = eq == std::string::npos ? spec : spec.substr(0, eq);
      std::string path = eq == std::string::npos ? spec : spec.substr(eq + 1);
      nepner_corpus* c = nullptr;
      if (auto st = nepner_corpus_load(path.c_str(), name.c_str(), &c); st != NEPNER_OK) {
        cleanup();
        return fail(st);
      }
      corpora.push_back(c);
    }
    char* text = nullptr;
    auto st = nepner_stats_table(corpora.data(), corpora.size(), total ? 1 : 0, parse_format(format), &text);
    cleanup();
    if (st != NEPNER_OK) return fail(st);
    return emit(text, out_path);
  }

  if (*run) {
    nepner_run* handle = nullptr;
    if (auto st = nepner_run_create(config_path.c_str(), &handle); st != NEPNER_OK) return fail(st);
    char* text = nullptr;
    auto st = nepner_run_report(handle, parse_format(format), &text);
    if (st == NEPNER_OK && !quiet) {
      std::fprintf(stderr, "outputs written to %s (%zu cache hits)\n", nepner_run_output_dir(handle),
                   nepner_run_cache_hits(handle));
    }
    nepner_run_free(handle);
    if (st != NEPNER_OK) return fail(st);
    return emit(text, out_path);
  }

  if (*matrix) {
    char* text = nullptr;
    if (auto st = nepner_matrix_run(config_path.c_str(), parse_format(format), &text); st != NEPNER_OK) {
      return fail(st);
    }
    return emit(text, out_path);
  }

  if (*score) {
    char* text = nullptr;
    auto st = nepner_score_file(predictions.c_str(), gold.c_str(), out_dir.empty() ? nullptr : out_dir.c_str(),
                                parse_format(format), &text);
    if (st != NEPNER_OK) return fail(st);
    return emit(text, out_path);
  }

  if (*report) {
    if (auto st = nepner_report_reemit(run_dir.c_str()); st != NEPNER_OK) return fail(st);
    return 0;
  }

  if (*decode) {
    char* text = nullptr;
    if (auto st = nepner_decode(sentence.c_str(), answer.c_str(), etype.c_str(), &text); st != NEPNER_OK) {
      return fail(st);
    }
    std::string body = text;
    nepner_free_string(text);
    std::cout << body << '\n';
    return 0;
  }
  return 0;
}
