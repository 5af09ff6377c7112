#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>

#include "nepner/error.hpp"
#include "nepner/evalkit.hpp"

using namespace nepner;

namespace {
const auto LOC = EntityType::kLocation;
const auto ORG = EntityType::kOrganization;
const auto PER = EntityType::kPerson;
}  // namespace

TEST_CASE("hand case: one true person, one spurious location") {
  auto r = score({{"s", {{0, 1, PER}}}}, {{"s", {{0, 1, PER}, {2, 3, LOC}}}});
  CHECK(r.of(PER).precision == 1.0);
  CHECK(r.of(PER).recall == 1.0);
  CHECK(r.of(LOC).precision == 0.0);
  CHECK(r.of(LOC).recall == 0.0);
  CHECK(r.of(LOC).support == 0);
  CHECK(r.of(LOC).counts.fp == 1);
  CHECK(r.micro.precision == 0.5);
  CHECK(r.micro.recall == 1.0);
  CHECK(r.micro.f1 == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(r.macro_f1 == doctest::Approx(1.0 / 5.0));
}

TEST_CASE("perfect predictions") {
  std::vector<SpanSet> gold{{"a", {{0, 2, ORG}, {3, 4, LOC}}}, {"b", {{1, 2, PER}}}};
  auto r = score(gold, gold);
  for (auto t : {LOC, ORG, PER}) CHECK(r.of(t).f1 == 1.0);
  CHECK(r.micro.f1 == 1.0);
  CHECK(r.sentences == 2);
}

TEST_CASE("sentence ids must line up") {
  CHECK_THROWS_AS(score({{"a", {}}}, {{"b", {}}}), Error);
  CHECK_THROWS_AS(score({{"a", {}}}, {}), Error);
}

TEST_CASE("entity-wise scoring gives no credit for type substitution") {
  std::map<EntityType, std::vector<SpanSet>> gold, pred;
  for (auto t : kAllEntityTypes) {
    gold[t] = {{"s", {}}};
    pred[t] = {{"s", {}}};
  }
  gold[LOC][0].spans = {{0, 1, LOC}};
  pred[ORG][0].spans = {{0, 1, ORG}};
  auto r = entitywise_score(gold, pred);
  CHECK(r.of(ORG).counts.fp == 1);
  CHECK(r.of(LOC).counts.fn == 1);
  CHECK(r.micro.counts.tp == 0);
}

TEST_CASE("all-O predictions give zero recall") {
  std::map<EntityType, std::vector<SpanSet>> gold, pred;
  for (auto t : kAllEntityTypes) {
    gold[t] = {{"s", {{0, 1, t}}}};
    pred[t] = {{"s", {}}};
  }
  auto r = entitywise_score(gold, pred);
  for (auto t : kAllEntityTypes) CHECK(r.of(t).recall == 0.0);
}

TEST_CASE("properties over random fixtures") {
  std::mt19937 rng(41);
  auto random_spans = [&](std::size_t n) {
    std::vector<EntitySpan> out;
    for (std::size_t pos = 0; pos < n;) {
      pos += rng() % 3;
      if (pos >= n) break;
      auto end = std::min(n, pos + 1 + rng() % 3);
      out.push_back({pos, end, kAllEntityTypes[rng() % 5]});
      pos = end;
    }
    return out;
  };
  for (int iter = 0; iter < 100; ++iter) {
    std::vector<SpanSet> gold, pred;
    for (int i = 0; i < 30; ++i) {
      auto id = "s" + std::to_string(i);
      gold.push_back({id, random_spans(12)});
      pred.push_back({id, random_spans(12)});
    }
    auto r = score(gold, pred);
    Counts sum;
    for (auto t : kAllEntityTypes) {
      sum.tp += r.of(t).counts.tp;
      sum.fp += r.of(t).counts.fp;
      sum.fn += r.of(t).counts.fn;
    }
    CHECK(sum.tp == r.micro.counts.tp);
    CHECK(sum.fp == r.micro.counts.fp);
    CHECK(sum.fn == r.micro.counts.fn);

    // same permutation on both sides
    std::vector<std::size_t> perm(gold.size());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<SpanSet> g2, p2;
    for (auto i : perm) {
      g2.push_back(gold[i]);
      p2.push_back(pred[i]);
    }
    auto r2 = score(g2, p2);
    CHECK(r2.micro.f1 == r.micro.f1);

    // one more false positive: precision does not rise, recall is unchanged
    auto p3 = pred;
    p3[0].spans.push_back({40, 41, LOC});
    auto r3 = score(gold, p3);
    CHECK(r3.micro.precision <= r.micro.precision);
    CHECK(r3.micro.recall == r.micro.recall);

    // single-type input: score and entitywise_score agree
    std::map<EntityType, std::vector<SpanSet>> gm, pm;
    std::vector<SpanSet> gs, ps;
    for (std::size_t i = 0; i < gold.size(); ++i) {
      for (auto t : kAllEntityTypes) {
        auto keep = [&](const std::vector<EntitySpan>& v) {
          return t == PER ? filter_spans(v, PER) : std::vector<EntitySpan>{};
        };
        gm[t].push_back({gold[i].sentence_id, keep(gold[i].spans)});
        pm[t].push_back({pred[i].sentence_id, keep(pred[i].spans)});
      }
      gs.push_back({gold[i].sentence_id, filter_spans(gold[i].spans, PER)});
      ps.push_back({pred[i].sentence_id, filter_spans(pred[i].spans, PER)});
    }
    auto a = score(gs, ps);
    auto b = entitywise_score(gm, pm);
    CHECK(a.micro.f1 == b.micro.f1);
    CHECK(a.macro_f1 == b.macro_f1);
  }
}

TEST_CASE("metric formulas and zero cells") {
  auto m = Metrics::from_counts({0, 0, 0});
  CHECK(m.precision == 0.0);
  CHECK(m.recall == 0.0);
  CHECK(m.f1 == 0.0);
  auto k = Metrics::from_counts({3, 1, 2});
  CHECK(k.precision == 0.75);
  CHECK(k.recall == 0.6);
  CHECK(k.f1 == doctest::Approx(2 * 0.75 * 0.6 / 1.35));
  CHECK(k.support == 5);
}

TEST_CASE("per-type table layout") {
  std::array<Counts, kNumEntityTypes> c{};
  c[index_of(LOC)] = {8, 2, 0};
  c[index_of(PER)] = {1, 0, 1};
  auto r = report_from_counts(c);
  auto md = format_per_type_markdown(r);
  CHECK(md.rfind("| Entity | Pre. | Rec. | F1 | Support |\n|---|---:|---:|---:|---:|\n", 0) == 0);
  CHECK(md.find("| DATE | 0.00 | 0.00 | 0.00 | 0 |\n| EVENT") != std::string::npos);
  CHECK(md.find("| LOCATION | 0.80 | 1.00 | 0.89 | 8 |") != std::string::npos);
  CHECK(md.find("| PERSON | 1.00 | 0.50 | 0.67 | 2 |") != std::string::npos);
  auto csv = format_report_csv_rows("entitywise", r);
  CHECK(csv.find("entitywise,LOCATION,0.800000,1.000000,") != std::string::npos);
  CHECK(csv.find("entitywise,MICRO,") != std::string::npos);
  CHECK(csv.find("entitywise,MACRO,") != std::string::npos);
  CHECK(fixed(0.005, 2) == "0.01");
  CHECK(fixed(1.0, 2) == "1.00");
}

TEST_CASE("duplicate predictions count once") {
  auto r = score({{"s", {{0, 1, PER}}}}, {{"s", {{0, 1, PER}, {0, 1, PER}}}});
  CHECK(r.micro.counts.tp == 1);
  CHECK(r.micro.counts.fp == 0);
}
