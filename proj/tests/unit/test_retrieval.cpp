#include <doctest.h>

#include <httplib.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <sstream>
#include <thread>

#include "nepner/error.hpp"
#include "nepner/retrieval.hpp"

using namespace nepner;

namespace {

Sentence sentence(const std::string& id, const std::string& text) {
  Sentence s;
  s.sentence_id = id;
  std::istringstream in(text);
  for (std::string t; in >> t;) s.tokens.push_back(t);
  return s;
}

const auto LOC = EntityType::kLocation;
const auto PER = EntityType::kPerson;

}  // namespace

TEST_CASE("cosine similarity") {
  std::vector<double> a{1, 2, 3}, b{4, 5, 6};
  CHECK(cosine_similarity(a, a) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(cosine_similarity(std::vector<double>{1, 0}, std::vector<double>{0, 1}) == 0.0);
  long double dot = 4.0L + 10.0L + 18.0L;
  long double expected = dot / std::sqrt(14.0L * 77.0L);
  CHECK(std::fabs(cosine_similarity(a, b) - static_cast<double>(expected)) < 1e-15);
  CHECK_THROWS_AS(cosine_similarity(a, std::vector<double>{1, 2}), Error);
  CHECK_THROWS_AS(cosine_similarity(a, std::vector<double>{0, 0, 0}), Error);
}

TEST_CASE("index validation") {
  ExampleIndex idx(2);
  idx.add("a", type_bit(LOC), {1, 0});
  CHECK_THROWS_AS(idx.add("a", type_bit(LOC), {0, 1}), Error);
  CHECK_THROWS_AS(idx.add("b", type_bit(LOC), {0, 1, 2}), Error);
  CHECK_THROWS_AS(idx.add("c", type_bit(LOC), {NAN, 1}), Error);
  CHECK(idx.size() == 1);
}

TEST_CASE("semantic selection basics") {
  ExampleIndex idx(2);
  idx.add("s1", type_bit(LOC), {1, 0});
  idx.add("s2", type_bit(LOC) | type_bit(PER), {1, 1});
  idx.add("s3", type_bit(LOC), {0, 1});
  idx.add("s4", type_bit(PER), {1, 0.1});
  std::vector<double> q{1, 0.2};
  CHECK(select_semantic(idx, q, LOC, 3) == std::vector<std::string>{"s1", "s2", "s3"});
  CHECK(select_semantic(idx, std::vector<double>{0, 1}, LOC, 1) == std::vector<std::string>{"s3"});
  // pool never contains sentences without the type
  for (const auto& id : select_semantic(idx, q, PER, 5)) CHECK((id == "s2" || id == "s4"));
  Diagnostics diag;
  CHECK(select_semantic(idx, q, PER, 5, &diag).size() == 2);
  CHECK(diag.messages.size() == 1);
  CHECK_THROWS_AS(select_semantic(idx, q, EntityType::kEvent, 1), Error);
  CHECK_THROWS_AS(select_semantic(idx, q, LOC, 0), Error);
}

TEST_CASE("semantic ties go to the smaller sentence id") {
  ExampleIndex idx(2);
  idx.add("z", type_bit(LOC), {2, 0});
  idx.add("b", type_bit(LOC), {1, 0});
  idx.add("m", type_bit(LOC), {3, 0});
  CHECK(select_semantic(idx, std::vector<double>{1, 0}, LOC, 2) == std::vector<std::string>{"b", "m"});
}

TEST_CASE("semantic selection is invariant to positive query scaling") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  for (int iter = 0; iter < 50; ++iter) {
    std::size_t d = 2 + rng() % 30;
    ExampleIndex idx(d);
    for (int i = 0; i < 80; ++i) {
      std::vector<double> v(d);
      for (auto& x : v) x = g(rng);
      idx.add("s" + std::to_string(i), type_bit(LOC), v);
    }
    std::vector<double> q(d);
    for (auto& x : q) x = g(rng);
    auto base = select_semantic(idx, q, LOC, 10);
    for (double c : {0.001, 3.7, 1e6}) {
      auto scaled = q;
      for (auto& x : scaled) x *= c;
      CHECK(select_semantic(idx, scaled, LOC, 10) == base);
    }
  }
}

TEST_CASE("random selection") {
  ExampleIndex idx(0);
  for (int i = 0; i < 5; ++i) idx.add("p" + std::to_string(i), type_bit(LOC), {});
  idx.add("other", type_bit(PER), {});
  auto all = select_random(idx, LOC, 5, 42);
  auto sorted = all;
  std::sort(sorted.begin(), sorted.end());
  CHECK(sorted == std::vector<std::string>{"p0", "p1", "p2", "p3", "p4"});
  CHECK(select_random(idx, LOC, 3, 9) == select_random(idx, LOC, 3, 9));
  CHECK_THROWS_AS(select_random(idx, EntityType::kDate, 1, 0), Error);
}

TEST_CASE("random selection frequencies stay within three sigma") {
  ExampleIndex idx(0);
  for (const char* id : {"a", "b", "c", "d"}) idx.add(id, type_bit(LOC), {});
  std::map<std::string, int> freq;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) freq[select_random(idx, LOC, 1, mix_seed(99, std::to_string(i)))[0]]++;
  const double sigma = std::sqrt(draws * 0.25 * 0.75);
  for (const auto& [id, n] : freq) CHECK_MESSAGE(std::fabs(n - 2500.0) <= 3 * sigma, id << "=" << n);
  CHECK(freq.size() == 4);
}

TEST_CASE("uniform_below stays in range") {
  std::uint64_t state = 1;
  for (std::uint64_t bound : {1ull, 2ull, 3ull, 7ull, 1000ull, (1ull << 63) + 5}) {
    for (int i = 0; i < 200; ++i) CHECK(uniform_below(state, bound) < bound);
  }
}

TEST_CASE("hashed embedder") {
  HashedEmbeddingProvider p(32, 7);
  auto a = p.embed(sentence("x", "नेपाल राष्ट्र बैंक"));
  auto b = p.embed(sentence("y", "नेपाल राष्ट्र बैंक"));
  auto c = p.embed(sentence("z", "नेपाल राष्ट्र बिमा"));
  CHECK(a.size() == 32);
  CHECK(a == b);
  CHECK(a != c);
  CHECK(HashedEmbeddingProvider(32, 8).embed(sentence("x", "नेपाल राष्ट्र बैंक")) != a);
}

TEST_CASE("file embeddings") {
  std::istringstream in("dim=3\ntrain-000000\t0.5 -1 2e-3\ntrain-000001\t1 1 1\n");
  auto p = FileEmbeddingProvider::parse(in, "mem");
  CHECK(p->dim() == 3);
  CHECK(p->embed(sentence("train-000000", "a")) == std::vector<double>{0.5, -1, 2e-3});
  CHECK_THROWS_AS(p->embed(sentence("missing", "a")), Error);
  std::istringstream bad("dim=3\nx\t1 2\n");
  CHECK_THROWS_AS(FileEmbeddingProvider::parse(bad, "mem"), Error);
  std::istringstream no_header("x\t1 2\n");
  CHECK_THROWS_AS(FileEmbeddingProvider::parse(no_header, "mem"), Error);
}

TEST_CASE("build_index from the bundled fixture") {
  auto train = load_conll(std::string(NEPNER_SOURCE_DIR) + "/tests/data/train.bio", "train");
  auto provider = FileEmbeddingProvider::load(std::string(NEPNER_SOURCE_DIR) + "/tests/data/embeddings.tsv");
  auto idx = build_index(train, provider.get());
  CHECK(idx.size() == train.sentences.size());
  CHECK(idx.dim() == 16);
  auto random_only = build_index(train, nullptr);
  CHECK(random_only.dim() == 0);
  CHECK(random_only.pool(LOC).size() == idx.pool(LOC).size());
}

TEST_CASE("http embedding provider against a local stub") {
  httplib::Server server;
  server.Post("/embed", [](const httplib::Request& req, httplib::Response& res) {
    if (req.get_header_value("Authorization") != "Bearer k") {
      res.status = 401;
      return;
    }
    res.set_content(R"({"data": [{"embedding": [0.25, 0.5, 1.0]}]})", "application/json");
  });
  int port = server.bind_to_any_port("127.0.0.1");
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  HttpEmbeddingProvider::Options o;
  o.url = "http://127.0.0.1:" + std::to_string(port) + "/embed";
  o.api_key = "k";
  HttpEmbeddingProvider p(o);
  CHECK(p.embed(sentence("a", "क ख")) == std::vector<double>{0.25, 0.5, 1.0});
  o.api_key = "wrong";
  HttpEmbeddingProvider denied(o);
  CHECK_THROWS_AS(denied.embed(sentence("a", "क")), Error);
  server.stop();
  t.join();
}
