#include <doctest.h>

#include <atomic>
#include <thread>

#include "support.hpp"
#include "toxtrans/error.hpp"
#include "toxtrans/fewshot.hpp"
#include "toxtrans/gateway.hpp"

using namespace toxtrans;
using Step = ScriptedTranslator::Step;

namespace {

BackendOptions fast_retry(int attempts = 3) {
  BackendOptions o;
  o.retry.max_attempts = attempts;
  o.retry.base_delay = std::chrono::milliseconds(100);
  o.retry.max_delay = std::chrono::milliseconds(250);
  return o;
}

}  // namespace

TEST_CASE("echo translator returns the prompt and records it") {
  Gateway gw;
  auto echo = std::make_shared<EchoTranslator>();
  const auto id = gw.register_translator("echo", echo);
  const auto out = gw.complete(id, "hello lah");
  CHECK(out.raw_text == "hello lah");
  CHECK(out.attempt_count == 1);
  CHECK(out.backend == id);
  CHECK(echo->requests() == std::vector<std::string>{"hello lah"});
}

TEST_CASE("registration errors") {
  Gateway gw;
  gw.register_translator("a", std::make_shared<EchoTranslator>());
  CHECK_THROWS_AS(gw.register_translator("a", std::make_shared<EchoTranslator>()), Error);
  CHECK_THROWS_WITH(gw.complete({"nope", BackendKind::translator}, "x"),
                    doctest::Contains("unregistered translator backend"));
  CHECK_THROWS_AS(gw.embed({"a", BackendKind::embedder}, "x"), Error);
  CHECK(gw.has({"a", BackendKind::translator}));
  CHECK_FALSE(gw.has({"a", BackendKind::embedder}));
  CHECK(gw.describe().size() == 1);
  CHECK(gw.describe()[0]["name"] == "a");
}

TEST_CASE("table translator matches the sentence being translated") {
  Gateway gw;
  const auto id = gw.register_mock_translator("t", {{"Wah lau", "Explanation:\nx\n\nTranslation:\n哇老"}},
                                              MockFallback::error);
  const auto prompt = render_forward_prompt("Wah lau", "singlish", "zh", {});
  CHECK(gw.complete(id, prompt).raw_text.find("哇老") != std::string::npos);
  CHECK(gw.complete(id, "Wah lau").raw_text.find("哇老") != std::string::npos);
  CHECK_THROWS_WITH(gw.complete(id, render_forward_prompt("other", "singlish", "zh", {})),
                    doctest::Contains("no scripted output"));
  const auto echo = gw.register_mock_translator("t2", {}, MockFallback::echo);
  CHECK(gw.complete(echo, prompt).raw_text == prompt.rendered);
}

TEST_CASE("extract_prompt_sentence") {
  const std::vector<ExamplePair> ex{{"a", "b"}};
  const auto p = render_forward_prompt("say \"hi\" lah", "singlish", "ms", ex);
  CHECK(extract_prompt_sentence(p.rendered) == std::optional<std::string>("say \"hi\" lah"));
  CHECK(extract_prompt_sentence("Intro\nSinglish: \"abc\"") == std::optional<std::string>("abc"));
  CHECK_FALSE(extract_prompt_sentence("no label here").has_value());
}

TEST_CASE("transient failures are retried with bounded backoff") {
  Gateway gw(nullptr, 11);
  std::vector<std::chrono::milliseconds> sleeps;
  gw.set_sleep([&](std::chrono::milliseconds d) { sleeps.push_back(d); });
  auto scripted = std::make_shared<ScriptedTranslator>(std::vector<Step>{
      {Step::Kind::transient_failure, "429"}, {Step::Kind::transient_failure, "503"}, {Step::Kind::reply, "ok"}});
  const auto id = gw.register_translator("s", scripted, fast_retry(3));
  const auto out = gw.complete(id, "x");
  CHECK(out.raw_text == "ok");
  CHECK(out.attempt_count == 3);
  REQUIRE(sleeps.size() == 2);
  CHECK(sleeps[0].count() <= 100);
  CHECK(sleeps[1].count() <= 200);
}

TEST_CASE("retry exhaustion and permanent failures") {
  Gateway gw;
  gw.set_sleep([](std::chrono::milliseconds) {});
  auto always = std::make_shared<FunctionTranslator>([](std::string_view) -> std::string {
    throw TransientError("timeout");
  });
  const auto a = gw.register_translator("a", always, fast_retry(4));
  CHECK_THROWS_WITH(gw.complete(a, "x"), doctest::Contains("attempts exhausted after 4 tries; last failure: timeout"));
  CHECK(always->requests().size() == 4);

  auto perm = std::make_shared<ScriptedTranslator>(std::vector<Step>{{Step::Kind::permanent_failure, "bad request"}});
  const auto p = gw.register_translator("p", perm, fast_retry(4));
  CHECK_THROWS_WITH(gw.complete(p, "x"), doctest::Contains("bad request"));
  CHECK(perm->requests().size() == 1);

  const auto empty = gw.register_translator(
      "e", std::make_shared<FunctionTranslator>([](std::string_view) { return std::string(" \n"); }));
  CHECK_THROWS_WITH(gw.complete(empty, "x"), doctest::Contains("returned an empty completion"));
}

TEST_CASE("in-flight requests never exceed the backend's concurrency") {
  Gateway gw;
  std::atomic<int> in_flight{0};
  std::atomic<int> peak{0};
  auto slow = std::make_shared<FunctionTranslator>([&](std::string_view p) {
    const int now = ++in_flight;
    int seen = peak.load();
    while (now > seen && !peak.compare_exchange_weak(seen, now)) {
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
    --in_flight;
    return std::string(p);
  });
  BackendOptions o;
  o.concurrency = 2;
  const auto id = gw.register_translator("slow", slow, o);
  std::vector<std::thread> threads;
  for (int i = 0; i < 8; ++i) {
    threads.emplace_back([&] {
      for (int j = 0; j < 5; ++j) gw.complete(id, "x");
    });
  }
  for (auto& t : threads) t.join();
  CHECK(peak.load() <= 2);
  CHECK(peak.load() >= 1);
}

TEST_CASE("embeddings: deterministic, memoized, persisted") {
  testing::TempDir dir;
  auto cache = std::make_shared<FileEmbeddingCache>(dir.path());
  std::atomic<int> calls{0};
  struct Counting : Embedder {
    std::atomic<int>* calls;
    HashEmbedder inner{8};
    std::vector<double> embed(std::string_view t) override {
      ++*calls;
      return inner.embed(t);
    }
  };
  auto counting = std::make_shared<Counting>();
  counting->calls = &calls;
  std::vector<double> first;
  {
    Gateway gw(cache);
    const auto id = gw.register_embedder("h", counting);
    const auto v = gw.embed(id, "kopi");
    first.assign(v.values().begin(), v.values().end());
    gw.embed(id, "  kopi ");  // same key after trimming
    CHECK(calls == 1);
    CHECK_THROWS_WITH(gw.embed(id, "   "), doctest::Contains("cannot embed empty text"));
  }
  Gateway warm(cache);
  const auto id = warm.register_embedder("h", counting);
  const auto v = warm.embed(id, "kopi");
  CHECK(calls == 1);
  CHECK(std::equal(first.begin(), first.end(), v.values().begin()));
  CHECK(v.dimension() == 8);
}

TEST_CASE("planted embeddings win over the backend") {
  Gateway gw;
  const auto id = gw.register_embedder("h", std::make_shared<HashEmbedder>(4));
  gw.plant_embedding(id, "lah", {1, 0, 0, 0});
  const auto v = gw.embed(id, "lah");
  CHECK(v.values()[0] == 1.0);
  CHECK(v.values()[1] == 0.0);
  CHECK_THROWS_AS(gw.plant_embedding(id, "zero", {0, 0, 0, 0}), Error);
}

TEST_CASE("table embedder") {
  Gateway gw;
  const auto id = gw.register_embedder("t", std::make_shared<TableEmbedder>(
                                                 std::map<std::string, std::vector<double>>{{"a", {1, 2}}}));
  CHECK(gw.embed(id, "a").dimension() == 2);
  CHECK_THROWS_AS(gw.embed(id, "b"), Error);
}

TEST_CASE("hash embedder is deterministic and text-sensitive") {
  HashEmbedder h(16);
  CHECK(h.embed("abc") == h.embed("abc"));
  CHECK(h.embed("abc") != h.embed("abd"));
  for (double x : h.embed("abc")) {
    CHECK(x >= -1.0);
    CHECK(x < 1.0);
  }
}
