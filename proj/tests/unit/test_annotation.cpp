#include <doctest.h>

#include <algorithm>
#include <fstream>

#include "oracles.hpp"
#include "support.hpp"
#include "toxtrans/annotation.hpp"
#include "toxtrans/error.hpp"
#include "toxtrans/store.hpp"

using namespace toxtrans;

namespace {

CandidateTranslation llm(const std::string& sid, const std::string& id, const std::string& text,
                         const std::string& model) {
  return {id, sid, text, "zh", {{OriginKind::llm, model}}, 1};
}

SentenceTask task3(const std::string& sid) {
  return {{sid, "source " + sid, "singlish", Toxicity::harmful},
          {llm(sid, "m1", sid + " one", "a"), llm(sid, "m2", sid + " two", "b"),
           llm(sid, "m3", sid + " three", "c")},
          false,
          false};
}

RoundState round_with(int n, std::vector<SentenceTask> tasks) {
  RoundState r;
  r.round_number = n;
  r.target_language = "zh";
  r.tasks = std::move(tasks);
  return r;
}

Vote vote(const std::string& ann, const std::string& sid, int round, std::set<std::string> sel,
          std::optional<std::string> custom = std::nullopt) {
  return {ann, sid, round, std::move(sel), std::move(custom), std::nullopt};
}

void cast(RoundState& r, const Vote& v) {
  validate_vote(r, v);
  r.votes[{v.sentence_id, v.annotator}] = v;
}

std::vector<std::string> ids(const SentenceTask& t) {
  std::vector<std::string> out;
  for (const auto& c : t.candidates) out.push_back(c.id);
  return out;
}

std::vector<nlohmann::json> fixture_events() {
  std::vector<nlohmann::json> out;
  std::ifstream in(testing::fixture("campaign_ms.jsonl"));
  std::string line;
  while (std::getline(in, line)) out.push_back(nlohmann::json::parse(line));
  return out;
}

}  // namespace

TEST_CASE("round constraints") {
  const auto r1 = constraints_for_round(1);
  CHECK(r1.requires_selection_or_custom);
  CHECK_FALSE(r1.max_select.has_value());
  CHECK(constraints_for_round(2).max_select == 2u);
  const auto r3 = constraints_for_round(3);
  CHECK(r3.min_select == 1u);
  CHECK(r3.max_select == 1u);
  CHECK_FALSE(r3.custom_allowed);
  CHECK(r3.ranking_allowed);
  CHECK_THROWS_AS(constraints_for_round(4), Error);
}

TEST_CASE("vote validation") {
  auto r1 = round_with(1, {task3("s1")});
  CHECK_NOTHROW(validate_vote(r1, vote("a", "s1", 1, {}, "foo")));
  CHECK_THROWS_WITH(validate_vote(r1, vote("a", "s1", 1, {})), doctest::Contains("at least one selection"));
  CHECK_THROWS_WITH(validate_vote(r1, vote("a", "s1", 1, {}, "  ")), doctest::Contains("custom translation is empty"));
  CHECK_THROWS_WITH(validate_vote(r1, vote("a", "s9", 1, {"m1"})), doctest::Contains("is not part of round 1"));
  CHECK_THROWS_WITH(validate_vote(r1, vote("a", "s1", 1, {"m7"})), doctest::Contains("unknown candidate"));
  CHECK_THROWS_AS(validate_vote(r1, vote("a", "s1", 2, {"m1"})), Error);
  CHECK_NOTHROW(validate_vote(r1, vote("a", "s1", 1, {"m1", "m2", "m3"})));

  auto r2 = round_with(2, {task3("s1")});
  CHECK_THROWS_WITH(validate_vote(r2, vote("a", "s1", 2, {"m1", "m2", "m3"})), doctest::Contains("at most two"));
  CHECK_NOTHROW(validate_vote(r2, vote("a", "s1", 2, {})));

  auto r3 = round_with(3, {task3("s1")});
  CHECK_THROWS_WITH(validate_vote(r3, vote("a", "s1", 3, {"m1", "m2"})), doctest::Contains("exactly one"));
  CHECK_THROWS_WITH(validate_vote(r3, vote("a", "s1", 3, {})), doctest::Contains("exactly one"));
  CHECK_THROWS_WITH(validate_vote(r3, vote("a", "s1", 3, {"m1"}, "mine")), doctest::Contains("not accepted in round 3"));
  auto ranked = vote("a", "s1", 3, {"m1"});
  ranked.ranking = std::vector<std::string>{"m1", "m3", "m2"};
  CHECK_NOTHROW(validate_vote(r3, ranked));
  ranked.ranking = std::vector<std::string>{"m1", "m1", "m2"};
  CHECK_THROWS_WITH(validate_vote(r3, ranked), doctest::Contains("exactly once"));
  auto early = vote("a", "s1", 2, {"m1"});
  early.ranking = std::vector<std::string>{"m1", "m2", "m3"};
  CHECK_THROWS_WITH(validate_vote(r2, early), doctest::Contains("only accepted in round 3"));

  r3.status = RoundStatus::closed;
  CHECK_THROWS_WITH(validate_vote(r3, vote("a", "s1", 3, {"m1"})), doctest::Contains("round 3 is closed"));
}

TEST_CASE("round 1 close: top two plus customs") {
  auto r = round_with(1, {task3("s1")});
  cast(r, vote("a", "s1", 1, {"m1", "m2", "m3"}));
  cast(r, vote("b", "s1", 1, {"m1", "m2"}));
  cast(r, vote("c", "s1", 1, {"m1"}, "my own"));
  const auto next = close_round1(r);
  REQUIRE(next.tasks.size() == 1);
  CHECK(next.round_number == 2);
  CHECK(next.status == RoundStatus::open);
  CHECK(ids(next.tasks[0]) == std::vector<std::string>{"m1", "m2", "u:c:r1"});
  CHECK_FALSE(next.tasks[0].tie_broken);
  const auto& custom = next.tasks[0].candidates[2];
  CHECK(custom.origin() == Origin{OriginKind::custom, "c"});
  CHECK(custom.text == "my own");
}

TEST_CASE("round 1 close: three-way tie keeps the smallest ids") {
  auto r = round_with(1, {task3("s1")});
  cast(r, vote("a", "s1", 1, {"m3"}));
  cast(r, vote("b", "s1", 1, {"m2"}));
  cast(r, vote("c", "s1", 1, {"m1"}));
  const auto next = close_round1(r);
  CHECK(ids(next.tasks[0]) == std::vector<std::string>{"m1", "m2"});
  CHECK(next.tasks[0].tie_broken);
}

TEST_CASE("round 1 close: two voted candidates only") {
  auto r = round_with(1, {task3("s1")});
  cast(r, vote("a", "s1", 1, {"m2", "m3"}));
  cast(r, vote("b", "s1", 1, {"m3", "m2"}));
  const auto next = close_round1(r);
  CHECK(ids(next.tasks[0]) == std::vector<std::string>{"m2", "m3"});
}

TEST_CASE("round 1 close requires a vote on every sentence") {
  auto r = round_with(1, {task3("s1"), task3("s2")});
  cast(r, vote("a", "s1", 1, {"m1"}));
  CHECK_THROWS_WITH(close_round1(r), doctest::Contains("s2"));
}

TEST_CASE("identical customs merge origins") {
  auto r = round_with(1, {task3("s1")});
  cast(r, vote("a", "s1", 1, {}, "same words"));
  cast(r, vote("b", "s1", 1, {}, "same words"));
  cast(r, vote("c", "s1", 1, {}, "s1 two"));
  const auto next = close_round1(r);
  REQUIRE(next.tasks[0].candidates.size() == 2);
  CHECK(next.tasks[0].candidates[0].origins.size() == 2);
  // A custom equal to a model candidate brings that candidate back.
  CHECK(next.tasks[0].candidates[1].id == "m2");
  CHECK(next.tasks[0].candidates[1].origins.back() == Origin{OriginKind::custom, "c"});
}

TEST_CASE("round 2 close") {
  auto t = task3("s1");
  t.candidates.push_back({"u:x:r1", "s1", "custom", "zh", {{OriginKind::custom, "x"}}, 1});
  auto r = round_with(2, {t, task3("s2")});
  cast(r, vote("a", "s1", 2, {"m1", "u:x:r1"}));
  cast(r, vote("b", "s1", 2, {"m1"}));
  cast(r, vote("a", "s2", 2, {}));
  const auto next = close_round2(r);
  CHECK(ids(next.tasks[0]) == std::vector<std::string>{"m1", "u:x:r1"});
  CHECK(ids(next.tasks[1]) == std::vector<std::string>{"m1", "m2", "m3"});
  REQUIRE(next.warnings.size() == 1);
  CHECK(next.warnings[0].find("s2") != std::string::npos);
}

TEST_CASE("round 3 close") {
  auto r = round_with(3, {task3("s1"), task3("s2"), task3("s3")});
  for (const auto* a : {"a", "b", "c"}) cast(r, vote(a, "s1", 3, {"m1"}));
  cast(r, vote("d", "s1", 3, {"m2"}));
  cast(r, vote("e", "s1", 3, {"m3"}));

  auto ranked = [](std::string ann, std::string pick, std::vector<std::string> order) {
    Vote v = vote(ann, "s2", 3, {pick});
    v.ranking = std::move(order);
    return v;
  };
  // m2 and m3 both average rank 1.5.
  cast(r, ranked("a", "m3", {"m3", "m2", "m1"}));
  cast(r, ranked("b", "m3", {"m3", "m2", "m1"}));
  cast(r, ranked("c", "m2", {"m2", "m3", "m1"}));
  cast(r, ranked("d", "m2", {"m2", "m3", "m1"}));
  cast(r, vote("a", "s3", 3, {"m2"}));

  const auto finals = close_round3(r);
  REQUIRE(finals.size() == 3);
  CHECK(finals[0].winner.id == "m1");
  CHECK(finals[0].vote_count == 3);
  CHECK_FALSE(finals[0].tie_broken);
  CHECK(finals[1].vote_count == 2);
  CHECK(finals[1].tie_broken);
  // Smaller id wins the remaining tie.
  CHECK(finals[1].winner.id == "m2");
  CHECK(finals[2].winner.id == "m2");
  CHECK(finals[2].vote_count == 1);
}

TEST_CASE("round 3 tie goes to the better mean rank") {
  auto r = round_with(3, {task3("s1")});
  auto ranked = [](std::string ann, std::string pick, std::vector<std::string> order) {
    Vote v = vote(ann, "s1", 3, {pick});
    v.ranking = std::move(order);
    return v;
  };
  cast(r, ranked("a", "m3", {"m3", "m2", "m1"}));
  cast(r, ranked("b", "m3", {"m3", "m1", "m2"}));
  cast(r, ranked("c", "m2", {"m2", "m3", "m1"}));
  cast(r, ranked("d", "m2", {"m2", "m1", "m3"}));
  const auto finals = close_round3(r);
  // m3: (1+1+2+3)/4 = 1.75, m2: (2+3+1+1)/4 = 1.75; tied again, so m2 by id.
  CHECK(finals[0].winner.id == "m2");
  CHECK(finals[0].tie_broken);

  auto r2 = round_with(3, {task3("s1")});
  cast(r2, ranked("a", "m3", {"m3", "m2", "m1"}));
  cast(r2, ranked("b", "m3", {"m3", "m2", "m1"}));
  cast(r2, ranked("c", "m2", {"m2", "m3", "m1"}));
  cast(r2, ranked("d", "m2", {"m1", "m3", "m2"}));
  // m3: 1.5, m2: 2.0.
  CHECK(close_round3(r2)[0].winner.id == "m3");
}

TEST_CASE("fixture campaign replays to the expected finals") {
  testing::TempDir dir;
  const auto events = fixture_events();
  REQUIRE(events.size() == 82);
  Campaign c("ms");
  testing::CaptureWarnings quiet;
  c.apply_records(events);
  CHECK(c.finished());
  const auto finals = c.finals();
  REQUIRE(finals.size() == 6);
  const std::vector<std::pair<std::string, int>> expected{
      {"m1", 3}, {"u:ann-4:r1", 3}, {"m1", 2}, {"m1", 5}, {"m3", 4}, {"m1", 1}};
  for (std::size_t i = 0; i < finals.size(); ++i) {
    CAPTURE(finals[i].sentence_id);
    CHECK(finals[i].winner.id == expected[i].first);
    CHECK(finals[i].vote_count == expected[i].second);
  }
  CHECK(finals[2].tie_broken);
  CHECK(finals[1].winner.origins.size() == 2);

  const auto rounds = c.rounds();
  REQUIRE(rounds.size() == 3);
  // sg-004 went into round 2 on a three-way tie.
  CHECK(rounds[1].tasks[1].tie_broken);
  CHECK(ids(rounds[1].tasks[1]) == std::vector<std::string>{"m1", "m2", "u:ann-4:r1"});
  // ann-2 changed their mind on sg-003; only the latest vote counts.
  CHECK(rounds[0].votes.at({"sg-003", "ann-2"}).selected == std::set<std::string>{"m1"});

  const auto report = c.statistics();
  CHECK(report.sentences == 6);
  CHECK(report.custom_submissions == 4);
  CHECK(report.mean_custom_per_sentence == doctest::Approx(4.0 / 6.0));
  CHECK(report.finals_llm == 5);
  CHECK(report.finals_custom == 1);
  CHECK(report.degraded == std::vector<std::string>{"sg-008"});
  REQUIRE(report.overlap.has_value());
  CHECK(report.overlap->pairs == 16);

  // Agreement per round against the pair-enumeration oracle.
  for (int n = 0; n < 3; ++n) {
    std::vector<double> per_sentence;
    for (const auto& t : rounds[n].tasks) {
      std::vector<std::set<std::string>> sel;
      for (const auto& [key, v] : rounds[n].votes) {
        if (key.first == t.sentence.id) sel.push_back(v.selected);
      }
      if (sel.size() >= 2) per_sentence.push_back(oracle::pairwise_agreement(sel));
    }
    REQUIRE(report.agreement[n].has_value());
    CHECK(*report.agreement[n] == doctest::Approx(oracle::mean(per_sentence)).epsilon(1e-12));
  }

  // Round 3 candidates come from round 2 plus round 2 customs.
  for (std::size_t i = 0; i < rounds[2].tasks.size(); ++i) {
    for (const auto& cand : rounds[2].tasks[i].candidates) {
      const bool carried = rounds[1].tasks[i].find(cand.id) != nullptr;
      const bool r2_custom = cand.round_introduced == 2 && !cand.llm_origin();
      CHECK((carried || r2_custom));
    }
  }
}

TEST_CASE("campaign persists and replays through the log") {
  testing::TempDir dir;
  LogStore logs(dir.path());
  const auto events = fixture_events();
  std::vector<FinalSelection> first;
  {
    Campaign c("ms", &logs);
    testing::CaptureWarnings quiet;
    c.open_round1(events[0]["tasks"].get<std::vector<SentenceTask>>());
    for (std::size_t i = 1; i < events.size(); ++i) {
      const auto& e = events[i];
      if (e["type"] == "vote") {
        c.submit_vote(e["vote"].get<Vote>());
      } else if (e["round"] == 1) {
        c.close_round1();
      } else if (e["round"] == 2) {
        c.close_round2();
      } else {
        first = c.close_round3();
      }
    }
  }
  Campaign replayed("ms", &logs);
  CHECK(replayed.finals() == first);
  CHECK(replayed.finished());
}

TEST_CASE("campaign rejects out-of-order events") {
  Campaign c("zh");
  CHECK_THROWS_AS(c.submit_vote(vote("a", "s1", 1, {"m1"})), Error);
  CHECK_THROWS_AS(c.close_round1(), Error);
  c.open_round1({task3("s1")});
  CHECK_THROWS_AS(c.open_round1({task3("s1")}), Error);
  CHECK_THROWS_AS(c.close_round2(), Error);
  c.submit_vote(vote("a", "s1", 1, {"m1"}));
  CHECK_THROWS_AS(c.submit_vote(vote("a", "s1", 1, {"m9"})), Error);
  c.close_round1();
  CHECK_THROWS_AS(c.submit_vote(vote("a", "s1", 1, {"m1"})), Error);
  CHECK(c.current_round_number() == 2);
}

TEST_CASE("tasks are blind to other annotators") {
  Campaign c("zh");
  c.open_round1({task3("s1")});
  c.submit_vote(vote("a", "s1", 1, {"m1"}, "secret"));
  const auto mine = c.tasks_for("a");
  REQUIRE(mine.size() == 1);
  REQUIRE(mine[0].own_vote.has_value());
  CHECK(mine[0].own_vote->custom_text == "secret");
  const auto theirs = c.tasks_for("b");
  CHECK_FALSE(theirs[0].own_vote.has_value());
  const auto dumped = nlohmann::json(theirs).dump();
  CHECK(dumped.find("secret") == std::string::npos);
  CHECK(dumped.find("origin") == std::string::npos);
  CHECK(c.export_round().find("origin") == std::string::npos);
  const auto p = c.progress();
  REQUIRE(p.has_value());
  CHECK(p->sentences[0].votes == 1);
}

TEST_CASE("start_round1 generates and deduplicates candidates") {
  Gateway gw;
  const std::vector<SourceSentence> sentences{{"s1", "Eh why you so like that", "singlish", Toxicity::harmful},
                                              {"s2", "Shiok sia this laksa", "singlish", Toxicity::benign}};
  const auto a = gw.register_mock_translator("a", {{"Eh why you so like that", "喂你怎么这样"}}, MockFallback::echo);
  const auto b = gw.register_mock_translator("b", {{"Eh why you so like that", "喂你怎么这样"}}, MockFallback::echo);
  const auto d = gw.register_mock_translator("d", {{"Shiok sia this laksa", "这叻沙爽"}}, MockFallback::echo);
  Campaign c("zh");
  const std::vector<BackendId> three{a, b, d};
  const auto r = c.start_round1(sentences, three, gw, 2);
  REQUIRE(r.tasks.size() == 2);
  REQUIRE(r.tasks[0].candidates.size() == 2);
  CHECK(r.tasks[0].candidates[0].origins.size() == 2);
  CHECK(r.tasks[0].candidates[0].text == "喂你怎么这样");
  CHECK(r.tasks[1].candidates.size() == 2);
  CHECK_THROWS_AS(c.start_round1(sentences, std::vector<BackendId>{a, b}, gw), Error);

  Gateway gw2;
  const auto e1 = gw2.register_mock_translator("e1", {{"Eh why you so like that", "一"}}, MockFallback::error);
  const auto e2 = gw2.register_mock_translator("e2", {{"Eh why you so like that", "二"}}, MockFallback::error);
  const auto e3 = gw2.register_mock_translator("e3", {{"Eh why you so like that", "三"}}, MockFallback::error);
  Campaign c2("zh");
  testing::CaptureWarnings warnings;
  const auto r2 = c2.start_round1(sentences, std::vector<BackendId>{e1, e2, e3}, gw2);
  CHECK(r2.tasks[0].candidates.size() == 3);
  CHECK(r2.tasks[1].degraded);
  CHECK(r2.tasks[1].candidates.empty());
  CHECK_FALSE(r2.warnings.empty());
}

TEST_CASE("rating campaign") {
  Campaign c("zh");
  std::vector<RatingItem> items;
  for (int i = 0; i < 4; ++i) {
    items.push_back({"s" + std::to_string(i), "src", "t" + std::to_string(i),
                     i < 3 ? RatingSet::machine : RatingSet::gold});
  }
  const auto ratings = run_rating_campaign(c, items, {"a", "b"}, [](const std::string& ann, const RatingItem& item) {
    return ann == "a" ? 5 : 1 + static_cast<int>(item.sentence_id.back() - '0');
  });
  CHECK(ratings.size() == 8);
  const auto summary = mean_ratings(c.rating_records(), RatingGrouping::language);
  REQUIRE(summary.size() == 2);
  CHECK(summary[0].set == "gold");
  CHECK(summary[0].mean == doctest::Approx((5 + 4) / 2.0));
  CHECK(summary[1].mean == doctest::Approx((5 + 5 + 5 + 1 + 2 + 3) / 6.0));

  CHECK_THROWS_WITH(c.submit_rating({"a", "s0", "t0", 6, RatingSet::machine}), doctest::Contains("out of range"));
  CHECK_THROWS_AS(c.submit_rating({"z", "s0", "t0", 3, RatingSet::machine}), Error);
  CHECK_THROWS_AS(c.submit_rating({"a", "s0", "wrong text", 3, RatingSet::machine}), Error);
  c.submit_rating({"a", "s0", "t0", 2, RatingSet::machine});
  CHECK(c.ratings().size() == 8);
}
