#include <doctest.h>

#include <httplib.h>

#include <fstream>
#include <sstream>

#include "support.hpp"
#include "toxtrans/annotation.hpp"
#include "toxtrans/platform/cli.hpp"
#include "toxtrans/platform/server.hpp"
#include "toxtrans/platform/service.hpp"
#include "toxtrans/platform/workspace.hpp"

using namespace toxtrans;
using namespace toxtrans::platform;
using nlohmann::json;

namespace {

// A data directory with an ms campaign made of the first `events` fixture
// records.
void seed_workspace(const std::filesystem::path& dir, std::size_t events) {
  std::filesystem::create_directories(dir / "logs");
  json annotators = json::array();
  for (int i = 1; i <= 5; ++i) {
    annotators.push_back({{"id", "ann-" + std::to_string(i)}, {"name", "Annotator " + std::to_string(i)}, {"language", "ms"}});
  }
  annotators.push_back({{"id", "ann-z"}, {"language", "zh"}});
  testing::spit(dir / "platform.json", json{{"languages", {"zh", "ms"}}, {"annotators", annotators}}.dump());
  std::ifstream in(testing::fixture("campaign_ms.jsonl"));
  std::ofstream out(dir / "logs" / "campaign-ms.jsonl");
  std::string line;
  for (std::size_t i = 0; i < events && std::getline(in, line); ++i) out << line << "\n";
}

ApiRequest get(std::string path, std::map<std::string, std::string> query = {}) {
  return {"GET", std::move(path), std::move(query), {}, ""};
}

ApiRequest post(std::string path, const json& body) { return {"POST", std::move(path), {}, {}, body.dump()}; }

struct CliResult {
  int code;
  std::string out;
  std::string err;
};

CliResult cli(std::vector<std::string> args) {
  args.insert(args.begin(), "toxtrans");
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

constexpr std::size_t kRound1Open = 1;
constexpr std::size_t kRound2Open = 29;

}  // namespace

TEST_CASE("tasks are blind and votes round trip") {
  testing::TempDir dir;
  seed_workspace(dir.path(), kRound1Open);
  Workspace ws(dir.path());
  AnnotationService api(ws);

  const auto round = api.handle(get("/api/rounds/current", {{"language", "ms"}}));
  CHECK(round.status == 200);
  CHECK(round.body["round"] == 1);
  CHECK(round.body["constraints"]["custom_allowed"] == true);

  auto r = api.handle(get("/api/tasks", {{"annotator", "ann-1"}}));
  REQUIRE(r.status == 200);
  CHECK(r.body["language"] == "ms");
  CHECK(r.body["display_name"] == "Annotator 1");
  CHECK(r.body["tasks"].size() == 6);
  CHECK(r.body.dump().find("origin") == std::string::npos);
  CHECK(r.body.dump().find("model-a") == std::string::npos);

  const auto v = api.handle(post("/api/votes", {{"annotator", "ann-1"}, {"sentence_id", "sg-003"}, {"round", 1},
                                                {"selected", {"m2"}}, {"custom_text", "ayat rahsia"}}));
  CHECK(v.status == 200);
  const auto mine = api.handle(get("/api/tasks", {{"annotator", "ann-1"}}));
  CHECK(mine.body["tasks"][0]["own_vote"]["custom_text"] == "ayat rahsia");
  const auto theirs = api.handle(get("/api/tasks", {{"annotator", "ann-2"}}));
  CHECK(theirs.body.dump().find("ayat rahsia") == std::string::npos);
  CHECK(theirs.body["tasks"][0]["own_vote"].is_null());

  const auto p = api.handle(get("/api/progress", {{"language", "ms"}}));
  CHECK(p.body["round"]["sentences"][0]["votes"] == 1);
  CHECK(p.body.dump().find("ayat rahsia") == std::string::npos);
}

TEST_CASE("request errors map to status codes") {
  testing::TempDir dir;
  seed_workspace(dir.path(), kRound1Open);
  Workspace ws(dir.path());
  AnnotationService api(ws);
  CHECK(api.handle(get("/api/nothing")).status == 404);
  CHECK(api.handle(post("/api/tasks", json::object())).status == 405);
  CHECK(api.handle(get("/api/tasks", {{"annotator", "stranger"}, {"language", "ms"}})).status == 403);
  CHECK(api.handle(get("/api/tasks", {{"annotator", "ann-1"}, {"language", "zh"}})).status == 403);
  CHECK(api.handle(get("/api/tasks", {{"annotator", "ann-1"}, {"language", "fr"}})).status == 400);
  CHECK(api.handle(get("/api/tasks")).status == 400);
  CHECK(api.handle(get("/api/rounds/current")).status == 400);
  CHECK(api.handle({"POST", "/api/votes", {}, {}, "{oops"}).status == 400);
  const auto empty = api.handle(post("/api/votes", {{"annotator", "ann-1"}, {"sentence_id", "sg-003"}, {"round", 1},
                                                    {"selected", json::array()}}));
  CHECK(empty.status == 422);
  CHECK(empty.body["error"].get<std::string>().find("at least one selection") != std::string::npos);
  const auto zh = api.handle(get("/api/tasks", {{"annotator", "ann-z"}}));
  CHECK(zh.status == 200);
  CHECK(zh.body["round"].is_null());
  CHECK(zh.body["tasks"].empty());
}

TEST_CASE("round 2 rejects three selections") {
  testing::TempDir dir;
  seed_workspace(dir.path(), kRound2Open);
  Workspace ws(dir.path());
  AnnotationService api(ws);
  const auto bad = api.handle(post("/api/votes", {{"annotator", "ann-1"}, {"sentence_id", "sg-004"}, {"round", 2},
                                                  {"selected", {"m1", "m2", "u:ann-4:r1"}}}));
  CHECK(bad.status == 422);
  CHECK(bad.body["error"].get<std::string>().find("at most two") != std::string::npos);
  const auto ok = api.handle(post("/api/votes", {{"annotator", "ann-1"}, {"sentence_id", "sg-004"}, {"round", 2},
                                                 {"selected", {"m1", "u:ann-4:r1"}}}));
  CHECK(ok.status == 200);
}

TEST_CASE("token is required when configured") {
  testing::TempDir dir;
  seed_workspace(dir.path(), kRound1Open);
  Workspace ws(dir.path());
  AnnotationService api(ws, "s3cret");
  auto req = get("/api/rounds/current", {{"language", "ms"}});
  CHECK(api.handle(req).status == 401);
  req.headers["x-auth-token"] = "wrong";
  CHECK(api.handle(req).status == 401);
  req.headers["x-auth-token"] = "s3cret";
  CHECK(api.handle(req).status == 200);
  CHECK_THROWS_AS(AnnotationService(ws, ""), Error);
}

TEST_CASE("ratings through the API") {
  testing::TempDir dir;
  seed_workspace(dir.path(), 82);
  Workspace ws(dir.path());
  AnnotationService api(ws);
  ws.campaign("ms").open_ratings({{"sg-003", "src", "terjemahan", RatingSet::machine},
                                  {"sg-003", "src", "rujukan", RatingSet::gold}},
                                 {"ann-1", "ann-2"});
  auto rate = [&](std::string ann, int score, std::string set, std::string text) {
    return api.handle(post("/api/ratings", {{"annotator", ann}, {"sentence_id", "sg-003"}, {"score", score},
                                            {"set", set}, {"translation_text", text}}));
  };
  CHECK(rate("ann-1", 4, "machine", "terjemahan").status == 200);
  CHECK(rate("ann-2", 2, "machine", "terjemahan").status == 200);
  CHECK(rate("ann-1", 5, "gold", "rujukan").status == 200);
  CHECK(rate("ann-1", 0, "gold", "rujukan").status == 422);
  CHECK(rate("ann-3", 3, "gold", "rujukan").status == 422);
  const auto items = api.handle(get("/api/ratings/items", {{"annotator", "ann-1"}}));
  CHECK(items.body["items"][0]["own_score"] == 4);
  const auto stats = api.handle(get("/api/stats/ratings", {{"language", "ms"}}));
  REQUIRE(stats.status == 200);
  CHECK(stats.body["by_language"].size() == 2);
  CHECK(stats.body["by_language"][1]["set"] == "machine");
  CHECK(stats.body["by_language"][1]["mean"] == 3.0);
  CHECK(stats.body["by_annotator"].size() == 3);
  const auto ann = api.handle(get("/api/stats/annotation", {{"language", "ms"}}));
  CHECK(ann.body["finals_llm"] == 5);
}

TEST_CASE("campaign state survives a restart") {
  testing::TempDir dir;
  seed_workspace(dir.path(), kRound1Open);
  {
    Workspace ws(dir.path());
    AnnotationService api(ws);
    CHECK(api.handle(post("/api/votes", {{"annotator", "ann-3"}, {"sentence_id", "sg-010"}, {"round", 1},
                                         {"selected", {"m1"}}}))
              .status == 200);
  }
  Workspace again(dir.path());
  const auto tasks = again.campaign("ms").tasks_for("ann-3");
  REQUIRE(tasks.size() == 6);
  REQUIRE(tasks[4].own_vote.has_value());
  CHECK(tasks[4].own_vote->selected == std::set<std::string>{"m1"});
}

TEST_CASE("HTTP server") {
  testing::TempDir dir;
  seed_workspace(dir.path(), kRound1Open);
  Workspace ws(dir.path());
  AnnotationService api(ws, "tok");
  ApiServer server(api);
  const int port = server.bind("127.0.0.1", 0);
  REQUIRE(port > 0);
  server.start();
  httplib::Client client("127.0.0.1", port);
  const httplib::Headers auth{{"X-Auth-Token", "tok"}};

  auto res = client.Get("/api/tasks?annotator=ann-2&language=ms", auth);
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(json::parse(res->body)["tasks"].size() == 6);

  res = client.Get("/api/tasks?annotator=ann-2", httplib::Headers{});
  REQUIRE(res);
  CHECK(res->status == 401);

  const json vote{{"annotator", "ann-2"}, {"sentence_id", "sg-006"}, {"round", 1}, {"selected", {"m1", "m2"}}};
  res = client.Post("/api/votes", auth, vote.dump(), "application/json");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(json::parse(res->body)["accepted"] == true);

  res = client.Get("/api/unknown", auth);
  REQUIRE(res);
  CHECK(res->status == 404);

  ApiServer second(api);
  CHECK_THROWS_WITH(second.bind("127.0.0.1", port), doctest::Contains("port in use"));
  server.stop();
}

TEST_CASE("cli basics") {
  const auto unknown = cli({"frobnicate"});
  CHECK(unknown.code == 2);
  CHECK(unknown.err.find("unknown command 'frobnicate'") != std::string::npos);
  CHECK(unknown.err.find("Usage") != std::string::npos);
  CHECK(cli({}).code == 2);
  CHECK(cli({"--help"}).code == 0);
  CHECK(cli({"round", "nope"}).code == 2);
}

TEST_CASE("cli over a workspace") {
  testing::TempDir dir;
  seed_workspace(dir.path(), 82);
  const auto d = dir.path().string();

  auto status = cli({"--data-dir", d, "round", "status", "--language", "ms"});
  CHECK(status.code == 0);
  CHECK(status.out.find("ms round 3 closed") != std::string::npos);
  CHECK(status.out.find("campaign finished") != std::string::npos);

  auto stats = cli({"--data-dir", d, "--json", "stats", "annotation", "--language", "ms"});
  REQUIRE(stats.code == 0);
  const auto j = json::parse(stats.out);
  CHECK(j["custom_submissions"] == 4);
  CHECK(j["finals_custom"] == 1);

  auto text = cli({"--data-dir", d, "stats", "annotation", "--language", "ms"});
  CHECK(text.out.find("finals: 6 (5 model-origin, 1 custom)") != std::string::npos);

  auto pool = cli({"--data-dir", d, "pool", "build", "--language", "ms"});
  CHECK(pool.code == 0);
  CHECK(std::filesystem::exists(dir / "pools/ms.jsonl"));
  CHECK(cli({"--data-dir", d, "pool", "show", "--language", "ms"}).out.find("sg-012") != std::string::npos);

  auto missing = cli({"--data-dir", d, "round", "close", "--language", "zh"});
  CHECK(missing.code == 1);
  CHECK(missing.err.rfind("error: ", 0) == 0);
}

TEST_CASE("cli bench run and report") {
  testing::TempDir dir;
  const auto d = dir.path().string();
  const std::string config = std::string(TOXTRANS_SOURCE_DIR) + "/configs/bench-offline.json";
  const auto run = cli({"--data-dir", d, "bench", "run", "--config", config, "--run-id", "r1"});
  REQUIRE_MESSAGE(run.code == 0, run.err);
  const auto csv = cli({"--data-dir", d, "bench", "report", "--run", "r1", "--format", "csv"});
  CHECK(csv.code == 0);
  CHECK(csv.out.rfind("model,language,metric,mean,valid,n,failures,scores\n", 0) == 0);
  CHECK(csv.out.find("echo-a,zh,direct,1,true,10,0,") != std::string::npos);
  const auto md = cli({"--data-dir", d, "bench", "report", "--run", "r1"});
  CHECK(md.out.rfind("| Model | Direct ZH |", 0) == 0);
  CHECK(cli({"--data-dir", d, "bench", "run", "--config", config, "--run-id", "r1"}).code == 1);
  CHECK(cli({"--data-dir", d, "bench", "report", "--run", "r1", "--format", "pdf"}).code == 1);

  const auto sweep = cli({"--data-dir", d, "bench", "sweep-k", "--config", config, "--run-id", "s1"});
  CHECK(sweep.code == 0);
}
