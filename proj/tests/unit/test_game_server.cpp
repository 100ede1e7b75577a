#include <fstream>
#include <set>

#include "doctest.h"
#include "fixtures.hpp"
#include "gscg/game_server.hpp"
#include "gscg/synth.hpp"
#include "httplib.h"

using namespace gscg;
using nlohmann::json;

namespace {

struct Game {
  Dataset data;
  Vocab vocab;
  std::shared_ptr<GameState> state;
};

Game make_game(const std::filesystem::path& log = {}) {
  SynthSpec spec = SynthSpec::defaults();
  spec.n_train = 20;
  spec.n_val = 5;
  Game g;
  g.data = gen_graph_dataset(spec);
  g.vocab = g.data.vocab();
  g.state = std::make_shared<GameState>(Classifier(g.vocab, ablation_config("full_model"), {}, 1),
                                        pool_from_dataset(g.data, g.vocab), 7, log);
  return g;
}

std::string new_session(GameState& s) {
  const auto r = s.handle("POST", "/sessions", "");
  REQUIRE(r.status == 201);
  return r.body["session_id"];
}

}  // namespace

TEST_CASE("rounds hide the answer until the guess") {
  auto game = make_game();
  auto& s = *game.state;
  CHECK(s.pool_size() == 25);
  const std::string sid = new_session(s);
  auto score = s.handle("GET", "/sessions/" + sid + "/score", "");
  CHECK(score.status == 200);
  CHECK(score.body["rounds"] == 0);
  CHECK(score.body["human_accuracy"].is_null());
  CHECK(score.body["ai_accuracy"].is_null());

  int human = 0, ai = 0;
  for (int k = 0; k < 10; ++k) {
    const auto round = s.handle("POST", "/sessions/" + sid + "/rounds", "");
    REQUIRE(round.status == 201);
    const std::string rid = round.body["round_id"];
    REQUIRE(round.body["choices"].size() == 5);
    const std::set<std::string> keys = [&] {
      std::set<std::string> out;
      for (const auto& [key, v] : round.body.items()) out.insert(key);
      return out;
    }();
    CHECK(keys == std::set<std::string>{"choices", "riddle_text", "round_id"});
    const auto again = s.handle("GET", "/sessions/" + sid + "/rounds/" + rid, "");
    CHECK(again.body == round.body);

    const int pick = k % 5;
    const auto res =
        s.handle("POST", "/sessions/" + sid + "/rounds/" + rid + "/guess", json{{"choice_index", pick}}.dump());
    REQUIRE(res.status == 200);
    const std::string truth = res.body["truth"];
    CHECK_FALSE(round.body["riddle_text"].get<std::string>().find(truth) != std::string::npos);
    CHECK(res.body["correct"] == (round.body["choices"][pick] == truth));
    CHECK(res.body["ai_correct"] == (res.body["ai_pick"] == truth));
    human += res.body["correct"].get<bool>();
    ai += res.body["ai_correct"].get<bool>();
    bool listed = false;
    for (const auto& c : round.body["choices"]) listed |= c == truth;
    CHECK(listed);

    const auto after = s.handle("GET", "/sessions/" + sid + "/rounds/" + rid, "");
    CHECK(after.body["riddle_text"] == round.body["riddle_text"]);
    CHECK(after.body["choices"] == round.body["choices"]);
    CHECK(after.body["result"]["truth"] == truth);
    CHECK(s.handle("POST", "/sessions/" + sid + "/rounds/" + rid + "/guess", R"({"choice_index":0})")
              .status == 409);
  }
  score = s.handle("GET", "/sessions/" + sid + "/score", "");
  CHECK(score.body["rounds"] == 10);
  CHECK(score.body["human_correct"] == human);
  CHECK(score.body["human_accuracy"] == doctest::Approx(human / 10.0));
  CHECK(score.body["ai_accuracy"] == doctest::Approx(ai / 10.0));
}

TEST_CASE("a correct guess counts for the human") {
  auto game = make_game();
  auto& s = *game.state;
  const std::string sid = new_session(s);
  const auto round = s.handle("POST", "/sessions/" + sid + "/rounds", "");
  const std::string rid = round.body["round_id"];
  // An identically seeded game reveals the answer without touching this session.
  int truth_index = -1;
  {
    auto other = make_game();
    const std::string osid = new_session(*other.state);
    const auto oround = other.state->handle("POST", "/sessions/" + osid + "/rounds", "");
    CHECK(oround.body == round.body);  // same seed, same first round
    const auto res = other.state->handle("POST", "/sessions/" + osid + "/rounds/r1/guess",
                                         R"({"choice_index":0})");
    for (std::size_t i = 0; i < oround.body["choices"].size(); ++i)
      if (oround.body["choices"][i] == res.body["truth"]) truth_index = static_cast<int>(i);
  }
  REQUIRE(truth_index >= 0);
  const auto res = s.handle("POST", "/sessions/" + sid + "/rounds/" + rid + "/guess",
                            json{{"choice_index", truth_index}}.dump());
  CHECK(res.body["correct"] == true);
  CHECK(s.handle("GET", "/sessions/" + sid + "/score", "").body["human_correct"] == 1);
}

TEST_CASE("error statuses") {
  auto game = make_game();
  auto& s = *game.state;
  const std::string sid = new_session(s);
  CHECK(s.handle("GET", "/sessions/nope/score", "").status == 404);
  CHECK(s.handle("POST", "/sessions/nope/rounds", "").status == 404);
  CHECK(s.handle("GET", "/sessions/" + sid + "/rounds/r9", "").status == 404);
  CHECK(s.handle("POST", "/sessions/" + sid + "/rounds/r9/guess", R"({"choice_index":0})").status == 404);
  CHECK(s.handle("GET", "/elsewhere", "").status == 404);
  s.handle("POST", "/sessions/" + sid + "/rounds", "");
  const std::string guess = "/sessions/" + sid + "/rounds/r1/guess";
  CHECK(s.handle("POST", guess, "{oops").status == 400);
  CHECK(s.handle("POST", guess, R"({"choice": 1})").status == 400);
  CHECK(s.handle("POST", guess, R"({"choice_index": "1"})").status == 400);
  CHECK(s.handle("POST", guess, R"({"choice_index": 5})").status == 400);
  CHECK(s.handle("POST", guess, R"({"choice_index": -1})").status == 400);
  CHECK(s.handle("POST", guess, R"([1])").status == 400);
  CHECK(s.handle("GET", guess, "").status == 405);
  CHECK(s.handle("POST", guess, R"({"choice_index": 2})").status == 200);
  CHECK(s.handle("POST", guess, R"({"choice_index": 2})").status == 409);
}

TEST_CASE("sessions shuffle the pool independently") {
  auto game = make_game();
  auto& s = *game.state;
  std::set<std::string> first_riddles;
  std::set<std::string> ids;
  for (int i = 0; i < 6; ++i) {
    const std::string sid = new_session(s);
    ids.insert(sid);
    first_riddles.insert(s.handle("POST", "/sessions/" + sid + "/rounds", "").body["riddle_text"]);
  }
  CHECK(ids.size() == 6);
  CHECK(first_riddles.size() > 1);
}

TEST_CASE("events are appended to the log") {
  testing::TempDir dir("game_log");
  {
    auto game = make_game(dir.path() / "game.log");
    auto& s = *game.state;
    const std::string sid = new_session(s);
    s.handle("POST", "/sessions/" + sid + "/rounds", "");
    s.handle("POST", "/sessions/" + sid + "/rounds/r1/guess", R"({"choice_index":1})");
  }
  std::ifstream in(dir.path() / "game.log");
  std::vector<json> events;
  for (std::string line; std::getline(in, line);) events.push_back(json::parse(line));
  REQUIRE(events.size() == 3);
  CHECK(events[0]["event"] == "session");
  CHECK(events[1]["event"] == "round");
  CHECK(events[2]["event"] == "guess");
  CHECK(events[2]["human_pick"] == 1);
  CHECK(events[2]["time"].get<std::string>().size() == 24);
}

TEST_CASE("http front end and static assets") {
  testing::TempDir dir("static");
  std::ofstream(dir.path() / "index.html") << "<html>riddle</html>";
  auto game = make_game();
  GameServer server(game.state, {"127.0.0.1", 0, dir.path()});
  const int port = server.start();
  REQUIRE(port > 0);
  httplib::Client cli("127.0.0.1", port);
  auto page = cli.Get("/index.html");
  REQUIRE(page);
  CHECK(page->status == 200);
  CHECK(page->body == "<html>riddle</html>");
  auto created = cli.Post("/sessions", "", "application/json");
  REQUIRE(created);
  CHECK(created->status == 201);
  const std::string sid = json::parse(created->body)["session_id"];
  auto round = cli.Post("/sessions/" + sid + "/rounds", "", "application/json");
  REQUIRE(round);
  CHECK(json::parse(round->body)["choices"].size() == 5);
  auto bad = cli.Post("/sessions/" + sid + "/rounds/r1/guess", "nope", "application/json");
  REQUIRE(bad);
  CHECK(bad->status == 400);
  auto missing = cli.Get("/sessions/zzz/score");
  REQUIRE(missing);
  CHECK(missing->status == 404);
  server.stop();
  CHECK_THROWS(GameServer(game.state, {"127.0.0.1", 0, dir.path() / "absent"}));
}
