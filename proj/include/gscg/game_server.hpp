#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "gscg/classifier.hpp"
#include "gscg/describe.hpp"
#include "json.hpp"

namespace httplib {
class Server;
}

namespace gscg {

struct PoolItem {
  Gscg graph;
  int target = 0;  // graph.node(target).label is the answer
};

/// Pool from a dataset: every sample whose label the model knows, answer written
/// onto the target node. Throws std::invalid_argument when nothing is usable.
std::vector<PoolItem> pool_from_dataset(const Dataset& data, const Vocab& vocab);

struct RoundRecord {
  std::string round_id;
  RiddleRound round;
  std::string created_at;
  std::optional<int> human_pick;
  std::string answered_at;
};

struct GameSession {
  std::string session_id;
  std::uint64_t seed = 0;
  std::vector<std::size_t> order;  // shuffled pool indices
  std::vector<RoundRecord> rounds;
  int rounds_played = 0;  // answered rounds
  int human_correct = 0;
  int ai_correct = 0;
  std::mutex mutex;
};

struct ApiResponse {
  int status = 200;
  nlohmann::json body;
};

/// Riddle game state behind the HTTP API:
///   POST /sessions                                -> {session_id}
///   POST /sessions/{id}/rounds                    -> {round_id, riddle_text, choices}
///   GET  /sessions/{id}/rounds/{rid}              -> same, plus the result once answered
///   POST /sessions/{id}/rounds/{rid}/guess        {choice_index}
///                                                 -> {correct, truth, ai_pick, ai_correct}
///   GET  /sessions/{id}/score                     -> {rounds, human_accuracy, ai_accuracy}
/// Accuracies are null before the first answered round.
class GameState {
 public:
  GameState(Classifier model, std::vector<PoolItem> pool, std::uint64_t seed = 0,
            std::filesystem::path log_path = {});

  ApiResponse handle(const std::string& method, const std::string& path, const std::string& body);
  std::size_t pool_size() const { return pool_.size(); }

 private:
  ApiResponse create_session();
  ApiResponse create_round(GameSession& s);
  ApiResponse get_round(GameSession& s, const std::string& rid);
  ApiResponse guess(GameSession& s, const std::string& rid, const std::string& body);
  ApiResponse score(GameSession& s);
  void log(const nlohmann::json& event);

  Classifier model_;
  std::vector<PoolItem> pool_;
  std::uint64_t seed_;
  std::mutex sessions_mutex_;
  std::map<std::string, std::unique_ptr<GameSession>> sessions_;
  std::uint64_t next_session_ = 0;
  std::mutex log_mutex_;
  std::ofstream log_;
};

struct ServerOptions {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::filesystem::path static_dir;
};

/// HTTP front end. start() binds and serves on a background thread.
class GameServer {
 public:
  GameServer(std::shared_ptr<GameState> state, ServerOptions options);
  ~GameServer();
  GameServer(const GameServer&) = delete;
  GameServer& operator=(const GameServer&) = delete;

  /// Returns the bound port; throws std::runtime_error if binding fails.
  int start();
  /// Blocks until stop() is called from another thread.
  void run();
  /// Blocks until a server started with start() has shut down.
  void wait();
  /// Asks the listener to shut down without waiting for it.
  void request_stop();
  void stop();
  int port() const { return port_; }

 private:
  void bind();

  std::shared_ptr<GameState> state_;
  ServerOptions options_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  int port_ = 0;
};

}  // namespace gscg
