#include "gscg/game_server.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <sstream>
#include <stdexcept>

#include "gscg/random.hpp"
#include "httplib.h"

namespace gscg {

using nlohmann::json;

std::vector<PoolItem> pool_from_dataset(const Dataset& data, const Vocab& vocab) {
  std::vector<PoolItem> pool;
  for (const auto* split : {&data.train, &data.val, &data.test})
    for (const auto& s : *split) {
      if (vocab.class_index(s.label) < 0) continue;
      PoolItem item{data.graphs.at(s.graph), s.target};
      item.graph.nodes.at(s.target).label = s.label;
      pool.push_back(std::move(item));
    }
  if (pool.empty()) throw std::invalid_argument("game pool: no sample has a label the model knows");
  return pool;
}

namespace {

std::string timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  const auto ms =
      std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[40];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  char out[48];
  std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(ms));
  return out;
}

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> parts;
  std::stringstream ss(path);
  for (std::string p; std::getline(ss, p, '/');)
    if (!p.empty()) parts.push_back(p);
  return parts;
}

ApiResponse error(int status, const std::string& message) { return {status, {{"error", message}}}; }

json public_round(const RoundRecord& r) {
  json j{{"round_id", r.round_id}, {"riddle_text", r.round.riddle_text}, {"choices", r.round.choices}};
  return j;
}

json result_of(const RoundRecord& r) {
  return {{"choice_index", *r.human_pick},
          {"correct", *r.human_pick == r.round.correct_index},
          {"truth", r.round.truth()},
          {"ai_pick", r.round.ai_top1},
          {"ai_correct", r.round.ai_top1 == r.round.truth()}};
}

}  // namespace

GameState::GameState(Classifier model, std::vector<PoolItem> pool, std::uint64_t seed,
                     std::filesystem::path log_path)
    : model_(std::move(model)), pool_(std::move(pool)), seed_(seed) {
  if (pool_.empty()) throw std::invalid_argument("game pool is empty");
  if (!log_path.empty()) {
    log_.open(log_path, std::ios::app);
    if (!log_) throw std::runtime_error(log_path.string() + ": cannot open log for appending");
  }
}

void GameState::log(const json& event) {
  if (!log_.is_open()) return;
  std::lock_guard lock(log_mutex_);
  log_ << event.dump() << "\n";
  log_.flush();
}

ApiResponse GameState::handle(const std::string& method, const std::string& path,
                              const std::string& body) {
  const auto parts = split_path(path);
  if (parts.empty() || parts[0] != "sessions") return error(404, "no such resource");
  if (parts.size() == 1) {
    if (method != "POST") return error(405, "use POST /sessions");
    return create_session();
  }
  GameSession* session = nullptr;
  {
    std::lock_guard lock(sessions_mutex_);
    auto it = sessions_.find(parts[1]);
    if (it == sessions_.end()) return error(404, "unknown session " + parts[1]);
    session = it->second.get();
  }
  std::lock_guard lock(session->mutex);
  if (parts.size() == 3 && parts[2] == "score") {
    if (method != "GET") return error(405, "use GET for the score");
    return score(*session);
  }
  if (parts.size() >= 3 && parts[2] == "rounds") {
    if (parts.size() == 3) {
      if (method != "POST") return error(405, "use POST to create a round");
      return create_round(*session);
    }
    if (parts.size() == 4) {
      if (method != "GET") return error(405, "use GET to read a round");
      return get_round(*session, parts[3]);
    }
    if (parts.size() == 5 && parts[4] == "guess") {
      if (method != "POST") return error(405, "use POST to guess");
      return guess(*session, parts[3], body);
    }
  }
  return error(404, "no such resource");
}

ApiResponse GameState::create_session() {
  std::lock_guard lock(sessions_mutex_);
  auto s = std::make_unique<GameSession>();
  const std::uint64_t n = next_session_++;
  s->seed = mix_seed(seed_, n);
  char id[24];
  std::snprintf(id, sizeof id, "s%04llu%08llx", static_cast<unsigned long long>(n),
                static_cast<unsigned long long>(s->seed & 0xffffffffULL));
  s->session_id = id;
  s->order.resize(pool_.size());
  for (std::size_t i = 0; i < pool_.size(); ++i) s->order[i] = i;
  std::mt19937_64 rng(s->seed);
  for (std::size_t i = s->order.size() - 1; i > 0; --i)
    std::swap(s->order[i], s->order[uniform_index(rng, i + 1)]);
  const std::string sid = s->session_id;
  sessions_.emplace(sid, std::move(s));
  log({{"event", "session"}, {"session_id", sid}, {"time", timestamp()}});
  return {201, {{"session_id", sid}}};
}

ApiResponse GameState::create_round(GameSession& s) {
  const std::size_t k = s.rounds.size();
  const PoolItem& item = pool_[s.order[k % s.order.size()]];
  RoundRecord r;
  r.round_id = "r" + std::to_string(k + 1);
  r.round = build_round(item.graph, item.target, model_, mix_seed(s.seed, k + 1));
  r.created_at = timestamp();
  log({{"event", "round"},
       {"session_id", s.session_id},
       {"round_id", r.round_id},
       {"choices", r.round.choices},
       {"ai_pick", r.round.ai_top1},
       {"truth", r.round.truth()},
       {"time", r.created_at}});
  s.rounds.push_back(std::move(r));
  return {201, public_round(s.rounds.back())};
}

ApiResponse GameState::get_round(GameSession& s, const std::string& rid) {
  for (const auto& r : s.rounds)
    if (r.round_id == rid) {
      json j = public_round(r);
      if (r.human_pick) j["result"] = result_of(r);
      return {200, j};
    }
  return error(404, "unknown round " + rid);
}

ApiResponse GameState::guess(GameSession& s, const std::string& rid, const std::string& body) {
  RoundRecord* r = nullptr;
  for (auto& x : s.rounds)
    if (x.round_id == rid) r = &x;
  if (!r) return error(404, "unknown round " + rid);
  if (r->human_pick) return error(409, "round " + rid + " already answered");
  json doc = json::parse(body, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) return error(400, "body must be a JSON object");
  if (!doc.contains("choice_index") || !doc["choice_index"].is_number_integer())
    return error(400, "choice_index must be an integer");
  const long pick = doc["choice_index"].get<long>();
  if (pick < 0 || pick >= static_cast<long>(r->round.choices.size()))
    return error(400, "choice_index out of range");
  r->human_pick = static_cast<int>(pick);
  r->answered_at = timestamp();
  const json result = result_of(*r);
  ++s.rounds_played;
  s.human_correct += result["correct"].get<bool>();
  s.ai_correct += result["ai_correct"].get<bool>();
  log({{"event", "guess"},
       {"session_id", s.session_id},
       {"round_id", rid},
       {"human_pick", pick},
       {"result", result},
       {"time", r->answered_at}});
  return {200, result};
}

ApiResponse GameState::score(GameSession& s) {
  json j{{"rounds", s.rounds_played}, {"human_correct", s.human_correct}, {"ai_correct", s.ai_correct}};
  if (s.rounds_played > 0) {
    j["human_accuracy"] = static_cast<double>(s.human_correct) / s.rounds_played;
    j["ai_accuracy"] = static_cast<double>(s.ai_correct) / s.rounds_played;
  } else {
    j["human_accuracy"] = nullptr;
    j["ai_accuracy"] = nullptr;
  }
  return {200, j};
}

// ---------------------------------------------------------------------------
// HTTP

GameServer::GameServer(std::shared_ptr<GameState> state, ServerOptions options)
    : state_(std::move(state)), options_(std::move(options)), server_(std::make_unique<httplib::Server>()) {
  auto dispatch = [this](const httplib::Request& req, httplib::Response& res) {
    ApiResponse r;
    try {
      r = state_->handle(req.method, req.path, req.body);
    } catch (const std::exception& e) {
      r = {500, {{"error", e.what()}}};
    }
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  server_->Post(R"(/sessions(/.*)?)", dispatch);
  server_->Get(R"(/sessions(/.*)?)", dispatch);
  if (!options_.static_dir.empty() &&
      !server_->set_mount_point("/", options_.static_dir.string()))
    throw std::runtime_error(options_.static_dir.string() + ": static directory not found");
}

GameServer::~GameServer() { stop(); }

void GameServer::bind() {
  if (options_.port == 0) {
    port_ = server_->bind_to_any_port(options_.host);
  } else {
    port_ = server_->bind_to_port(options_.host, options_.port) ? options_.port : -1;
  }
  if (port_ <= 0)
    throw std::runtime_error("cannot bind " + options_.host + ":" + std::to_string(options_.port));
}

int GameServer::start() {
  bind();
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return port_;
}

void GameServer::run() {
  bind();
  server_->listen_after_bind();
}

void GameServer::wait() {
  if (thread_.joinable()) thread_.join();
}

void GameServer::request_stop() {
  if (server_) server_->stop();
}

void GameServer::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace gscg
