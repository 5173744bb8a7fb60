#pragma once

#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "fsdm/model/model.hpp"

namespace httplib {
class Server;
}

namespace fsdm::service {

using Clock = std::chrono::steady_clock;

// Malformed request; maps to HTTP 400.
struct BadRequest : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ServiceOptions {
  std::chrono::seconds session_ttl{30 * 60};
  std::size_t records_shown = 3;
  std::function<Clock::time_point()> clock = [] { return Clock::now(); };
};

struct Session {
  std::string id;
  corpus::BeliefState belief;
  std::vector<std::string> last_agent_response;  // delexicalized
  std::vector<std::pair<std::string, std::string>> transcript;  // (speaker, text)
  Clock::time_point last_used;
  std::mutex mutex;
};

class DialogueService {
 public:
  DialogueService(model::Model<float> model, std::vector<kb::KBTable> tables, ServiceOptions options = {});

  // {session_id?, user_utterance} -> {session_id, belief, match_bin, match_count,
  // response_text, delex_response, response_slots, kb_records_shown}.
  // The session is only updated when the turn succeeds.
  nlohmann::json turn(const nlohmann::json& request);
  // {session_id?} -> {session_id}; drops the named session and opens a fresh one.
  nlohmann::json reset(const nlohmann::json& request);
  nlohmann::json health();
  nlohmann::json schema() const;

  std::size_t session_count();
  // Session snapshot for inspection; BadRequest when unknown.
  nlohmann::json session_state(const std::string& id);
  void evict_expired();

  // Test hook: called after prediction and before the session is committed.
  std::function<void()> before_commit;

 private:
  std::shared_ptr<Session> acquire(const std::string& id);
  std::string fresh_id();
  void evict_locked(Clock::time_point now);

  model::Model<float> model_;
  std::vector<kb::KBTable> tables_;
  ServiceOptions options_;
  std::mutex store_mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::uint64_t next_id_ = 0;
  std::uint64_t id_salt_;
};

// Installs POST /v1/turn, POST /v1/session/reset, GET /v1/health and
// GET /v1/schema.
void mount(httplib::Server& server, DialogueService& service);

}  // namespace fsdm::service
