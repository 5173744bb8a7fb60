#include "fsdm/service/service.hpp"

#include <httplib.h>

#include <cstdio>
#include <random>

#include "fsdm/corpus/text.hpp"
#include "fsdm/errors.hpp"

namespace fsdm::service {

using nlohmann::json;

DialogueService::DialogueService(model::Model<float> model, std::vector<kb::KBTable> tables, ServiceOptions options)
    : model_(std::move(model)), tables_(std::move(tables)), options_(std::move(options)), id_salt_(std::random_device{}()) {
  for (const auto& slot : model_.schema().informable) {
    bool covered = false;
    for (const auto& t : tables_) covered = covered || t.has_attribute(slot);
    if (!covered && !tables_.empty()) throw ConfigError("no KB table has informable slot '" + slot + "'");
  }
}

std::string DialogueService::fresh_id() {
  char buf[40];
  std::snprintf(buf, sizeof buf, "s%08llx-%llu", static_cast<unsigned long long>(id_salt_ & 0xffffffffu),
                static_cast<unsigned long long>(++next_id_));
  return buf;
}

void DialogueService::evict_locked(Clock::time_point now) {
  for (auto it = sessions_.begin(); it != sessions_.end();) {
    it = now - it->second->last_used > options_.session_ttl ? sessions_.erase(it) : std::next(it);
  }
}

std::shared_ptr<Session> DialogueService::acquire(const std::string& id) {
  std::lock_guard lock(store_mutex_);
  const auto now = options_.clock();
  evict_locked(now);
  auto it = id.empty() ? sessions_.end() : sessions_.find(id);
  if (it == sessions_.end()) {
    auto s = std::make_shared<Session>();
    s->id = id.empty() ? fresh_id() : id;
    it = sessions_.emplace(s->id, s).first;
  }
  it->second->last_used = now;
  return it->second;
}

void DialogueService::evict_expired() {
  std::lock_guard lock(store_mutex_);
  evict_locked(options_.clock());
}

json DialogueService::turn(const json& request) {
  if (!request.is_object()) throw BadRequest("request body must be a JSON object");
  if (!request.contains("user_utterance") || !request["user_utterance"].is_string()) {
    throw BadRequest("user_utterance must be a string");
  }
  std::string id;
  if (request.contains("session_id") && !request["session_id"].is_null()) {
    if (!request["session_id"].is_string()) throw BadRequest("session_id must be a string");
    id = request["session_id"].get<std::string>();
  }
  const std::string utterance = request["user_utterance"].get<std::string>();
  const auto user = corpus::tokenize(utterance);
  if (user.empty()) throw BadRequest("user_utterance is empty");

  auto session = acquire(id);
  std::lock_guard lock(session->mutex);
  const auto p = model::predict_turn(model_, session->last_agent_response, session->belief, user, tables_);
  if (!p.belief_valid) throw NumericError("model produced an invalid belief");
  const std::string text = kb::lexicalize(p.response, p.records, p.belief);
  json shown = json::array();
  for (std::size_t i = 0; i < p.records.size() && i < options_.records_shown; ++i) shown.push_back(p.records[i]);
  if (before_commit) before_commit();

  session->belief = p.belief;
  session->last_agent_response = p.response;
  session->transcript.emplace_back("user", utterance);
  session->transcript.emplace_back("agent", text);
  return {{"session_id", session->id},
          {"belief", p.belief},
          {"match_bin", p.match.index()},
          {"match_count", p.match_count},
          {"response_text", text},
          {"delex_response", corpus::join(p.response)},
          {"response_slots", p.response_slots},
          {"kb_records_shown", shown}};
}

json DialogueService::reset(const json& request) {
  if (!request.is_object()) throw BadRequest("request body must be a JSON object");
  if (request.contains("session_id") && !request["session_id"].is_null()) {
    if (!request["session_id"].is_string()) throw BadRequest("session_id must be a string");
    std::lock_guard lock(store_mutex_);
    sessions_.erase(request["session_id"].get<std::string>());
  }
  return {{"session_id", acquire("")->id}};
}

json DialogueService::health() {
  return {{"status", "ok"}, {"sessions", session_count()}, {"vocab_size", model_.vocab().size()},
          {"kb_records", kb::record_count(tables_)}};
}

json DialogueService::schema() const { return model_.schema(); }

std::size_t DialogueService::session_count() {
  std::lock_guard lock(store_mutex_);
  return sessions_.size();
}

json DialogueService::session_state(const std::string& id) {
  std::shared_ptr<Session> s;
  {
    std::lock_guard lock(store_mutex_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw BadRequest("unknown session '" + id + "'");
    s = it->second;
  }
  std::lock_guard lock(s->mutex);
  json transcript = json::array();
  for (const auto& [who, text] : s->transcript) transcript.push_back({{"speaker", who}, {"text", text}});
  return {{"session_id", s->id},
          {"belief", s->belief},
          {"last_agent_response", corpus::join(s->last_agent_response)},
          {"transcript", transcript}};
}

namespace {

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

template <typename F>
void guarded(const httplib::Request& req, httplib::Response& res, F&& f) {
  json body;
  try {
    body = req.body.empty() ? json::object() : json::parse(req.body);
  } catch (const json::exception&) {
    return reply(res, 400, {{"error", "request body is not valid JSON"}});
  }
  try {
    reply(res, 200, f(body));
  } catch (const BadRequest& e) {
    reply(res, 400, {{"error", e.what()}});
  } catch (const std::exception& e) {
    reply(res, 500, {{"error", e.what()}});
  }
}

}  // namespace

void mount(httplib::Server& server, DialogueService& service) {
  server.Post("/v1/turn", [&service](const httplib::Request& req, httplib::Response& res) {
    guarded(req, res, [&](const json& b) { return service.turn(b); });
  });
  server.Post("/v1/session/reset", [&service](const httplib::Request& req, httplib::Response& res) {
    guarded(req, res, [&](const json& b) { return service.reset(b); });
  });
  server.Get("/v1/health", [&service](const httplib::Request&, httplib::Response& res) {
    reply(res, 200, service.health());
  });
  server.Get("/v1/schema", [&service](const httplib::Request&, httplib::Response& res) {
    reply(res, 200, service.schema());
  });
}

}  // namespace fsdm::service
