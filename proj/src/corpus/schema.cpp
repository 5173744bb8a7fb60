#include "fsdm/corpus/schema.hpp"

#include <algorithm>

#include "fsdm/errors.hpp"

namespace fsdm::corpus {

namespace {

void require_unique(const std::vector<std::string>& names, const char* what) {
  std::set<std::string> seen;
  for (const auto& n : names) {
    if (n.empty()) throw ConfigError(std::string("empty slot name in ") + what);
    if (!seen.insert(n).second) throw ConfigError(std::string("duplicate slot '") + n + "' in " + what);
  }
}

bool contains(const std::vector<std::string>& v, const std::string& x) {
  return std::find(v.begin(), v.end(), x) != v.end();
}

}  // namespace

std::string end_marker(const std::string& slot) { return "end_" + slot; }
std::string start_symbol(const std::string& slot) { return "<go_" + slot + ">"; }
std::string placeholder(const std::string& slot) { return slot + kSlotSuffix; }

bool is_placeholder(const std::string& token) {
  return token.size() > kSlotSuffix.size() &&
         token.compare(token.size() - kSlotSuffix.size(), kSlotSuffix.size(), kSlotSuffix) == 0;
}

SlotSchema SlotSchema::make(std::vector<std::string> informable, std::vector<std::string> requestable) {
  SlotSchema s;
  s.informable = std::move(informable);
  s.requestable = std::move(requestable);
  for (const auto& r : s.requestable) s.response_slots.push_back(placeholder(r));
  s.validate();
  return s;
}

void SlotSchema::validate() const {
  require_unique(informable, "informable slots");
  require_unique(requestable, "requestable slots");
  require_unique(response_slots, "response slots");
  if (response_slots.size() != requestable.size()) {
    throw ConfigError("response slots must pair one-to-one with requestable slots");
  }
  for (std::size_t i = 0; i < requestable.size(); ++i) {
    if (response_slots[i] != placeholder(requestable[i])) {
      throw ConfigError("response slot '" + response_slots[i] + "' does not match requestable slot '" +
                        requestable[i] + "'");
    }
  }
}

bool SlotSchema::is_informable(const std::string& slot) const { return contains(informable, slot); }
bool SlotSchema::is_requestable(const std::string& slot) const { return contains(requestable, slot); }
bool SlotSchema::is_response_slot(const std::string& token) const { return contains(response_slots, token); }

int SlotSchema::response_index(const std::string& token) const {
  auto it = std::find(response_slots.begin(), response_slots.end(), token);
  return it == response_slots.end() ? -1 : static_cast<int>(it - response_slots.begin());
}

SlotSchema camrest_schema() {
  return SlotSchema::make({"price", "food", "area"},
                          {"address", "phone", "postcode", "name", "food", "area", "price"});
}

SlotSchema kvret_schema() {
  return SlotSchema::make({"event", "date", "time", "party", "room", "agenda", "location", "weather_attribute",
                           "poi_type", "distance"},
                          {"date", "time", "party", "room", "agenda", "location", "weather_attribute",
                           "temperature", "poi", "address", "distance", "traffic_info"});
}

void to_json(nlohmann::json& j, const SlotSchema& s) {
  j = {{"informable", s.informable}, {"requestable", s.requestable}, {"response_slots", s.response_slots}};
}

void from_json(const nlohmann::json& j, SlotSchema& s) {
  s.informable = j.at("informable").get<std::vector<std::string>>();
  s.requestable = j.at("requestable").get<std::vector<std::string>>();
  if (j.contains("response_slots")) {
    s.response_slots = j.at("response_slots").get<std::vector<std::string>>();
  } else {
    s.response_slots.clear();
    for (const auto& r : s.requestable) s.response_slots.push_back(placeholder(r));
  }
  s.validate();
}

void BeliefState::set(const std::string& slot, std::vector<std::string> value) {
  if (value.empty()) {
    informable.erase(slot);
  } else {
    informable[slot] = std::move(value);
  }
}

const std::vector<std::string>& BeliefState::value(const std::string& slot) const {
  static const std::vector<std::string> none;
  auto it = informable.find(slot);
  return it == informable.end() ? none : it->second;
}

void to_json(nlohmann::json& j, const BeliefState& b) {
  j = nlohmann::json::object();
  j["informable"] = nlohmann::json::object();
  for (const auto& [slot, value] : b.informable) j["informable"][slot] = value;
  j["requestable"] = std::vector<std::string>(b.requestable.begin(), b.requestable.end());
}

void from_json(const nlohmann::json& j, BeliefState& b) {
  b = {};
  if (j.contains("informable")) {
    for (const auto& [slot, value] : j.at("informable").items()) b.set(slot, value.get<std::vector<std::string>>());
  }
  if (j.contains("requestable")) {
    for (const auto& r : j.at("requestable")) b.requestable.insert(r.get<std::string>());
  }
}

namespace {

bool is_structural(const std::string& token, const SlotSchema& s) {
  if (token == kEndBelief) return true;
  for (const auto& slot : s.informable) {
    if (token == end_marker(slot)) return true;
  }
  return false;
}

}  // namespace

bool is_valid(const BeliefState& b, const SlotSchema& s) {
  for (const auto& [slot, value] : b.informable) {
    if (!s.is_informable(slot) || value.empty()) return false;
    for (const auto& tok : value) {
      if (tok.empty() || is_structural(tok, s)) return false;
    }
  }
  for (const auto& r : b.requestable) {
    if (!s.is_requestable(r)) return false;
  }
  return true;
}

std::vector<std::string> serialize_belief(const BeliefState& b, const SlotSchema& s) {
  std::vector<std::string> out;
  for (const auto& slot : s.informable) {
    const auto& v = b.value(slot);
    out.insert(out.end(), v.begin(), v.end());
    out.push_back(end_marker(slot));
  }
  for (const auto& r : s.requestable) {
    if (b.requestable.count(r)) out.push_back(r);
  }
  out.push_back(kEndBelief);
  return out;
}

ParsedBelief parse_belief(const std::vector<std::string>& tokens, const SlotSchema& s) {
  ParsedBelief parsed;
  bool valid = true;
  std::size_t pos = 0;
  std::vector<std::string> pending;
  for (const auto& slot : s.informable) {
    const std::string marker = end_marker(slot);
    std::size_t end = pos;
    while (end < tokens.size() && tokens[end] != marker && tokens[end] != kEndBelief) ++end;
    if (end >= tokens.size() || tokens[end] != marker) {
      valid = false;
      continue;
    }
    std::vector<std::string> value;
    for (std::size_t i = pos; i < end; ++i) {
      if (is_structural(tokens[i], s)) {
        valid = false;
      } else {
        value.push_back(tokens[i]);
      }
    }
    parsed.belief.set(slot, std::move(value));
    pos = end + 1;
  }
  bool closed = false;
  for (; pos < tokens.size(); ++pos) {
    const auto& tok = tokens[pos];
    if (tok == kEndBelief) {
      closed = true;
      valid = valid && pos + 1 == tokens.size();
      break;
    }
    if (s.is_requestable(tok)) {
      parsed.belief.requestable.insert(tok);
    } else {
      valid = false;
    }
  }
  parsed.valid = valid && closed;
  return parsed;
}

}  // namespace fsdm::corpus
