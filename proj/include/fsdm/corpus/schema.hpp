#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

namespace fsdm::corpus {

inline const std::string kEndBelief = "end_belief";
inline const std::string kSlotSuffix = "_SLOT";

struct SlotSchema {
  std::vector<std::string> informable;
  std::vector<std::string> requestable;
  std::vector<std::string> response_slots;  // positional with requestable

  // Builds response slots as `<slot>_SLOT` and validates.
  static SlotSchema make(std::vector<std::string> informable, std::vector<std::string> requestable);

  void validate() const;
  bool is_informable(const std::string& slot) const;
  bool is_requestable(const std::string& slot) const;
  bool is_response_slot(const std::string& token) const;
  // Index in `requestable` of a `<slot>_SLOT` token, or -1.
  int response_index(const std::string& token) const;

  bool operator==(const SlotSchema&) const = default;
};

SlotSchema camrest_schema();
SlotSchema kvret_schema();

void to_json(nlohmann::json& j, const SlotSchema& s);
void from_json(const nlohmann::json& j, SlotSchema& s);

std::string end_marker(const std::string& slot);    // end_price
std::string start_symbol(const std::string& slot);  // <go_price>
std::string placeholder(const std::string& slot);   // price_SLOT
bool is_placeholder(const std::string& token);

// Empty value sequences are never stored: a slot is either absent or has at
// least one token.
struct BeliefState {
  std::map<std::string, std::vector<std::string>> informable;
  std::set<std::string> requestable;

  void set(const std::string& slot, std::vector<std::string> value);
  const std::vector<std::string>& value(const std::string& slot) const;
  bool empty() const { return informable.empty() && requestable.empty(); }

  bool operator==(const BeliefState&) const = default;
};

void to_json(nlohmann::json& j, const BeliefState& b);
void from_json(const nlohmann::json& j, BeliefState& b);

// Keys known to the schema and no value token collides with a structural
// marker.
bool is_valid(const BeliefState& b, const SlotSchema& s);

std::vector<std::string> serialize_belief(const BeliefState& b, const SlotSchema& s);

struct ParsedBelief {
  BeliefState belief;
  bool valid = false;
};

ParsedBelief parse_belief(const std::vector<std::string>& tokens, const SlotSchema& s);

}  // namespace fsdm::corpus
