#include "fsdm/corpus/vocab.hpp"

#include <algorithm>

#include "fsdm/errors.hpp"

namespace fsdm::corpus {

void Vocab::push(const std::string& token) {
  if (index_.count(token)) return;
  index_.emplace(token, static_cast<std::int32_t>(tokens_.size()));
  tokens_.push_back(token);
}

Vocab Vocab::build(const std::map<std::string, std::size_t>& counts, const SlotSchema& schema,
                   std::size_t min_count) {
  if (min_count < 1) throw ConfigError("min_count must be at least 1");
  Vocab v;
  for (const auto& t : {kPad, kUnk, kGo, kEos, kEndBelief}) v.push(t);
  for (const auto& slot : schema.informable) {
    v.push(start_symbol(slot));
    v.push(end_marker(slot));
  }
  for (const auto& r : schema.requestable) v.push(r);
  for (const auto& p : schema.response_slots) v.push(p);
  v.reserved_ = v.tokens_.size();

  std::vector<std::pair<std::string, std::size_t>> kept;
  for (const auto& [tok, n] : counts) {
    if (n >= min_count && !v.contains(tok)) kept.emplace_back(tok, n);
  }
  std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  for (const auto& [tok, n] : kept) v.push(tok);
  return v;
}

std::int32_t Vocab::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnkId : it->second;
}

const std::string& Vocab::token(std::int32_t id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw ContractViolation("vocab id " + std::to_string(id) + " out of range");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<std::int32_t> Vocab::ids(const std::vector<std::string>& tokens) const {
  std::vector<std::int32_t> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(id(t));
  return out;
}

nlohmann::json Vocab::to_json() const { return {{"tokens", tokens_}, {"reserved", reserved_}}; }

Vocab Vocab::from_json(const nlohmann::json& j) {
  Vocab v;
  for (const auto& t : j.at("tokens")) v.push(t.get<std::string>());
  v.reserved_ = j.at("reserved").get<std::size_t>();
  if (v.tokens_.size() != j.at("tokens").size() || v.reserved_ > v.tokens_.size()) {
    throw CheckpointError("vocabulary in checkpoint is malformed");
  }
  return v;
}

}  // namespace fsdm::corpus
