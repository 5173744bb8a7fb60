#include "fsdm/kb/kb.hpp"

#include <algorithm>
#include <fstream>

#include "fsdm/corpus/text.hpp"
#include "fsdm/errors.hpp"

namespace fsdm::kb {

void KBTable::add(Record record) {
  for (const auto& [attr, value] : record) {
    if (!has_attribute(attr)) throw QueryError("table '" + name + "' has no attribute '" + attr + "'");
  }
  for (const auto& attr : attributes) record.try_emplace(attr, kMissing);
  records.push_back(std::move(record));
}

bool KBTable::has_attribute(const std::string& attr) const {
  return std::find(attributes.begin(), attributes.end(), attr) != attributes.end();
}

namespace {

// Active constraints, normalized; dontcare and empty values dropped.
std::vector<std::pair<std::string, std::string>> active(const Constraints& constraints) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& [slot, tokens] : constraints) {
    std::string v = corpus::normalize_value(corpus::join(tokens));
    if (v.empty() || v == kDontCare) continue;
    out.emplace_back(slot, std::move(v));
  }
  return out;
}

bool matches(const Record& rec, const std::vector<std::pair<std::string, std::string>>& cons) {
  for (const auto& [attr, value] : cons) {
    auto it = rec.find(attr);
    if (it == rec.end() || it->second.empty() || corpus::normalize_value(it->second) != value) return false;
  }
  return true;
}

}  // namespace

std::vector<Record> query(const KBTable& table, const Constraints& constraints) {
  const auto cons = active(constraints);
  for (const auto& [attr, value] : cons) {
    if (!table.has_attribute(attr)) throw QueryError("table '" + table.name + "' has no attribute '" + attr + "'");
  }
  std::vector<Record> out;
  for (const auto& rec : table.records) {
    if (matches(rec, cons)) out.push_back(rec);
  }
  return out;
}

std::vector<Record> query(const std::vector<KBTable>& tables, const Constraints& constraints) {
  const auto cons = active(constraints);
  std::vector<Record> out;
  for (const auto& table : tables) {
    bool covers = true;
    for (const auto& [attr, value] : cons) covers = covers && table.has_attribute(attr);
    if (!covers) continue;
    for (const auto& rec : table.records) {
      if (matches(rec, cons)) out.push_back(rec);
    }
  }
  return out;
}

std::size_t MatchIndicator::index() const {
  return static_cast<std::size_t>(std::max_element(bins.begin(), bins.end()) - bins.begin());
}

MatchIndicator encode_match_count(long n) {
  if (n < 0) throw ContractViolation("match count must be non-negative, got " + std::to_string(n));
  MatchIndicator d;
  d.bins[static_cast<std::size_t>(std::min<long>(n, kMatchBins - 1))] = 1.0f;
  return d;
}

std::string lexicalize(const std::vector<std::string>& delex, const std::vector<Record>& results,
                       const corpus::BeliefState& belief) {
  std::vector<std::string> out;
  out.reserve(delex.size());
  for (const auto& tok : delex) {
    if (!corpus::is_placeholder(tok)) {
      out.push_back(tok);
      continue;
    }
    const std::string attr = tok.substr(0, tok.size() - corpus::kSlotSuffix.size());
    std::string value;
    if (!results.empty()) {
      auto it = results.front().find(attr);
      if (it != results.front().end()) value = it->second;
    }
    if (value.empty()) {
      const auto& v = belief.value(attr);
      if (!v.empty() && corpus::join(v) != kDontCare) value = corpus::join(v);
    }
    out.push_back(value.empty() ? kFallback : value);
  }
  return corpus::join(out);
}

std::vector<KBTable> tables_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ParseError("KB json must map table names to record arrays");
  std::vector<KBTable> tables;
  for (const auto& [name, records] : j.items()) {
    if (!records.is_array()) throw ParseError("KB table '" + name + "' is not an array");
    KBTable t;
    t.name = name;
    for (const auto& rec : records) {
      if (!rec.is_object()) throw ParseError("KB table '" + name + "' holds a non-object record");
      for (const auto& [attr, value] : rec.items()) {
        if (!value.is_string()) throw ParseError("KB attribute '" + attr + "' in '" + name + "' is not a string");
        if (!t.has_attribute(attr)) t.attributes.push_back(attr);
      }
    }
    for (const auto& rec : records) t.add(rec.get<Record>());
    tables.push_back(std::move(t));
  }
  return tables;
}

nlohmann::json tables_to_json(const std::vector<KBTable>& tables) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& t : tables) {
    auto arr = nlohmann::json::array();
    for (const auto& rec : t.records) arr.push_back(rec);
    j[t.name] = std::move(arr);
  }
  return j;
}

std::vector<KBTable> load_tables(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open KB file " + path);
  try {
    return tables_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path + ": " + e.what());
  }
}

std::size_t record_count(const std::vector<KBTable>& tables) {
  std::size_t n = 0;
  for (const auto& t : tables) n += t.size();
  return n;
}

}  // namespace fsdm::kb
