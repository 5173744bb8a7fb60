#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "fsdm/corpus/schema.hpp"

namespace fsdm::kb {

using Record = std::map<std::string, std::string>;

// Attribute value standing in for "not recorded".
inline const std::string kMissing;
inline const std::string kDontCare = "dontcare";
inline const std::string kFallback = "unknown";

struct KBTable {
  std::string name;
  std::vector<std::string> attributes;
  std::vector<Record> records;

  // Fills absent attributes with kMissing and rejects unknown ones.
  void add(Record record);
  bool has_attribute(const std::string& attr) const;
  std::size_t size() const { return records.size(); }
};

// Slot -> value tokens, as held by an informable belief.
using Constraints = std::map<std::string, std::vector<std::string>>;

// Records whose constrained attributes equal the constraint after
// normalization. "dontcare" constraints are skipped. Throws QueryError on an
// attribute the table does not have.
std::vector<Record> query(const KBTable& table, const Constraints& constraints);

// Concatenated results, in table order, over the tables whose attributes
// cover every active constraint.
std::vector<Record> query(const std::vector<KBTable>& tables, const Constraints& constraints);

inline constexpr std::size_t kMatchBins = 5;

struct MatchIndicator {
  std::array<float, kMatchBins> bins{};
  std::size_t index() const;
};

// One-hot over {0, 1, 2, 3, >=4}.
MatchIndicator encode_match_count(long n);

// Placeholder tokens take the attribute of the first result, then the
// belief's informable value for that slot, then kFallback. Tokens are
// joined with single spaces.
std::string lexicalize(const std::vector<std::string>& delex, const std::vector<Record>& results,
                       const corpus::BeliefState& belief);

std::vector<KBTable> tables_from_json(const nlohmann::json& j);
nlohmann::json tables_to_json(const std::vector<KBTable>& tables);
std::vector<KBTable> load_tables(const std::string& path);

std::size_t record_count(const std::vector<KBTable>& tables);

}  // namespace fsdm::kb
