#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "fsdm/corpus/schema.hpp"

namespace fsdm::corpus {

inline const std::string kPad = "<pad>";
inline const std::string kUnk = "<unk>";
inline const std::string kGo = "<go>";
inline const std::string kEos = "<eos>";

class Vocab {
 public:
  static constexpr std::int32_t kPadId = 0;
  static constexpr std::int32_t kUnkId = 1;
  static constexpr std::int32_t kGoId = 2;
  static constexpr std::int32_t kEosId = 3;

  Vocab() = default;

  // Reserved tokens first (special symbols, end_belief, per-slot start and
  // end markers, requestable names, placeholders), then counted tokens with
  // count >= min_count by descending count, ties alphabetical.
  static Vocab build(const std::map<std::string, std::size_t>& counts, const SlotSchema& schema,
                     std::size_t min_count);

  std::int32_t id(const std::string& token) const;  // kUnkId when absent
  bool contains(const std::string& token) const { return index_.count(token) != 0; }
  const std::string& token(std::int32_t id) const;
  std::size_t size() const { return tokens_.size(); }
  std::size_t reserved_count() const { return reserved_; }
  bool is_reserved(std::int32_t id) const { return id >= 0 && static_cast<std::size_t>(id) < reserved_; }
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::vector<std::int32_t> ids(const std::vector<std::string>& tokens) const;

  nlohmann::json to_json() const;
  static Vocab from_json(const nlohmann::json& j);

  bool operator==(const Vocab& o) const { return tokens_ == o.tokens_ && reserved_ == o.reserved_; }

 private:
  void push(const std::string& token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::int32_t> index_;
  std::size_t reserved_ = 0;
};

}  // namespace fsdm::corpus
