#include "fsdm/corpus/delex.hpp"

#include <algorithm>
#include <cctype>
#include <set>

namespace fsdm::corpus {

namespace {

bool has_alnum(const std::string& s) {
  return std::any_of(s.begin(), s.end(), [](unsigned char c) { return std::isalnum(c) != 0; });
}

}  // namespace

Lexicon lexicon_for(const std::vector<kb::Record>& records, const SlotSchema& schema) {
  Lexicon lex;
  for (const auto& rec : records) {
    for (const auto& slot : schema.requestable) {
      auto it = rec.find(slot);
      if (it == rec.end() || !has_alnum(it->second) || normalize_value(it->second) == kb::kDontCare) continue;
      lex.add(it->second, placeholder(slot));
    }
  }
  return lex;
}

std::vector<std::string> delexicalize(std::string_view response, const Lexicon& lexicon) {
  return lexicon.apply(tokenize(response));
}

std::vector<std::string> delexicalize(std::string_view response, const kb::Record& record,
                                      const SlotSchema& schema) {
  return delexicalize(response, lexicon_for({record}, schema));
}

std::vector<std::string> response_slots_of(const std::vector<std::string>& delex, const SlotSchema& schema) {
  std::set<std::string> present(delex.begin(), delex.end());
  std::vector<std::string> out;
  for (const auto& slot : schema.response_slots) {
    if (present.count(slot)) out.push_back(slot);
  }
  return out;
}

}  // namespace fsdm::corpus
