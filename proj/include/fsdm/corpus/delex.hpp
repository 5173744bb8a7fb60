#pragma once

#include <string_view>
#include <vector>

#include "fsdm/corpus/schema.hpp"
#include "fsdm/corpus/text.hpp"
#include "fsdm/kb/kb.hpp"

namespace fsdm::corpus {

// Values of every requestable attribute in `records`, mapped to placeholders.
Lexicon lexicon_for(const std::vector<kb::Record>& records, const SlotSchema& schema);

std::vector<std::string> delexicalize(std::string_view response, const Lexicon& lexicon);
std::vector<std::string> delexicalize(std::string_view response, const kb::Record& record,
                                      const SlotSchema& schema);

// The placeholder tokens of a delexicalized response, in schema order.
std::vector<std::string> response_slots_of(const std::vector<std::string>& delex, const SlotSchema& schema);

}  // namespace fsdm::corpus
