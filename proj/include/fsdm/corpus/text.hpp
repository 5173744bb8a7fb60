#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace fsdm::corpus {

// Lowercases ASCII and splits into runs of letters, digits, '_' and non-ASCII
// bytes. An apostrophe followed by a letter starts a clitic token ("'s");
// any other punctuation byte is a token of its own. Tokens ending in "_SLOT"
// keep their case.
std::vector<std::string> tokenize(std::string_view text);

std::string join(const std::vector<std::string>& tokens, std::string_view sep = " ");

// tokenize + join: the form used for every value comparison.
std::string normalize_value(std::string_view value);

// Surface value (as tokens) -> placeholder.
class Lexicon {
 public:
  void add(std::string_view value, const std::string& placeholder);
  bool empty() const { return entries_.empty(); }
  std::size_t size() const { return entries_.size(); }

  // Leftmost match, longest entry first, over token boundaries.
  std::vector<std::string> apply(const std::vector<std::string>& tokens) const;

 private:
  std::map<std::vector<std::string>, std::string> entries_;
  std::size_t longest_ = 0;
};

}  // namespace fsdm::corpus
