#include "fsdm/corpus/text.hpp"

#include <cctype>

#include "fsdm/corpus/schema.hpp"

namespace fsdm::corpus {

namespace {

bool word_byte(unsigned char c) { return std::isalnum(c) || c == '_' || c >= 0x80; }

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (std::isspace(c)) {
      ++i;
      continue;
    }
    std::size_t start = i;
    if (c == '\'' && i + 1 < n && std::isalpha(static_cast<unsigned char>(text[i + 1])) && !out.empty() &&
        start > 0 && word_byte(static_cast<unsigned char>(text[start - 1]))) {
      ++i;
    } else if (!word_byte(c)) {
      out.emplace_back(1, static_cast<char>(std::tolower(c)));
      ++i;
      continue;
    }
    while (i < n && word_byte(static_cast<unsigned char>(text[i]))) ++i;
    std::string tok(text.substr(start, i - start));
    if (!is_placeholder(tok)) {
      for (auto& ch : tok) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    }
    out.push_back(std::move(tok));
  }
  return out;
}

std::string join(const std::vector<std::string>& tokens, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += sep;
    out += tokens[i];
  }
  return out;
}

std::string normalize_value(std::string_view value) { return join(tokenize(value)); }

void Lexicon::add(std::string_view value, const std::string& placeholder) {
  auto toks = tokenize(value);
  if (toks.empty()) return;
  longest_ = std::max(longest_, toks.size());
  entries_.emplace(std::move(toks), placeholder);
}

std::vector<std::string> Lexicon::apply(const std::vector<std::string>& tokens) const {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < tokens.size()) {
    bool matched = false;
    for (std::size_t len = std::min(longest_, tokens.size() - i); len > 0 && !matched; --len) {
      std::vector<std::string> key(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                   tokens.begin() + static_cast<std::ptrdiff_t>(i + len));
      auto it = entries_.find(key);
      if (it != entries_.end()) {
        out.push_back(it->second);
        i += len;
        matched = true;
      }
    }
    if (!matched) out.push_back(tokens[i++]);
  }
  return out;
}

}  // namespace fsdm::corpus
