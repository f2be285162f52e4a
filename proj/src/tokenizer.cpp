#include "agentrl/tokenizer.hpp"

#include <cctype>

namespace agentrl {

namespace {

inline bool is_word(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

inline bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)); }

// Advances past one token starting at a non-space position.
size_t token_end(std::string_view text, size_t i) {
  if (is_word(text[i])) {
    while (i < text.size() && is_word(text[i])) ++i;
  } else {
    while (i < text.size() && !is_word(text[i]) && !is_space(text[i])) ++i;
  }
  return i;
}

}  // namespace

int WhitespaceTokenizer::count(std::string_view text) const {
  int n = 0;
  size_t i = 0;
  while (i < text.size()) {
    if (is_space(text[i])) {
      ++i;
      continue;
    }
    i = token_end(text, i);
    ++n;
  }
  return n;
}

std::string_view WhitespaceTokenizer::prefix(std::string_view text, int max_tokens) const {
  if (max_tokens <= 0) return text.substr(0, 0);
  int n = 0;
  size_t i = 0;
  size_t last_end = 0;
  while (i < text.size()) {
    if (is_space(text[i])) {
      ++i;
      continue;
    }
    i = token_end(text, i);
    ++n;
    last_end = i;
    if (n == max_tokens) break;
  }
  return text.substr(0, last_end);
}

const Tokenizer& default_tokenizer() {
  static WhitespaceTokenizer tok;
  return tok;
}

}  // namespace agentrl
