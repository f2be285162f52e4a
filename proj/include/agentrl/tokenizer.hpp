#pragma once

#include <string>
#include <string_view>

namespace agentrl {

/**
 * Token counting abstraction.
 *
 * Every budget, cap, and mask in the system is measured in tokens under one
 * injected tokenizer, so counts stay consistent without a model vocabulary.
 * Protocol tag strings (<think>, </code>, ...) are handled by the protocol
 * layer as one special token each and never reach the tokenizer.
 */
class Tokenizer {
 public:
  virtual ~Tokenizer() = default;

  virtual int count(std::string_view text) const = 0;

  // Longest prefix of `text` spanning at most `max_tokens` tokens, cut at a
  // token boundary.
  virtual std::string_view prefix(std::string_view text, int max_tokens) const = 0;
};

// Default: deterministic splitter. A token is a maximal run of [A-Za-z0-9_]
// or a maximal run of other non-space characters.
class WhitespaceTokenizer final : public Tokenizer {
 public:
  int count(std::string_view text) const override;
  std::string_view prefix(std::string_view text, int max_tokens) const override;
};

const Tokenizer& default_tokenizer();

}  // namespace agentrl
