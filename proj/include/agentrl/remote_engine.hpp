#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "agentrl/engine.hpp"
#include "agentrl/tokenizer.hpp"

namespace agentrl::engine {

class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ServiceError : public std::runtime_error {
 public:
  ServiceError(int status, const std::string& body)
      : std::runtime_error("service returned status " + std::to_string(status)), status(status),
        body(body) {}
  int status;
  std::string body;
};

class RemoteTimeout : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RemoteConfig {
  std::string endpoint;  // http://host:port/path
  std::string token;     // bearer auth, optional
  double timeout_s = 60.0;
  double temperature = 1.0;
};

/**
 * Client for a text-completion service. POSTs
 *   {"prompt": ..., "max_tokens": ..., "stop": [...], "temperature": ...}
 * and expects {"text": ...}; the completion is truncated at the first stop
 * sequence. Network time never enters simulation metrics.
 */
class RemoteEngine {
 public:
  explicit RemoteEngine(RemoteConfig cfg, const Tokenizer& tok = default_tokenizer());

  GenerationChunk remote_generate(const std::string& prompt,
                                  const std::vector<std::string>& stop_sequences, int max_tokens);

  const RemoteConfig& config() const { return cfg_; }

 private:
  RemoteConfig cfg_;
  const Tokenizer& tok_;
  std::string host_;  // scheme://host:port
  std::string path_;
};

}  // namespace agentrl::engine
