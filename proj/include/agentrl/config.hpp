#pragma once

#include <optional>
#include <string>

#include <json.hpp>

namespace agentrl::config {

/**
 * JSON config with dotted-path lookup ("sandbox.workers") and environment
 * overrides. Missing keys fall back to the supplied default, so an empty
 * config is always valid.
 */
class Config {
 public:
  Config() : root_(nlohmann::json::object()) {}
  explicit Config(nlohmann::json root) : root_(std::move(root)) {}

  static Config load_file(const std::string& path);

  int get_int(const std::string& dotted, int fallback) const;
  double get_double(const std::string& dotted, double fallback) const;
  std::string get_string(const std::string& dotted, const std::string& fallback) const;
  bool get_bool(const std::string& dotted, bool fallback) const;

  bool has(const std::string& dotted) const;
  const nlohmann::json& raw() const { return root_; }

 private:
  const nlohmann::json* find(const std::string& dotted) const;
  nlohmann::json root_;
};

// SANDBOX_WORKERS overrides sandbox.workers when set.
std::optional<int> env_sandbox_workers();

}  // namespace agentrl::config
