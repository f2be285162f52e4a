#include "agentrl/config.hpp"

#include <cstdlib>
#include <fstream>

namespace agentrl::config {

Config Config::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  nlohmann::json j;
  in >> j;
  return Config(std::move(j));
}

const nlohmann::json* Config::find(const std::string& dotted) const {
  const nlohmann::json* node = &root_;
  size_t start = 0;
  while (true) {
    size_t dot = dotted.find('.', start);
    std::string key = dotted.substr(start, dot == std::string::npos ? dot : dot - start);
    if (!node->is_object() || !node->contains(key)) return nullptr;
    node = &(*node)[key];
    if (dot == std::string::npos) return node;
    start = dot + 1;
  }
}

bool Config::has(const std::string& dotted) const { return find(dotted) != nullptr; }

int Config::get_int(const std::string& dotted, int fallback) const {
  const auto* n = find(dotted);
  return n && n->is_number() ? n->get<int>() : fallback;
}

double Config::get_double(const std::string& dotted, double fallback) const {
  const auto* n = find(dotted);
  return n && n->is_number() ? n->get<double>() : fallback;
}

std::string Config::get_string(const std::string& dotted, const std::string& fallback) const {
  const auto* n = find(dotted);
  return n && n->is_string() ? n->get<std::string>() : fallback;
}

bool Config::get_bool(const std::string& dotted, bool fallback) const {
  const auto* n = find(dotted);
  return n && n->is_boolean() ? n->get<bool>() : fallback;
}

std::optional<int> env_sandbox_workers() {
  const char* v = std::getenv("SANDBOX_WORKERS");
  if (!v || !*v) return std::nullopt;
  char* end = nullptr;
  long n = std::strtol(v, &end, 10);
  if (end == v || n < 1) return std::nullopt;
  return static_cast<int>(n);
}

}  // namespace agentrl::config
