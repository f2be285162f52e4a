#include "agentrl/remote_engine.hpp"

#include <algorithm>

#include <httplib.h>
#include <json.hpp>

#include "agentrl/protocol.hpp"

namespace agentrl::engine {

namespace {

// Splits "http://host:port/path" into base and path.
void split_endpoint(const std::string& endpoint, std::string& base, std::string& path) {
  auto scheme_end = endpoint.find("://");
  size_t host_begin = scheme_end == std::string::npos ? 0 : scheme_end + 3;
  auto slash = endpoint.find('/', host_begin);
  if (slash == std::string::npos) {
    base = endpoint;
    path = "/";
  } else {
    base = endpoint.substr(0, slash);
    path = endpoint.substr(slash);
  }
}

}  // namespace

RemoteEngine::RemoteEngine(RemoteConfig cfg, const Tokenizer& tok)
    : cfg_(std::move(cfg)), tok_(tok) {
  if (cfg_.endpoint.empty()) throw std::invalid_argument("remote engine needs an endpoint");
  split_endpoint(cfg_.endpoint, host_, path_);
}

GenerationChunk RemoteEngine::remote_generate(const std::string& prompt,
                                              const std::vector<std::string>& stop_sequences,
                                              int max_tokens) {
  GenerationChunk chunk;
  if (max_tokens <= 0) {
    chunk.stop = GenerationChunk::Stop::SegmentBudget;
    return chunk;
  }

  nlohmann::json body;
  body["prompt"] = prompt;
  body["max_tokens"] = max_tokens;
  body["stop"] = stop_sequences;
  body["temperature"] = cfg_.temperature;

  httplib::Client client(host_);
  client.set_connection_timeout(std::chrono::milliseconds(static_cast<long>(cfg_.timeout_s * 1000)));
  client.set_read_timeout(std::chrono::milliseconds(static_cast<long>(cfg_.timeout_s * 1000)));
  httplib::Headers headers;
  if (!cfg_.token.empty()) headers.emplace("Authorization", "Bearer " + cfg_.token);

  auto res = client.Post(path_, headers, body.dump(), "application/json");
  if (!res) {
    const auto err = res.error();
    if (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read ||
        err == httplib::Error::Write)
      throw RemoteTimeout("remote generate timed out: " + httplib::to_string(err));
    throw TransportError("remote generate transport failure: " + httplib::to_string(err));
  }
  if (res->status < 200 || res->status >= 300) throw ServiceError(res->status, res->body);

  std::string text;
  try {
    auto j = nlohmann::json::parse(res->body);
    text = j.at("text").get<std::string>();
  } catch (const std::exception& e) {
    throw ServiceError(res->status, std::string("unparseable completion body: ") + e.what());
  }

  // Truncate at the earliest stop sequence, keeping the matched sequence.
  size_t best_pos = std::string::npos;
  const std::string* best_stop = nullptr;
  for (const auto& stop : stop_sequences) {
    if (stop.empty()) continue;
    size_t pos = text.find(stop);
    if (pos != std::string::npos && (best_pos == std::string::npos || pos < best_pos)) {
      best_pos = pos;
      best_stop = &stop;
    }
  }
  const auto& tags = protocol::default_tags();
  if (best_stop) {
    text = text.substr(0, best_pos + best_stop->size());
    if (*best_stop == tags.code_close)
      chunk.stop = GenerationChunk::Stop::ToolPause;
    else if (*best_stop == tags.eos)
      chunk.stop = GenerationChunk::Stop::Eos;
    else
      chunk.stop = GenerationChunk::Stop::None;
  } else {
    chunk.stop = GenerationChunk::Stop::None;
  }
  chunk.text = std::move(text);
  chunk.tokens_generated = tok_.count(chunk.text);
  return chunk;
}

}  // namespace agentrl::engine
