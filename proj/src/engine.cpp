#include "agentrl/engine.hpp"

#include <algorithm>
#include <cassert>
#include <memory>

namespace agentrl::engine {

GenerationChunk::Stop to_chunk_stop(plan::StopKind k) {
  switch (k) {
    case plan::StopKind::ToolPause: return GenerationChunk::Stop::ToolPause;
    case plan::StopKind::Eos: return GenerationChunk::Stop::Eos;
    case plan::StopKind::SegmentBudget: return GenerationChunk::Stop::SegmentBudget;
  }
  return GenerationChunk::Stop::None;
}

SimEngine::SimEngine(int id, CostModel cost, SimEngineConfig cfg, sim::EventQueue& queue)
    : id_(id), cost_(cost), cfg_(cfg), queue_(queue) {}

double SimEngine::decode_rate() const {
  const double n = static_cast<double>(decoding_.size());
  const double per_request_cap =
      cost_.decode_cost_per_token > 0 ? 1.0 / cost_.decode_cost_per_token : 1e18;
  return std::min(per_request_cap, cost_.capacity_tokens_per_sec / n);
}

void SimEngine::advance_decode() {
  const double now = queue_.now();
  if (!decoding_.empty()) {
    const double done = (now - last_advance_) * decode_rate();
    if (done > 0) {
      for (auto& job : decoding_) job.tokens_left -= done;
    }
  }
  last_advance_ = now;
}

void SimEngine::reschedule() {
  ++epoch_;
  if (decoding_.empty()) return;
  double min_left = decoding_[0].tokens_left;
  for (const auto& job : decoding_) min_left = std::min(min_left, job.tokens_left);
  min_left = std::max(0.0, min_left);
  const double eta = min_left / decode_rate();
  const uint64_t guard = epoch_;
  queue_.after(eta, [this, guard] {
    if (guard != epoch_) return;  // superseded by a membership change
    on_decode_tick();
  });
}

void SimEngine::on_decode_tick() {
  advance_decode();
  constexpr double eps = 1e-6;
  std::vector<DecodeJob> finished;
  for (size_t i = 0; i < decoding_.size();) {
    if (decoding_[i].tokens_left <= eps) {
      finished.push_back(std::move(decoding_[i]));
      decoding_[i] = std::move(decoding_.back());
      decoding_.pop_back();
    } else {
      ++i;
    }
  }
  reschedule();
  // Submission order keeps completions deterministic.
  std::sort(finished.begin(), finished.end(),
            [](const DecodeJob& a, const DecodeJob& b) { return a.job_id < b.job_id; });
  for (auto& job : finished) complete(job);
}

void SimEngine::complete(DecodeJob& job) {
  cache_store(job.req.trajectory_id, job.req.prefix_tokens + job.replay.tokens);
  counters_.decoded_tokens += job.replay.tokens;
  --active_requests_;

  GenerationChunk chunk;
  chunk.tokens_generated = job.replay.tokens;
  chunk.stop = to_chunk_stop(job.replay.stop);
  if (cfg_.render_text && job.req.plan)
    chunk.text = plan::render_slice(*job.req.plan, job.req.cursor, job.replay.tokens);
  job.done(chunk, job.replay.end);
}

void SimEngine::join_decode(DecodeJob job) {
  if (job.replay.tokens <= 0) {
    advance_decode();
    reschedule();
    complete(job);
    return;
  }
  advance_decode();
  job.tokens_left = static_cast<double>(job.replay.tokens);
  decoding_.push_back(std::move(job));
  reschedule();
}

void SimEngine::generate_async(Request req, DoneFn done) {
  if (active_requests_ >= cfg_.max_active_requests) throw EngineOverloaded(id_);
  if (!req.plan) throw std::invalid_argument("simulated engine needs a plan");
  ++active_requests_;
  ++counters_.generate_calls;

  const long long cached = std::min(cache_touch(req.trajectory_id), req.prefix_tokens);
  const long long uncached = req.prefix_tokens - cached;
  counters_.cached_tokens_served += cached;
  counters_.prefilled_tokens += uncached;
  if (uncached == 0) ++counters_.full_cache_hits;

  DecodeJob job;
  job.job_id = next_job_id_++;
  job.replay = plan::replay(*req.plan, req.cursor, req.max_new_tokens, req.stop_at_tool);
  job.req = std::move(req);
  job.done = std::move(done);

  const double now = queue_.now();
  double ready_at = now + cost_.request_overhead;
  if (uncached > 0) {
    const double lane_start = std::max(ready_at, prefill_busy_until_);
    prefill_busy_until_ = lane_start + static_cast<double>(uncached) * cost_.prefill_cost_per_token;
    ready_at = prefill_busy_until_;
  }
  queue_.at(ready_at, [this, j = std::make_shared<DecodeJob>(std::move(job))]() mutable {
    join_decode(std::move(*j));
  });
}

long long SimEngine::cache_lookup(const std::string& trajectory_id) const {
  auto it = cache_map_.find(trajectory_id);
  return it == cache_map_.end() ? 0 : it->second->tokens;
}

long long SimEngine::cache_touch(const std::string& trajectory_id) {
  auto it = cache_map_.find(trajectory_id);
  if (it == cache_map_.end()) return 0;
  cache_lru_.splice(cache_lru_.begin(), cache_lru_, it->second);
  return it->second->tokens;
}

void SimEngine::cache_store(const std::string& trajectory_id, long long tokens) {
  auto it = cache_map_.find(trajectory_id);
  if (it != cache_map_.end()) {
    cached_total_ += tokens - it->second->tokens;
    it->second->tokens = tokens;
    cache_lru_.splice(cache_lru_.begin(), cache_lru_, it->second);
  } else {
    cache_lru_.push_front(CacheEntry{trajectory_id, tokens});
    cache_map_[trajectory_id] = cache_lru_.begin();
    cached_total_ += tokens;
  }
  while (cached_total_ > cfg_.cache_budget_tokens && !cache_lru_.empty()) {
    const CacheEntry& victim = cache_lru_.back();
    cached_total_ -= victim.tokens;
    cache_map_.erase(victim.trajectory_id);
    cache_lru_.pop_back();
    ++counters_.cache_evictions;
  }
}

void SimEngine::evict(const std::string& trajectory_id) {
  auto it = cache_map_.find(trajectory_id);
  if (it == cache_map_.end()) return;
  cached_total_ -= it->second->tokens;
  cache_lru_.erase(it->second);
  cache_map_.erase(it);
}

EngineState SimEngine::state() const {
  return EngineState{id_, load_weight, active_requests_, cached_total_, cache_map_.size()};
}

}  // namespace agentrl::engine
