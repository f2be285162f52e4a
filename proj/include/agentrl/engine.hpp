#pragma once

#include <cstdint>
#include <functional>
#include <list>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "agentrl/plan.hpp"
#include "agentrl/sim_clock.hpp"

namespace agentrl::engine {

// First-order inference cost model. Decode is processor-shared: with k
// active requests each proceeds at min(1/decode_cost, capacity/k) tokens/s.
// Prefill of uncached prefix tokens runs through one serial lane per engine.
struct CostModel {
  double prefill_cost_per_token = 0.0005;
  double decode_cost_per_token = 0.02;
  double request_overhead = 0.2;
  double capacity_tokens_per_sec = 800.0;
};

class EngineOverloaded : public std::runtime_error {
 public:
  explicit EngineOverloaded(int engine_id)
      : std::runtime_error("engine " + std::to_string(engine_id) + " over hard limit"),
        engine_id(engine_id) {}
  int engine_id;
};

struct GenerationChunk {
  std::string text;  // rendered only when the engine's render flag is on
  int tokens_generated = 0;
  enum class Stop { ToolPause, Eos, SegmentBudget, None };
  Stop stop = Stop::None;
};

GenerationChunk::Stop to_chunk_stop(plan::StopKind k);

struct SimEngineConfig {
  long long cache_budget_tokens = 640000;  // total cached prefix tokens (LRU by trajectory)
  int max_active_requests = 512;           // hard admission limit
  bool render_text = false;                // materialize chunk.text
};

struct EngineCounters {
  long long generate_calls = 0;
  long long decoded_tokens = 0;
  long long prefilled_tokens = 0;  // uncached tokens pushed through the lane
  long long cached_tokens_served = 0;
  long long full_cache_hits = 0;  // calls with the whole prefix cached
  long long cache_evictions = 0;
};

// Observable scheduling state (W_k is maintained by the router).
struct EngineState {
  int engine_id = 0;
  long long load_weight = 0;
  int active_requests = 0;
  long long cached_tokens = 0;
  size_t cached_trajectories = 0;
};

/**
 * Simulated inference engine on the shared discrete-event clock.
 *
 * generate_async replays the request's plan slice and completes after
 *   overhead + prefill-lane wait + uncached prefill + shared-capacity decode.
 * On completion the trajectory's cache entry covers the full new prefix.
 */
class SimEngine {
 public:
  struct Request {
    std::string trajectory_id;
    long long prefix_tokens = 0;
    const plan::SyntheticPlan* plan = nullptr;
    plan::Cursor cursor;
    int max_new_tokens = 0;
    bool stop_at_tool = true;
  };
  using DoneFn = std::function<void(const GenerationChunk&, plan::Cursor)>;

  SimEngine(int id, CostModel cost, SimEngineConfig cfg, sim::EventQueue& queue);

  // Throws EngineOverloaded beyond the hard limit.
  void generate_async(Request req, DoneFn done);

  long long cache_lookup(const std::string& trajectory_id) const;
  void evict(const std::string& trajectory_id);

  int engine_id() const { return id_; }
  int active_count() const { return active_requests_; }
  const EngineCounters& counters() const { return counters_; }
  EngineState state() const;

  // Router-maintained load, mirrored here for observability.
  long long load_weight = 0;

 private:
  struct DecodeJob {
    uint64_t job_id;
    double tokens_left;
    Request req;
    plan::ReplayResult replay;
    DoneFn done;
  };

  double decode_rate() const;
  void advance_decode();
  void reschedule();
  void on_decode_tick();
  void join_decode(DecodeJob job);
  void complete(DecodeJob& job);
  void cache_store(const std::string& trajectory_id, long long tokens);
  long long cache_touch(const std::string& trajectory_id);

  int id_;
  CostModel cost_;
  SimEngineConfig cfg_;
  sim::EventQueue& queue_;

  double prefill_busy_until_ = 0.0;
  std::vector<DecodeJob> decoding_;
  double last_advance_ = 0.0;
  uint64_t epoch_ = 0;
  uint64_t next_job_id_ = 0;
  int active_requests_ = 0;

  // LRU cache: trajectory -> cached prefix tokens.
  struct CacheEntry {
    std::string trajectory_id;
    long long tokens;
  };
  std::list<CacheEntry> cache_lru_;  // front = most recent
  std::unordered_map<std::string, std::list<CacheEntry>::iterator> cache_map_;
  long long cached_total_ = 0;

  EngineCounters counters_;
};

}  // namespace agentrl::engine
