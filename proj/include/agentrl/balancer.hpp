#pragma once

#include <cstdint>
#include <list>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace agentrl::balancer {

struct WeightParams {
  int l_base_tokens = 16384;  // prefix-length normaliser
  int w_base = 1;             // per-request prefill overhead unit
};

// w = floor(L / L_base) + w_base
int weight(long long prefix_tokens, const WeightParams& params);

/**
 * LRU map trajectory_id -> engine_id. Lookup refreshes recency; inserting
 * beyond capacity evicts the least recently touched trajectory.
 */
class AffinityCache {
 public:
  explicit AffinityCache(size_t capacity);

  std::optional<int> lookup(const std::string& trajectory_id);
  void insert(const std::string& trajectory_id, int engine_id);
  void erase(const std::string& trajectory_id);

  size_t size() const { return map_.size(); }
  size_t capacity() const { return capacity_; }

 private:
  struct Entry {
    std::string trajectory_id;
    int engine_id;
  };
  size_t capacity_;
  std::list<Entry> lru_;  // front = most recent
  std::unordered_map<std::string, std::list<Entry>::iterator> map_;
};

/**
 * Weighted least-loaded router with sticky sessions.
 *
 * Routing picks the affinity engine when its load is within `slack` of the
 * minimum, else the least-loaded engine (lowest index on ties), then adds the
 * request's weight to that engine. `enabled=false` degrades to unweighted
 * round-robin with no affinity, the ablation baseline.
 */
class Balancer {
 public:
  struct Config {
    WeightParams params;
    int slack = 1;
    size_t affinity_capacity = 4096;
    bool enabled = true;
  };

  Balancer(int num_engines, Config cfg);

  struct Decision {
    int engine_id;
    int weight;  // amount added to the engine's load
  };

  Decision route(const std::string& trajectory_id, long long prefix_tokens);
  void release(int engine_id, int weight_amount);

  // Weight adjustment without re-routing (resume on the same engine after a
  // tool pause, with a longer prefix).
  Decision reacquire(int engine_id, long long prefix_tokens);

  long long load(int engine_id) const;
  std::vector<long long> loads() const;
  int num_engines() const { return static_cast<int>(loads_.size()); }

 private:
  int pick_engine_locked(const std::string& trajectory_id);

  Config cfg_;
  mutable std::mutex mu_;
  std::vector<long long> loads_;
  AffinityCache affinity_;
  int rr_next_ = 0;  // round-robin cursor when disabled
};

}  // namespace agentrl::balancer
