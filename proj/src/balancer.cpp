#include "agentrl/balancer.hpp"

#include <algorithm>
#include <cassert>
#include <stdexcept>

namespace agentrl::balancer {

int weight(long long prefix_tokens, const WeightParams& params) {
  if (prefix_tokens < 0) throw std::invalid_argument("prefix_tokens must be >= 0");
  return static_cast<int>(prefix_tokens / params.l_base_tokens) + params.w_base;
}

AffinityCache::AffinityCache(size_t capacity) : capacity_(capacity) {
  if (capacity_ == 0) capacity_ = 1;
}

std::optional<int> AffinityCache::lookup(const std::string& trajectory_id) {
  auto it = map_.find(trajectory_id);
  if (it == map_.end()) return std::nullopt;
  lru_.splice(lru_.begin(), lru_, it->second);
  return it->second->engine_id;
}

void AffinityCache::insert(const std::string& trajectory_id, int engine_id) {
  auto it = map_.find(trajectory_id);
  if (it != map_.end()) {
    it->second->engine_id = engine_id;
    lru_.splice(lru_.begin(), lru_, it->second);
    return;
  }
  lru_.push_front(Entry{trajectory_id, engine_id});
  map_[trajectory_id] = lru_.begin();
  if (map_.size() > capacity_) {
    map_.erase(lru_.back().trajectory_id);
    lru_.pop_back();
  }
}

void AffinityCache::erase(const std::string& trajectory_id) {
  auto it = map_.find(trajectory_id);
  if (it == map_.end()) return;
  lru_.erase(it->second);
  map_.erase(it);
}

Balancer::Balancer(int num_engines, Config cfg)
    : cfg_(cfg), loads_(static_cast<size_t>(num_engines), 0), affinity_(cfg.affinity_capacity) {
  if (num_engines < 1) throw std::invalid_argument("balancer needs >= 1 engine");
}

int Balancer::pick_engine_locked(const std::string& trajectory_id) {
  if (!cfg_.enabled) {
    int e = rr_next_;
    rr_next_ = (rr_next_ + 1) % static_cast<int>(loads_.size());
    return e;
  }
  long long min_load = loads_[0];
  int argmin = 0;
  for (int k = 1; k < static_cast<int>(loads_.size()); ++k) {
    if (loads_[k] < min_load) {
      min_load = loads_[k];
      argmin = k;
    }
  }
  if (auto sticky = affinity_.lookup(trajectory_id)) {
    if (loads_[*sticky] <= min_load + cfg_.slack) return *sticky;
  }
  return argmin;
}

Balancer::Decision Balancer::route(const std::string& trajectory_id, long long prefix_tokens) {
  std::lock_guard lock(mu_);
  int engine = pick_engine_locked(trajectory_id);
  int w = cfg_.enabled ? weight(prefix_tokens, cfg_.params) : 1;
  loads_[engine] += w;
  if (cfg_.enabled) affinity_.insert(trajectory_id, engine);
  return {engine, w};
}

Balancer::Decision Balancer::reacquire(int engine_id, long long prefix_tokens) {
  std::lock_guard lock(mu_);
  int w = cfg_.enabled ? weight(prefix_tokens, cfg_.params) : 1;
  loads_[engine_id] += w;
  return {engine_id, w};
}

void Balancer::release(int engine_id, int weight_amount) {
  std::lock_guard lock(mu_);
  long long& w = loads_.at(static_cast<size_t>(engine_id));
#ifndef NDEBUG
  if (w < weight_amount) throw std::logic_error("balancer weight underflow");
#endif
  w = std::max(0LL, w - weight_amount);
}

long long Balancer::load(int engine_id) const {
  std::lock_guard lock(mu_);
  return loads_.at(static_cast<size_t>(engine_id));
}

std::vector<long long> Balancer::loads() const {
  std::lock_guard lock(mu_);
  return loads_;
}

}  // namespace agentrl::balancer
