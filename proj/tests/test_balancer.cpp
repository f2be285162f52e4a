#include <doctest.h>

#include <algorithm>
#include <map>
#include <vector>

#include "agentrl/balancer.hpp"
#include "agentrl/rng.hpp"

using namespace agentrl;
using namespace agentrl::balancer;

TEST_CASE("weight formula") {
  WeightParams p;  // L_base 16384, w_base 1
  CHECK(weight(0, p) == 1);
  CHECK(weight(40000, p) == 3);   // floor(2.44) + 1
  CHECK(weight(16384, p) == 2);   // boundary
  CHECK(weight(16383, p) == 1);
}

TEST_CASE("weight monotone in prefix length") {
  WeightParams p;
  int prev = weight(0, p);
  for (long long l = 0; l < 120000; l += 997) {
    int w = weight(l, p);
    CHECK(w >= prev);
    prev = w;
  }
}

TEST_CASE("affinity cache: lru eviction and recency refresh") {
  AffinityCache cache(2);
  cache.insert("a", 0);
  cache.insert("b", 1);
  CHECK(*cache.lookup("a") == 0);  // refreshes a
  cache.insert("c", 2);            // evicts b, the least recently touched
  CHECK_FALSE(cache.lookup("b").has_value());
  CHECK(*cache.lookup("a") == 0);
  CHECK(*cache.lookup("c") == 2);
  CHECK(cache.size() == 2);
}

namespace {

Balancer::Config basic_config() {
  Balancer::Config cfg;
  cfg.slack = 1;
  cfg.affinity_capacity = 64;
  cfg.enabled = true;
  return cfg;
}

}  // namespace

TEST_CASE("route: plain argmin without affinity") {
  Balancer b(3, basic_config());
  // Prime loads to [5, 2, 7] with direct reacquires.
  b.reacquire(0, 0);  // +1 each; repeat to reach the target loads
  for (int i = 0; i < 4; ++i) b.reacquire(0, 0);
  b.reacquire(1, 0);
  b.reacquire(1, 0);
  for (int i = 0; i < 7; ++i) b.reacquire(2, 0);
  CHECK(b.loads() == std::vector<long long>{5, 2, 7});

  auto d = b.route("fresh", 0);
  CHECK(d.engine_id == 1);
  CHECK(b.load(1) == 3);
}

TEST_CASE("route: affinity within slack wins over argmin") {
  // Rule-trace oracle for loads [2,2,3], affinity on engine 2, slack 1:
  // min load 2, sticky load 3, 3 <= 2+1 -> sticky engine 2 wins.
  Balancer b(3, basic_config());
  while (b.load(0) < 1) b.reacquire(0, 0);
  while (b.load(1) < 1) b.reacquire(1, 0);
  auto establish = b.route("traj", 0);  // argmin: engine 2 at load 0
  CHECK(establish.engine_id == 2);
  b.release(2, establish.weight);

  while (b.load(0) < 2) b.reacquire(0, 0);
  while (b.load(1) < 2) b.reacquire(1, 0);
  while (b.load(2) < 3) b.reacquire(2, 0);
  auto sticky = b.route("traj", 0);
  CHECK(sticky.engine_id == 2);
  b.release(2, sticky.weight);

  // Beyond slack the argmin takes over: loads [2,2,5], 5 > 2+1.
  while (b.load(2) < 5) b.reacquire(2, 0);
  auto moved = b.route("traj", 0);
  CHECK(moved.engine_id == 0);
}

TEST_CASE("route: lowest index wins ties") {
  Balancer b(3, basic_config());
  for (int e = 0; e < 3; ++e)
    while (b.load(e) < 4) b.reacquire(e, 0);
  auto d = b.route("x", 0);
  CHECK(d.engine_id == 0);
}

TEST_CASE("release: add then release restores the load") {
  Balancer b(2, basic_config());
  auto d = b.route("t", 40000);
  CHECK(d.weight == 3);
  CHECK(b.load(d.engine_id) == 3);
  b.release(d.engine_id, d.weight);
  CHECK(b.load(d.engine_id) == 0);
}

#ifndef NDEBUG
TEST_CASE("release: underflow asserts in debug builds") {
  Balancer b(2, basic_config());
  CHECK_THROWS_AS(b.release(0, 1), std::logic_error);
}
#endif

TEST_CASE("disabled balancer degrades to round-robin, weight one") {
  Balancer::Config cfg = basic_config();
  cfg.enabled = false;
  Balancer b(3, cfg);
  CHECK(b.route("a", 50000).engine_id == 0);
  CHECK(b.route("b", 50000).engine_id == 1);
  CHECK(b.route("c", 50000).engine_id == 2);
  CHECK(b.route("a", 50000).engine_id == 0);
  CHECK(b.loads() == std::vector<long long>{2, 1, 1});
}

TEST_CASE("randomized trace: weight conservation and argmin optimality") {
  // Replay-sum oracle: an independent ledger tracks every add/release; the
  // balancer's loads must match at every quiescent point.
  const int engines = 7;
  Balancer b(engines, basic_config());
  Rng rng(20240817);

  struct Resident {
    int engine;
    int weight;
  };
  std::map<int, Resident> residents;  // request id -> placement
  std::vector<long long> ledger(engines, 0);
  int next_id = 0;

  for (int op = 0; op < 10000; ++op) {
    const bool do_route = residents.empty() || rng.next_below(100) < 60;
    if (do_route) {
      const int id = next_id++;
      const long long prefix = static_cast<long long>(rng.next_below(90000));
      const std::string traj = "t" + std::to_string(rng.next_below(50));
      const bool fresh = rng.next_below(2) == 0;
      const std::string key = fresh ? "fresh" + std::to_string(id) : traj;

      long long min_load = *std::min_element(ledger.begin(), ledger.end());
      auto d = b.route(key, prefix);
      if (fresh) {
        // Argmin optimality: a no-affinity request lands on a minimal-load
        // engine at decision time.
        CHECK(ledger[static_cast<size_t>(d.engine_id)] == min_load);
      }
      residents[id] = {d.engine_id, d.weight};
      ledger[static_cast<size_t>(d.engine_id)] += d.weight;
    } else {
      auto it = residents.begin();
      std::advance(it, static_cast<long>(rng.next_below(residents.size())));
      b.release(it->second.engine, it->second.weight);
      ledger[static_cast<size_t>(it->second.engine)] -= it->second.weight;
      residents.erase(it);
    }
    // Quiescent check after every operation.
    CHECK(b.loads() == ledger);
  }
}
