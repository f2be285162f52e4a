#pragma once

#include <cstdint>
#include <functional>
#include <queue>
#include <vector>

namespace agentrl::sim {

/**
 * Deterministic discrete-event clock. Events fire in (time, insertion order)
 * so ties never depend on container internals; all simulated components share
 * one queue, which is what makes whole runs replayable.
 */
class EventQueue {
 public:
  using Callback = std::function<void()>;

  double now() const { return now_; }

  void at(double t, Callback fn);
  void after(double delay, Callback fn) { at(now_ + delay, std::move(fn)); }

  // Runs the earliest event; false when the queue is empty.
  bool run_one();
  // Drains the queue.
  void run();

  bool empty() const { return heap_.empty(); }
  size_t pending() const { return heap_.size(); }

 private:
  struct Event {
    double t;
    uint64_t seq;
    Callback fn;
  };
  struct Later {
    bool operator()(const Event& a, const Event& b) const {
      if (a.t != b.t) return a.t > b.t;
      return a.seq > b.seq;
    }
  };

  std::priority_queue<Event, std::vector<Event>, Later> heap_;
  double now_ = 0.0;
  uint64_t next_seq_ = 0;
};

}  // namespace agentrl::sim
