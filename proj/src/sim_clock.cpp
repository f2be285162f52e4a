#include "agentrl/sim_clock.hpp"

#include <stdexcept>
#include <utility>

namespace agentrl::sim {

void EventQueue::at(double t, Callback fn) {
  if (t < now_) t = now_;  // events cannot land in the past
  heap_.push(Event{t, next_seq_++, std::move(fn)});
}

bool EventQueue::run_one() {
  if (heap_.empty()) return false;
  // priority_queue::top is const; the callback is moved out via const_cast,
  // which is safe because pop() follows immediately.
  Event ev = std::move(const_cast<Event&>(heap_.top()));
  heap_.pop();
  now_ = ev.t;
  ev.fn();
  return true;
}

void EventQueue::run() {
  while (run_one()) {
  }
}

}  // namespace agentrl::sim
