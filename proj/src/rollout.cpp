#include "agentrl/rollout.hpp"

#include <algorithm>

namespace agentrl::rollout {

using scheduler::RequestState;
using scheduler::RolloutRequest;

TaskPools TaskPools::from_plans(const std::vector<plan::SyntheticPlan>& plans) {
  TaskPools pools;
  for (const auto& p : plans) pools.new_pool.push_back(&p);
  return pools;
}

IterationResult iteration(TaskPools& pools, int sample_size, scheduler::SimContext& ctx,
                          const BudgetSet& budgets) {
  if (sample_size < 1) throw std::invalid_argument("sample_size must be >= 1");

  // Unfinished tasks take strict priority; new tasks fill the remaining
  // slots. Bounds the staleness of long trajectories.
  std::vector<RolloutRequest> working;
  working.reserve(static_cast<size_t>(sample_size));
  while (!pools.unfinished.empty() && static_cast<int>(working.size()) < sample_size) {
    working.push_back(std::move(pools.unfinished.front()));
    pools.unfinished.pop_front();
  }
  while (!pools.new_pool.empty() && static_cast<int>(working.size()) < sample_size) {
    const plan::SyntheticPlan* p = pools.new_pool.front();
    pools.new_pool.pop_front();
    working.push_back(scheduler::make_request(*p, budgets));
    working.back().pieces.reserve(4);
    ++pools.admitted;
  }

  IterationResult res;
  res.processed = static_cast<int>(working.size());
  if (working.empty()) return res;

  std::vector<RolloutRequest*> ptrs;
  ptrs.reserve(working.size());
  for (auto& r : working) {
    r.budgets = budgets;  // stage upgrades reach suspended tasks on resume
    ptrs.push_back(&r);
  }
  auto run = ctx.run(std::move(ptrs));
  res.makespan = run.makespan;

  for (auto& r : working) {
    switch (r.state) {
      case RequestState::Finished:
        ++res.finished;
        pools.buffer.push_back(std::move(r));
        break;
      case RequestState::Suspended:
        ++res.suspended;
        pools.unfinished.push_back(std::move(r));
        break;
      case RequestState::Failed:
        ++res.failed;
        ++pools.failed;
        break;
      default:
        throw std::logic_error("iteration: non-terminal request state");
    }
  }
  return res;
}

protocol::Trajectory concat_segments(const std::vector<scheduler::TrajectoryPiece>& parts) {
  protocol::Trajectory out;
  if (parts.empty()) return out;
  out.problem_id = parts.front().problem_id;

  for (size_t i = 0; i < parts.size(); ++i) {
    const auto& piece = parts[i];
    if (piece.problem_id != out.problem_id)
      throw MismatchedProblem("concat_segments: mixed problem ids");
    size_t s = 0;
    if (piece.continues_previous && !piece.segments.empty()) {
      if (out.segments.empty())
        throw MismatchedProblem("concat_segments: continuation with no previous piece");
      out.segments.back().text += piece.segments[0].text;
      out.segments.back().token_count += piece.segments[0].token_count;
      s = 1;
    }
    for (; s < piece.segments.size(); ++s) out.segments.push_back(piece.segments[s]);
  }
  out.finished = parts.back().finished;
  out.finish_reason = parts.back().finish_reason;
  return out;
}

bool uniform_group(const GroupBatch& g) {
  if (g.rewards.empty()) return true;
  const int first = g.rewards.front().r_acc;
  return std::all_of(g.rewards.begin(), g.rewards.end(),
                     [first](const reward::RewardBreakdown& r) { return r.r_acc == first; });
}

FilterResult filter_and_backfill(std::vector<GroupBatch> groups, std::vector<GroupBatch>& pool,
                                 int target, Rng& rng) {
  FilterResult out;
  for (auto& g : groups) {
    if (uniform_group(g)) {
      ++out.removed;
    } else {
      out.groups.push_back(std::move(g));
    }
  }
  while (static_cast<int>(out.groups.size()) < target && !pool.empty()) {
    const size_t pick = static_cast<size_t>(rng.next_below(pool.size()));
    out.groups.push_back(std::move(pool[pick]));
    pool.erase(pool.begin() + static_cast<long>(pick));
    ++out.backfilled;
  }
  out.short_batch = static_cast<int>(out.groups.size()) < target;
  return out;
}

}  // namespace agentrl::rollout
