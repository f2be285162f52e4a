#pragma once

#include <deque>
#include <stdexcept>
#include <string>
#include <vector>

#include "agentrl/reward.hpp"
#include "agentrl/rng.hpp"
#include "agentrl/scheduler.hpp"

namespace agentrl::rollout {

class MismatchedProblem : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/**
 * Task pools for partial rollouts: a queue of fresh problems, the suspended
 * requests carrying their partial trajectories, and the experience buffer of
 * finished trajectories. A task is always in exactly one place (or in
 * flight inside iteration()).
 */
struct TaskPools {
  std::deque<const plan::SyntheticPlan*> new_pool;        // P
  std::deque<scheduler::RolloutRequest> unfinished;       // U (all Suspended)
  std::vector<scheduler::RolloutRequest> buffer;          // B (all Finished)

  size_t admitted = 0;  // tasks ever taken from P
  size_t failed = 0;    // dropped with a logged reason

  static TaskPools from_plans(const std::vector<plan::SyntheticPlan>& plans);
  bool drained() const { return new_pool.empty() && unfinished.empty(); }
};

struct IterationResult {
  double makespan = 0.0;
  int processed = 0;
  int finished = 0;
  int suspended = 0;
  int failed = 0;
};

// One training iteration: sample up to sample_size tasks (unfinished first),
// generate one segment each via the scheduler, then route every outcome to
// the buffer or back to the unfinished pool. Budgets come from `budgets`
// (re-read every iteration so stage upgrades apply to suspended tasks too).
IterationResult iteration(TaskPools& pools, int sample_size, scheduler::SimContext& ctx,
                          const BudgetSet& budgets);

// tau = tau(1) (+) tau(2) (+) ... ; fragments cut mid-segment glue back
// together byte-identically. Throws MismatchedProblem on mixed problems.
protocol::Trajectory concat_segments(const std::vector<scheduler::TrajectoryPiece>& parts);

// ============================================================================
// Group filtering
// ============================================================================

struct GroupBatch {
  std::string problem_id;
  std::vector<protocol::Trajectory> trajectories;  // G rollouts
  std::vector<reward::RewardBreakdown> rewards;
  std::vector<double> advantages;
  bool degenerate = false;
};

// True when every R_acc in the group is identical (all solved or all failed).
bool uniform_group(const GroupBatch& g);

struct FilterResult {
  std::vector<GroupBatch> groups;
  bool short_batch = false;  // pool exhausted before reaching target
  int removed = 0;
  int backfilled = 0;
};

// Drops uniform groups, then backfills random picks from `pool` (consumed)
// until `target` groups or exhaustion.
FilterResult filter_and_backfill(std::vector<GroupBatch> groups, std::vector<GroupBatch>& pool,
                                 int target, Rng& rng);

}  // namespace agentrl::rollout
