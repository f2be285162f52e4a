#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "agentrl/plan.hpp"
#include "agentrl/reward.hpp"
#include "agentrl/rollout.hpp"
#include "agentrl/scheduler.hpp"
#include "agentrl/trainer.hpp"

namespace agentrl::harness {

// ============================================================================
// Workload
// ============================================================================

struct WorkloadSpec {
  int problems = 512;
  int group_size = 1;  // rollouts per problem (G)
  double mean_tokens = 24000.0;
  double sigma = 0.5;
  double mean_tool_calls = 27.0;
  sandbox::LatencyDistribution sandbox_latency = sandbox::LatencyDistribution::lognormal(1.2, 1.0);
  uint64_t seed = 1;

  // Plan texture.
  double code_tokens_mean = 110.0;
  double think_sigma = 0.6;
  double p_correct = 0.45;
};

struct Workload {
  std::vector<plan::SyntheticPlan> plans;
  reward::TruthSet truth;
};

// Deterministic for a seed; plan token totals track the lognormal length
// draw exactly, so sample means land on the calibration targets.
Workload generate_workload(const WorkloadSpec& spec);

// ============================================================================
// Metrics
// ============================================================================

struct StepMetrics {
  int step = 0;
  double makespan = 0.0;
  double throughput = 0.0;  // finished trajectories per virtual second
  double length_clip = 0.0;
  double tool_clip = 0.0;
  double code_ratio = 0.0;
  double mean_len = 0.0;
  double mean_tools = 0.0;
};

std::string metrics_csv_header();
std::string to_csv_row(const StepMetrics& m);
void write_metrics_csv(const std::string& path, const std::vector<StepMetrics>& rows);

// Order-insensitive digest of finished trajectory bytes; equal digests across
// scheduler configurations mean identical content multisets.
uint64_t content_hash(const protocol::Trajectory& t);
uint64_t combine_content_hashes(std::vector<uint64_t> hashes);

// ============================================================================
// Experiments
// ============================================================================

scheduler::SimParams default_sim_params(const WorkloadSpec& spec);

struct ExperimentConfig {
  std::string name;
  scheduler::Mode mode = scheduler::Mode::Async;
  int partial_n = 1;
  bool balancing = false;
};

// Appendix-style ladder: sync -> +async -> +partial(4) -> +balancing.
std::vector<ExperimentConfig> default_ladder();

struct ExperimentRow {
  ExperimentConfig config;
  double makespan = 0.0;           // virtual seconds to finish the workload
  double speedup_vs_baseline = 1.0;
  double per_100_step_cost = 0.0;  // virtual time per 100 batches of finished work
  int steps = 0;
  int finished = 0;
  uint64_t content_digest = 0;
  StepMetrics aggregate;
  scheduler::SimCounters counters;
};

// Replays the same workload under each config; every config sees identical
// plans and tool seeds, so trajectory content must match across rows.
std::vector<ExperimentRow> run_ablation(const WorkloadSpec& spec,
                                        const std::vector<ExperimentConfig>& configs,
                                        int step_batch, const scheduler::SimParams& base_params);

std::vector<ExperimentRow> run_ablation(const WorkloadSpec& spec,
                                        const std::vector<ExperimentConfig>& configs,
                                        int step_batch);

// Partial-rollout segment-count sweep (full system, varying N only).
std::vector<ExperimentRow> run_partial_sweep(const WorkloadSpec& spec, std::span<const int> ns,
                                             int step_batch);

// ============================================================================
// Training loop
// ============================================================================

struct TrainingConfig {
  int batch_size = 64;  // groups consumed per update
  int group_size = 8;   // G
  trainer::GrpoParams grpo;
  reward::RewardParams reward;
  double learning_rate = 0.05;
  int policy_features = 64;
  int policy_vocab = 32;
  int max_records_per_trajectory = 192;  // projection cap for the toy policy
  std::vector<trainer::StageTier> tiers = trainer::default_tiers();
  std::string out_dir;  // metrics.csv + experience.jsonl when set
};

struct TrainingStep {
  StepMetrics metrics;
  BudgetSet budgets;        // in effect during the step
  int trained_groups = 0;   // groups consumed by the update
  int filtered_groups = 0;  // uniform groups removed
  bool short_batch = false;
  double objective = 0.0;
  double mean_reward = 0.0;
};

struct TrainingResult {
  std::vector<TrainingStep> steps;
  int total_finished = 0;
  BudgetSet final_budgets;
};

TrainingResult training_loop(const WorkloadSpec& spec, int steps, const TrainingConfig& cfg,
                             scheduler::SimParams params);

// Projects a trajectory onto the toy policy's (feature, token) space with
// old log-probs from `policy`; masks follow the interpreter segments.
std::vector<trainer::TokenRecord> project_trajectory(const protocol::Trajectory& t,
                                                     const trainer::ToyPolicy& policy, int cap);

}  // namespace agentrl::harness
