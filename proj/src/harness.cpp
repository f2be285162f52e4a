#include "agentrl/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>

#include <json.hpp>

namespace agentrl::harness {

using protocol::SegmentKind;
using protocol::Trajectory;
using scheduler::RolloutRequest;

// ============================================================================
// Workload
// ============================================================================

namespace {

std::string problem_name(int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "p%05d", index);
  return buf;
}

int interp_segment_tokens(const plan::SyntheticPlan& p, int call_index, int cap) {
  // Mirrors Pool::simulated_execute so plan totals equal rollout totals.
  int tokens = 8 + static_cast<int>(splitmix64(p.tool_seed(call_index) ^ 0x6f7574ULL) % 48);
  return std::min(tokens, cap) + 2;
}

}  // namespace

Workload generate_workload(const WorkloadSpec& spec) {
  if (spec.problems < 1 || spec.group_size < 1)
    throw std::invalid_argument("workload needs problems >= 1 and group_size >= 1");

  Workload w;
  w.plans.reserve(static_cast<size_t>(spec.problems) * spec.group_size);

  for (int i = 0; i < spec.problems; ++i) {
    const std::string pid = problem_name(i);
    const int truth_value = 100 + (i * 37) % 900;
    w.truth[pid] = std::to_string(truth_value);

    for (int g = 0; g < spec.group_size; ++g) {
      plan::SyntheticPlan p;
      p.problem_id = pid;
      p.rollout_id = pid + "#" + std::to_string(g);
      p.seed = splitmix64(spec.seed ^ splitmix64((static_cast<uint64_t>(i) << 20) + g + 1));
      Rng rng(p.seed);

      const double target = std::clamp(rng.lognormal_mean(spec.mean_tokens, spec.sigma), 600.0,
                                       400000.0);
      int n_tools = rng.poisson(spec.mean_tool_calls);
      p.answer_correct = rng.next_double() < spec.p_correct;
      p.boxed_answer = std::to_string(p.answer_correct ? truth_value : truth_value + 1);

      // Fixed costs: code blocks, their tags, and the interpreter feedback
      // the environment will append (token counts are seed-determined).
      std::vector<int> code_tokens(static_cast<size_t>(n_tools));
      long long fixed = 0;
      for (int j = 0; j < n_tools; ++j) {
        code_tokens[static_cast<size_t>(j)] = std::clamp(
            static_cast<int>(std::lround(rng.lognormal_mean(spec.code_tokens_mean, 0.4))), 12, 600);
        fixed += code_tokens[static_cast<size_t>(j)] + 2 + interp_segment_tokens(p, j, 1024);
      }
      // Keep enough room for the think segments around each block.
      while (n_tools > 0 && static_cast<double>(fixed) + 14.0 * (n_tools + 1) > target) {
        fixed -= code_tokens[static_cast<size_t>(n_tools - 1)] + 2 +
                 interp_segment_tokens(p, n_tools - 1, 1024);
        --n_tools;
      }
      code_tokens.resize(static_cast<size_t>(n_tools));

      // Think budget split by lognormal weights; the final think absorbs the
      // rounding residue so the plan total equals the target draw.
      const long long think_total =
          std::max<long long>(static_cast<long long>(target) - fixed - 2LL * (n_tools + 1), 0) ;
      std::vector<double> weights(static_cast<size_t>(n_tools) + 1);
      double wsum = 0.0;
      for (auto& x : weights) {
        x = rng.lognormal_mean(1.0, spec.think_sigma);
        wsum += x;
      }
      long long assigned = 0;
      p.steps.clear();
      for (int j = 0; j < n_tools; ++j) {
        int tk = static_cast<int>(std::max<long long>(
            4, std::llround(static_cast<double>(think_total) * weights[static_cast<size_t>(j)] /
                            wsum)));
        assigned += tk;
        p.steps.push_back({SegmentKind::Think, tk});
        p.steps.push_back({SegmentKind::Code, code_tokens[static_cast<size_t>(j)]});
      }
      const int final_think =
          static_cast<int>(std::max<long long>(10, think_total - assigned));
      p.steps.push_back({SegmentKind::Think, final_think});

      w.plans.push_back(std::move(p));
    }
  }
  return w;
}

// ============================================================================
// Metrics
// ============================================================================

std::string metrics_csv_header() {
  return "step,makespan,throughput,length_clip,tool_clip,code_ratio,mean_len,mean_tools";
}

std::string to_csv_row(const StepMetrics& m) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%d,%.6f,%.6f,%.6f,%.6f,%.6f,%.3f,%.3f", m.step, m.makespan,
                m.throughput, m.length_clip, m.tool_clip, m.code_ratio, m.mean_len, m.mean_tools);
  return buf;
}

void write_metrics_csv(const std::string& path, const std::vector<StepMetrics>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open metrics csv: " + path);
  out << metrics_csv_header() << "\n";
  for (const auto& r : rows) out << to_csv_row(r) << "\n";
}

uint64_t content_hash(const Trajectory& t) {
  uint64_t h = hash_str(protocol::serialize(t));
  h = splitmix64(h ^ hash_str(t.problem_id));
  h = splitmix64(h ^ static_cast<uint64_t>(t.finish_reason));
  return h;
}

uint64_t combine_content_hashes(std::vector<uint64_t> hashes) {
  std::sort(hashes.begin(), hashes.end());
  uint64_t h = 0x9e3779b97f4a7c15ULL ^ hashes.size();
  for (uint64_t x : hashes) h = splitmix64(h ^ x);
  return h;
}

namespace {

struct FinishedStats {
  long long count = 0;
  long long length_clipped = 0;
  long long tool_clipped = 0;
  long long with_code = 0;
  long long total_tokens = 0;
  long long total_tools = 0;
  std::vector<uint64_t> hashes;

  void add(const RolloutRequest& r, bool keep_hash) {
    ++count;
    if (r.trajectory.finish_reason == protocol::FinishReason::LengthLimit) ++length_clipped;
    if (r.trajectory.finish_reason == protocol::FinishReason::ToolLimit) ++tool_clipped;
    if (protocol::count_code_segments(r.trajectory) > 0) ++with_code;
    total_tokens += r.prefix_tokens;
    total_tools += r.tool_calls;
    if (keep_hash) hashes.push_back(content_hash(r.trajectory));
  }

  StepMetrics to_metrics(int step, double makespan) const {
    StepMetrics m;
    m.step = step;
    m.makespan = makespan;
    const double n = static_cast<double>(std::max<long long>(count, 1));
    m.throughput = makespan > 0 ? static_cast<double>(count) / makespan : 0.0;
    m.length_clip = static_cast<double>(length_clipped) / n;
    m.tool_clip = static_cast<double>(tool_clipped) / n;
    m.code_ratio = static_cast<double>(with_code) / n;
    m.mean_len = static_cast<double>(total_tokens) / n;
    m.mean_tools = static_cast<double>(total_tools) / n;
    return m;
  }
};

}  // namespace

// ============================================================================
// Experiments
// ============================================================================

scheduler::SimParams default_sim_params(const WorkloadSpec& spec) {
  scheduler::SimParams p;
  p.engines = 8;
  p.cost.prefill_cost_per_token = 0.0005;
  p.cost.decode_cost_per_token = 0.02;
  p.cost.request_overhead = 0.2;
  p.cost.capacity_tokens_per_sec = 800.0;
  p.engine_cfg.cache_budget_tokens = 640000;
  p.engine_cfg.max_active_requests = 4096;
  p.balancer_cfg.params.l_base_tokens = 16384;
  p.balancer_cfg.params.w_base = 1;
  p.balancer_cfg.slack = 1;
  p.balancer_cfg.affinity_capacity = 8192;
  p.balancer_cfg.enabled = true;
  p.tool_cfg.workers = 64;
  p.tool_cfg.default_timeout_s = 20.0;
  p.tool_cfg.default_output_cap_tokens = 1024;
  p.tool_cfg.latency = spec.sandbox_latency;
  p.mode = scheduler::Mode::Async;
  return p;
}

std::vector<ExperimentConfig> default_ladder() {
  return {
      {"sync", scheduler::Mode::Serial, 1, false},
      {"async", scheduler::Mode::Async, 1, false},
      {"async+partial4", scheduler::Mode::Async, 4, false},
      {"async+partial4+balancing", scheduler::Mode::Async, 4, true},
  };
}

namespace {

ExperimentRow run_one_config(const Workload& workload, const ExperimentConfig& cfg, int step_batch,
                             scheduler::SimParams params) {
  params.mode = cfg.mode;
  params.balancer_cfg.enabled = cfg.balancing;

  const int n = std::max(1, cfg.partial_n);
  const BudgetSet budgets = BudgetSet::with_partial_n(49152, 48, n);
  const int sample_size = step_batch * n;

  scheduler::SimContext ctx(params);
  rollout::TaskPools pools = rollout::TaskPools::from_plans(workload.plans);

  ExperimentRow row;
  row.config = cfg;
  FinishedStats stats;
  while (!pools.drained()) {
    auto it = rollout::iteration(pools, sample_size, ctx, budgets);
    if (it.processed == 0) break;
    row.makespan += it.makespan;
    ++row.steps;
    for (const auto& r : pools.buffer) stats.add(r, /*keep_hash=*/true);
    pools.buffer.clear();  // keep peak memory flat on large workloads
  }

  row.finished = static_cast<int>(stats.count);
  row.aggregate = stats.to_metrics(row.steps, row.makespan);
  row.content_digest = combine_content_hashes(std::move(stats.hashes));
  row.counters = ctx.counters();
  if (stats.count > 0)
    row.per_100_step_cost = row.makespan * 100.0 * step_batch / static_cast<double>(stats.count);
  return row;
}

}  // namespace

std::vector<ExperimentRow> run_ablation(const WorkloadSpec& spec,
                                        const std::vector<ExperimentConfig>& configs,
                                        int step_batch, const scheduler::SimParams& base_params) {
  if (configs.empty()) throw std::invalid_argument("run_ablation needs >= 1 config");
  const Workload workload = generate_workload(spec);
  std::vector<ExperimentRow> rows;
  rows.reserve(configs.size());
  for (const auto& cfg : configs)
    rows.push_back(run_one_config(workload, cfg, step_batch, base_params));
  for (auto& row : rows)
    row.speedup_vs_baseline = row.makespan > 0 ? rows.front().makespan / row.makespan : 0.0;
  return rows;
}

std::vector<ExperimentRow> run_ablation(const WorkloadSpec& spec,
                                        const std::vector<ExperimentConfig>& configs,
                                        int step_batch) {
  return run_ablation(spec, configs, step_batch, default_sim_params(spec));
}

std::vector<ExperimentRow> run_partial_sweep(const WorkloadSpec& spec, std::span<const int> ns,
                                             int step_batch) {
  std::vector<ExperimentConfig> configs;
  configs.reserve(ns.size());
  for (int n : ns)
    configs.push_back({"partial" + std::to_string(n), scheduler::Mode::Async, n, true});
  return run_ablation(spec, configs, step_batch);
}

// ============================================================================
// Training loop
// ============================================================================

std::vector<trainer::TokenRecord> project_trajectory(const Trajectory& t,
                                                     const trainer::ToyPolicy& policy, int cap) {
  std::vector<trainer::TokenRecord> records;
  records.reserve(static_cast<size_t>(std::min<long long>(cap, protocol::total_tokens(t))));
  int emitted = 0;
  for (size_t s = 0; s < t.segments.size() && emitted < cap; ++s) {
    const auto& seg = t.segments[s];
    const uint64_t seg_hash = hash_str(seg.text, 0x5eed ^ s);
    const bool masked = seg.kind == SegmentKind::Interpreter;
    for (int j = 0; j < seg.token_count && emitted < cap; ++j, ++emitted) {
      trainer::TokenRecord rec;
      const uint64_t mix = splitmix64(seg_hash ^ (static_cast<uint64_t>(j) * 0x9e3779b9ULL));
      rec.feature = static_cast<int>((mix >> 7) % static_cast<uint64_t>(policy.features()));
      rec.token = static_cast<int>(mix % static_cast<uint64_t>(policy.vocab()));
      rec.masked = masked;
      rec.old_log_prob = policy.log_prob(rec.feature, rec.token);
      records.push_back(rec);
    }
  }
  return records;
}

TrainingResult training_loop(const WorkloadSpec& spec, int steps, const TrainingConfig& cfg,
                             scheduler::SimParams params) {
  if (steps < 1) throw std::invalid_argument("training_loop needs steps >= 1");
  WorkloadSpec wspec = spec;
  wspec.group_size = cfg.group_size;
  const Workload workload = generate_workload(wspec);

  scheduler::SimContext ctx(params);
  rollout::TaskPools pools = rollout::TaskPools::from_plans(workload.plans);
  trainer::MultiStageController controller(cfg.tiers);
  trainer::ToyPolicy policy =
      trainer::ToyPolicy::random(cfg.policy_features, cfg.policy_vocab, spec.seed ^ 0x70111c7ULL);
  Rng backfill_rng(splitmix64(spec.seed ^ 0xbacf111ULL));

  std::map<std::string, rollout::GroupBatch> staging;
  std::vector<rollout::GroupBatch> spare_pool;

  TrainingResult result;
  std::ofstream experience;
  if (!cfg.out_dir.empty()) {
    std::filesystem::create_directories(cfg.out_dir);
    experience.open(cfg.out_dir + "/experience.jsonl");
  }

  for (int step = 1; step <= steps; ++step) {
    const BudgetSet budgets = controller.current();
    const int sample_size = cfg.batch_size * cfg.group_size * std::max(1, controller.partial_n());

    auto it = rollout::iteration(pools, sample_size, ctx, budgets);
    if (it.processed == 0) break;

    TrainingStep ts;
    ts.budgets = budgets;

    // Rewards + group assembly.
    FinishedStats stats;
    double reward_sum = 0.0;
    for (auto& req : pools.buffer) {
      stats.add(req, /*keep_hash=*/false);
      const auto truth_it = workload.truth.find(req.problem_id);
      const std::string truth = truth_it == workload.truth.end() ? "" : truth_it->second;
      auto breakdown = reward::total_reward(req.trajectory, truth, cfg.reward);
      reward_sum += breakdown.r_total;

      if (experience.is_open()) {
        nlohmann::ordered_json j = nlohmann::ordered_json::parse(
            protocol::to_jsonl_line(req.trajectory));
        j["r_acc"] = breakdown.r_acc;
        j["r_tool"] = breakdown.r_tool;
        j["r_total"] = breakdown.r_total;
        j["n_code"] = breakdown.n_code;
        experience << j.dump() << "\n";
      }

      auto& group = staging[req.problem_id];
      group.problem_id = req.problem_id;
      group.trajectories.push_back(std::move(req.trajectory));
      group.rewards.push_back(breakdown);
    }
    pools.buffer.clear();

    std::vector<rollout::GroupBatch> complete;
    for (auto sit = staging.begin(); sit != staging.end();) {
      if (static_cast<int>(sit->second.trajectories.size()) >= cfg.group_size) {
        complete.push_back(std::move(sit->second));
        sit = staging.erase(sit);
      } else {
        ++sit;
      }
    }

    auto filtered =
        rollout::filter_and_backfill(std::move(complete), spare_pool, cfg.batch_size, backfill_rng);
    ts.filtered_groups = filtered.removed;
    ts.short_batch = filtered.short_batch;
    while (static_cast<int>(filtered.groups.size()) > cfg.batch_size) {
      spare_pool.push_back(std::move(filtered.groups.back()));
      filtered.groups.pop_back();
    }

    // Policy update: group advantages, clipped masked objective, ascent.
    double objective_sum = 0.0;
    for (auto& group : filtered.groups) {
      std::vector<double> rewards;
      rewards.reserve(group.rewards.size());
      for (const auto& r : group.rewards) rewards.push_back(r.r_total);
      auto adv = trainer::group_advantages(rewards, cfg.grpo.delta);
      group.advantages = adv.values;
      group.degenerate = adv.degenerate;

      trainer::GroupBatch tb;
      tb.problem_id = group.problem_id;
      tb.rewards = rewards;
      tb.advantages = adv.values;
      for (const auto& traj : group.trajectories)
        tb.trajectories.push_back(
            project_trajectory(traj, policy, cfg.max_records_per_trajectory));

      objective_sum += trainer::grpo_objective(tb, policy, cfg.grpo);
      auto grad = trainer::grpo_gradient(tb, policy, cfg.grpo);
      policy.add_scaled(grad, cfg.learning_rate);
      ++ts.trained_groups;
    }

    ts.metrics = stats.to_metrics(step, it.makespan);
    ts.objective = ts.trained_groups > 0 ? objective_sum / ts.trained_groups : 0.0;
    ts.mean_reward = stats.count > 0 ? reward_sum / static_cast<double>(stats.count) : 0.0;
    result.total_finished += static_cast<int>(stats.count);

    controller.update(ts.metrics.length_clip, ts.metrics.tool_clip);
    result.steps.push_back(std::move(ts));
  }

  result.final_budgets = controller.current();
  if (!cfg.out_dir.empty()) {
    std::vector<StepMetrics> rows;
    rows.reserve(result.steps.size());
    for (const auto& s : result.steps) rows.push_back(s.metrics);
    write_metrics_csv(cfg.out_dir + "/metrics.csv", rows);
  }
  return result;
}

}  // namespace agentrl::harness
