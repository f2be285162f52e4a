#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "agentrl/config.hpp"
#include "agentrl/harness.hpp"
#include "agentrl/refinery.hpp"
#include "agentrl/reward.hpp"

namespace {

using namespace agentrl;

struct GlobalOpts {
  std::string config_path;
  uint64_t seed = 1;
  std::string out_dir = "out";
};

config::Config load_config(const GlobalOpts& g) {
  config::Config cfg;
  if (!g.config_path.empty()) cfg = config::Config::load_file(g.config_path);
  return cfg;
}

harness::WorkloadSpec workload_from_config(const config::Config& cfg, uint64_t seed) {
  harness::WorkloadSpec spec;
  spec.problems = cfg.get_int("workload.problems", spec.problems);
  spec.group_size = cfg.get_int("workload.group_size", spec.group_size);
  spec.mean_tokens = cfg.get_double("workload.mean_tokens", spec.mean_tokens);
  spec.sigma = cfg.get_double("workload.sigma", spec.sigma);
  spec.mean_tool_calls = cfg.get_double("workload.mean_tool_calls", spec.mean_tool_calls);
  spec.seed = seed;
  const double lat_mean = cfg.get_double("workload.tool_latency_mean_s", 1.2);
  const double lat_sigma = cfg.get_double("workload.tool_latency_sigma", 1.0);
  spec.sandbox_latency = lat_sigma > 0
                             ? sandbox::LatencyDistribution::lognormal(lat_mean, lat_sigma)
                             : sandbox::LatencyDistribution::constant(lat_mean);
  return spec;
}

scheduler::SimParams sim_params_from_config(const config::Config& cfg,
                                            const harness::WorkloadSpec& spec) {
  scheduler::SimParams p = harness::default_sim_params(spec);
  p.engines = cfg.get_int("engines.count", p.engines);
  p.cost.prefill_cost_per_token =
      cfg.get_double("engines.prefill_cost_per_token", p.cost.prefill_cost_per_token);
  p.cost.decode_cost_per_token =
      cfg.get_double("engines.decode_cost_per_token", p.cost.decode_cost_per_token);
  p.cost.request_overhead = cfg.get_double("engines.request_overhead", p.cost.request_overhead);
  p.cost.capacity_tokens_per_sec =
      cfg.get_double("engines.capacity_tokens_per_sec", p.cost.capacity_tokens_per_sec);
  p.engine_cfg.cache_budget_tokens = static_cast<long long>(
      cfg.get_double("engines.cache_budget_tokens",
                     static_cast<double>(p.engine_cfg.cache_budget_tokens)));
  p.balancer_cfg.params.l_base_tokens =
      cfg.get_int("balancer.l_base_tokens", p.balancer_cfg.params.l_base_tokens);
  p.balancer_cfg.params.w_base = cfg.get_int("balancer.w_base", p.balancer_cfg.params.w_base);
  p.balancer_cfg.slack = cfg.get_int("balancer.slack", p.balancer_cfg.slack);
  p.balancer_cfg.affinity_capacity = static_cast<size_t>(
      cfg.get_int("balancer.affinity_capacity", static_cast<int>(p.balancer_cfg.affinity_capacity)));
  p.balancer_cfg.enabled = cfg.get_bool("balancer.enabled", p.balancer_cfg.enabled);
  p.tool_cfg.workers = cfg.get_int("sandbox.workers", p.tool_cfg.workers);
  if (auto env = config::env_sandbox_workers()) p.tool_cfg.workers = *env;
  p.tool_cfg.default_timeout_s = cfg.get_double("sandbox.timeout_s", p.tool_cfg.default_timeout_s);
  p.tool_cfg.default_output_cap_tokens =
      cfg.get_int("sandbox.output_cap_tokens", p.tool_cfg.default_output_cap_tokens);
  p.max_inflight = cfg.get_int("scheduler.max_inflight", p.max_inflight);
  const std::string mode = cfg.get_string("scheduler.mode", "async");
  p.mode = mode == "serial" ? scheduler::Mode::Serial : scheduler::Mode::Async;
  return p;
}

sandbox::PoolConfig sandbox_config(const config::Config& cfg) {
  sandbox::PoolConfig pc;
  pc.workers = cfg.get_int("sandbox.workers", pc.workers);
  if (auto env = config::env_sandbox_workers()) pc.workers = *env;
  pc.default_timeout_s = cfg.get_double("sandbox.timeout_s", pc.default_timeout_s);
  pc.default_output_cap_tokens = cfg.get_int("sandbox.output_cap_tokens", pc.default_output_cap_tokens);
  pc.interpreter_cmd = cfg.get_string("sandbox.interpreter_cmd", pc.interpreter_cmd);
  return pc;
}

void write_report(const std::string& out_dir, const std::vector<harness::ExperimentRow>& rows) {
  std::filesystem::create_directories(out_dir);
  nlohmann::ordered_json report = nlohmann::ordered_json::array();
  std::ofstream csv(out_dir + "/ablation.csv");
  csv << "name,makespan,speedup,per_100_step_cost,steps,finished,content_digest\n";
  for (const auto& r : rows) {
    char line[256];
    std::snprintf(line, sizeof(line), "%s,%.3f,%.3f,%.3f,%d,%d,%016llx", r.config.name.c_str(),
                  r.makespan, r.speedup_vs_baseline, r.per_100_step_cost, r.steps, r.finished,
                  static_cast<unsigned long long>(r.content_digest));
    csv << line << "\n";
    nlohmann::ordered_json j;
    j["name"] = r.config.name;
    j["mode"] = r.config.mode == scheduler::Mode::Serial ? "serial" : "async";
    j["partial_n"] = r.config.partial_n;
    j["balancing"] = r.config.balancing;
    j["makespan"] = r.makespan;
    j["speedup_vs_baseline"] = r.speedup_vs_baseline;
    j["per_100_step_cost"] = r.per_100_step_cost;
    j["steps"] = r.steps;
    j["finished"] = r.finished;
    j["mean_len"] = r.aggregate.mean_len;
    j["mean_tools"] = r.aggregate.mean_tools;
    j["content_digest"] = r.content_digest;
    report.push_back(std::move(j));
  }
  std::ofstream out(out_dir + "/report.json");
  out << report.dump(2) << "\n";
}

int cmd_simulate(const GlobalOpts& g) {
  auto cfg = load_config(g);
  auto spec = workload_from_config(cfg, g.seed);
  auto params = sim_params_from_config(cfg, spec);

  harness::ExperimentConfig ec;
  ec.name = cfg.get_string("scheduler.mode", "async");
  ec.mode = params.mode;
  ec.partial_n = cfg.get_int("rollout.partial_n", 1);
  ec.balancing = params.balancer_cfg.enabled;
  const int batch = cfg.get_int("rollout.sample_size", 128);

  auto rows = harness::run_ablation(spec, {ec}, batch, params);
  write_report(g.out_dir, rows);
  const auto& r = rows.front();
  std::cout << "config=" << r.config.name << " makespan=" << r.makespan
            << " finished=" << r.finished << " steps=" << r.steps
            << " mean_len=" << r.aggregate.mean_len << " mean_tools=" << r.aggregate.mean_tools
            << "\n";
  std::cout << "report written to " << g.out_dir << "\n";
  return 0;
}

int cmd_ablate(const GlobalOpts& g) {
  auto cfg = load_config(g);
  auto spec = workload_from_config(cfg, g.seed);
  auto params = sim_params_from_config(cfg, spec);
  const int batch = cfg.get_int("rollout.sample_size", 128);

  auto configs = harness::default_ladder();
  auto rows = harness::run_ablation(spec, configs, batch, params);
  write_report(g.out_dir, rows);

  std::cout << "name,makespan,speedup,finished\n";
  for (const auto& r : rows)
    std::cout << r.config.name << "," << r.makespan << "," << r.speedup_vs_baseline << ","
              << r.finished << "\n";
  bool content_ok = true;
  for (const auto& r : rows) content_ok &= r.content_digest == rows.front().content_digest;
  std::cout << (content_ok ? "content: identical across configs\n"
                           : "content: MISMATCH across configs\n");
  return content_ok ? 0 : 1;
}

int cmd_train(const GlobalOpts& g, int steps) {
  auto cfg = load_config(g);
  auto spec = workload_from_config(cfg, g.seed);
  auto params = sim_params_from_config(cfg, spec);

  harness::TrainingConfig tc;
  tc.batch_size = cfg.get_int("train.batch_size", 64);
  tc.group_size = cfg.get_int("train.group_size", 8);
  tc.grpo.eps_low = cfg.get_double("trainer.eps_low", tc.grpo.eps_low);
  tc.grpo.eps_high = cfg.get_double("trainer.eps_high", tc.grpo.eps_high);
  tc.grpo.delta = cfg.get_double("trainer.delta", tc.grpo.delta);
  tc.grpo.loss_agg = cfg.get_string("trainer.loss_agg", "token_level") == "trajectory_mean"
                         ? trainer::GrpoParams::LossAgg::TrajectoryMean
                         : trainer::GrpoParams::LossAgg::TokenLevel;
  tc.reward.alpha = cfg.get_double("reward.alpha", tc.reward.alpha);
  tc.reward.beta = cfg.get_double("reward.beta", tc.reward.beta);
  tc.reward.r_max = cfg.get_double("reward.r_max", tc.reward.r_max);
  tc.out_dir = g.out_dir;

  auto result = harness::training_loop(spec, steps, tc, params);
  std::cout << harness::metrics_csv_header() << "\n";
  for (const auto& s : result.steps) std::cout << harness::to_csv_row(s.metrics) << "\n";
  std::cout << "final budgets: L_global=" << result.final_budgets.l_global
            << " T_global=" << result.final_budgets.t_global << "\n";
  std::cout << "metrics + experience written to " << g.out_dir << "\n";
  return 0;
}

int cmd_parse(const std::string& in_path) {
  auto traces = protocol::read_trace_file(in_path);
  long long tokens = 0;
  int code_blocks = 0;
  for (const auto& t : traces) {
    tokens += protocol::total_tokens(t);
    code_blocks += protocol::count_code_segments(t);
    // Round-trip check while we are here.
    auto reparsed = protocol::parse_trace(protocol::serialize(t));
    if (!(reparsed == t)) {
      std::cerr << "round-trip mismatch for problem " << t.problem_id << "\n";
      return 1;
    }
  }
  std::cout << traces.size() << " traces, " << tokens << " tokens, " << code_blocks
            << " code blocks, all round-trip clean\n";
  return 0;
}

int cmd_reward_eval(const GlobalOpts& g, const std::string& in_path, const std::string& truth_path,
                    const std::string& out_path) {
  auto cfg = load_config(g);
  reward::RewardParams params;
  params.alpha = cfg.get_double("reward.alpha", params.alpha);
  params.beta = cfg.get_double("reward.beta", params.beta);
  params.r_max = cfg.get_double("reward.r_max", params.r_max);

  auto traces = protocol::read_trace_file(in_path);
  auto truth = reward::read_truth_file(truth_path);

  std::ofstream out(out_path);
  if (!out) {
    std::cerr << "cannot open " << out_path << "\n";
    return 1;
  }
  double total = 0.0;
  int correct = 0;
  for (const auto& t : traces) {
    auto it = truth.find(t.problem_id);
    const std::string answer = it == truth.end() ? "" : it->second;
    auto b = reward::total_reward(t, answer, params);
    total += b.r_total;
    correct += b.r_acc;
    nlohmann::ordered_json j = nlohmann::ordered_json::parse(protocol::to_jsonl_line(t));
    j["r_acc"] = b.r_acc;
    j["r_tool"] = b.r_tool;
    j["r_total"] = b.r_total;
    j["n_code"] = b.n_code;
    out << j.dump() << "\n";
  }
  std::cout << "scored " << traces.size() << " traces: accuracy "
            << (traces.empty() ? 0.0 : static_cast<double>(correct) / traces.size())
            << ", mean reward " << (traces.empty() ? 0.0 : total / traces.size()) << "\n";
  return 0;
}

int cmd_refine(const GlobalOpts& g, const std::string& in_path, const std::string& out_path,
               int min_lines, int max_depth, int resample_budget, bool emit_sft,
               const std::string& sft_path) {
  auto cfg = load_config(g);
  sandbox::Pool pool(sandbox_config(cfg));

  std::ifstream in(in_path);
  if (!in) {
    std::cerr << "cannot open " << in_path << "\n";
    return 1;
  }
  // Input lines are trace JSONL; refinement works on the serialized text.
  std::vector<std::string> texts;
  std::vector<std::string> ids;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto t = protocol::from_jsonl_line(line);
    ids.push_back(t.problem_id);
    texts.push_back(protocol::serialize(t));
  }

  refinery::PipelineConfig pc;
  pc.min_lines = min_lines;
  pc.max_depth = max_depth;
  pc.resample_budget = resample_budget;
  auto result = refinery::refine_traces(texts, pool, pc);

  // Refined traces keep their ids positionally (drops excluded).
  {
    size_t kept = 0;
    std::ofstream out(out_path);
    for (size_t i = 0; i < result.reports.size(); ++i) {
      const bool dropped =
          std::any_of(result.reports[i].actions.begin(), result.reports[i].actions.end(),
                      [](const refinery::Action& a) { return a.kind == refinery::ActionKind::Dropped; });
      if (dropped) continue;
      protocol::Trajectory t = result.refined[kept++];
      t.problem_id = ids[i];
      out << protocol::to_jsonl_line(t) << "\n";
    }
  }
  if (emit_sft) {
    refinery::emit_sft_samples(result.refined, sft_path.empty() ? out_path + ".sft" : sft_path);
  }
  int mismatches = 0, reverted = 0;
  for (const auto& r : result.reports) {
    mismatches += static_cast<int>(r.mismatched_blocks.size());
    for (const auto& a : r.actions)
      if (a.kind == refinery::ActionKind::Reverted) ++reverted;
  }
  std::cout << "refined " << result.refined.size() << "/" << texts.size() << " traces, dropped "
            << result.dropped << ", reverted blocks " << reverted << ", feedback mismatches "
            << mismatches << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tool-augmented agentic rollout engine and desk-scale simulator"};
  app.require_subcommand(1);

  GlobalOpts g;
  app.add_option("--config", g.config_path, "JSON config file");
  app.add_option("--seed", g.seed, "run seed");
  app.add_option("--out-dir", g.out_dir, "output directory");

  auto* simulate = app.add_subcommand("simulate", "run one scheduler configuration");
  auto* ablate = app.add_subcommand("ablate", "run the scheduler speedup ladder");
  auto* train = app.add_subcommand("train", "run the toy training loop");
  int train_steps = 3;
  train->add_option("--steps", train_steps, "training steps");

  auto* parse = app.add_subcommand("parse", "validate a trace file");
  std::string parse_in;
  parse->add_option("--in", parse_in, "trace JSONL")->required();

  auto* reward_eval = app.add_subcommand("reward-eval", "score a trace file");
  std::string re_in, re_truth, re_out = "scored.jsonl";
  reward_eval->add_option("--in", re_in, "trace JSONL")->required();
  reward_eval->add_option("--truth", re_truth, "truth JSONL")->required();
  reward_eval->add_option("--out", re_out, "scored output");

  auto* refine = app.add_subcommand("refine", "refine a trace file through the sandbox");
  std::string rf_in, rf_out = "refined.jsonl", rf_sft;
  int rf_min_lines = 5, rf_max_depth = 10, rf_budget = 0;
  bool rf_emit_sft = false;
  refine->add_option("--in", rf_in, "trace JSONL")->required();
  refine->add_option("--out", rf_out, "refined output");
  refine->add_option("--min-lines", rf_min_lines, "minimum effective code lines");
  refine->add_option("--max-depth", rf_max_depth, "maximum nesting depth");
  refine->add_option("--resample-budget", rf_budget, "resampling attempts per failing block");
  refine->add_flag("--emit-sft", rf_emit_sft, "write masked SFT samples");
  refine->add_option("--sft-out", rf_sft, "SFT output path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (simulate->parsed()) return cmd_simulate(g);
    if (ablate->parsed()) return cmd_ablate(g);
    if (train->parsed()) return cmd_train(g, train_steps);
    if (parse->parsed()) return cmd_parse(parse_in);
    if (reward_eval->parsed()) return cmd_reward_eval(g, re_in, re_truth, re_out);
    if (refine->parsed())
      return cmd_refine(g, rf_in, rf_out, rf_min_lines, rf_max_depth, rf_budget, rf_emit_sft,
                        rf_sft);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
