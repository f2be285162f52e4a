#pragma once

#include <deque>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "agentrl/balancer.hpp"
#include "agentrl/budgets.hpp"
#include "agentrl/engine.hpp"
#include "agentrl/plan.hpp"
#include "agentrl/protocol.hpp"
#include "agentrl/sandbox.hpp"
#include "agentrl/sim_clock.hpp"

namespace agentrl::scheduler {

enum class Mode { Serial, Async };

enum class RequestState { ReadyToGenerate, WaitingOnTool, Suspended, Finished, Failed };

// One iteration's generated fragment, for concatenation checks. Fragments
// carry raw text slices; token_count is the tokens added by the fragment.
struct TrajectoryPiece {
  std::string problem_id;
  std::vector<protocol::Segment> segments;
  bool continues_previous = false;
  bool finished = false;
  protocol::FinishReason finish_reason = protocol::FinishReason::None;
};

/**
 * Scheduling state of one in-flight trajectory. The trajectory accumulates
 * across iterations; segment counters reset when an iteration starts.
 */
struct RolloutRequest {
  std::string request_id;
  std::string problem_id;
  const plan::SyntheticPlan* plan = nullptr;

  protocol::Trajectory trajectory;
  long long prefix_tokens = 0;  // == total_tokens(trajectory)
  int tool_calls = 0;           // interpreter blocks appended so far
  RequestState state = RequestState::ReadyToGenerate;
  BudgetSet budgets;

  plan::Cursor cursor;
  bool segment_open = false;  // trailing policy segment lacks its close tag
  int seg_new_tokens = 0;
  int seg_tool_calls = 0;
  int segments_used = 0;  // iterations consumed
  std::string fail_reason;

  int engine_id = -1;
  int held_weight = 0;

  std::vector<TrajectoryPiece> pieces;  // recorded when SimParams::record_pieces

  // Piece bookkeeping (valid during a run).
  size_t piece_mark_segments = 0;
  size_t piece_mark_text_len = 0;
  int piece_mark_tokens = 0;
  bool piece_was_open = false;
};

RolloutRequest make_request(const plan::SyntheticPlan& p, BudgetSet budgets);

struct SimParams {
  int engines = 8;
  engine::CostModel cost;
  engine::SimEngineConfig engine_cfg;
  balancer::Balancer::Config balancer_cfg;
  sandbox::PoolConfig tool_cfg;  // workers + simulated latency
  int max_inflight = 1 << 20;    // global admission cap (engines enforce their own)
  bool record_pieces = false;
  Mode mode = Mode::Async;
};

struct SimCounters {
  long long tool_calls = 0;
  double tool_busy_time = 0.0;
  long long generate_calls = 0;
  long long decoded_tokens = 0;
  long long prefilled_tokens = 0;
  long long full_cache_hits = 0;
  long long cache_evictions = 0;
  long long failed_requests = 0;
};

// Worker-limited FIFO tool execution in virtual time. Results come from
// Pool::simulated_execute, so content and latency depend only on the seed.
class SimToolService {
 public:
  SimToolService(const sandbox::PoolConfig& cfg, sim::EventQueue& queue);

  using DoneFn = std::function<void(const sandbox::ExecResult&)>;
  void submit(const sandbox::ExecRequest& req, uint64_t seed, DoneFn done);

  long long calls() const { return calls_; }
  double busy_time() const { return busy_time_; }

 private:
  struct Job {
    sandbox::ExecResult result;
    DoneFn done;
  };
  void start(Job job);

  sandbox::Pool pool_;
  sim::EventQueue& queue_;
  int workers_;
  int busy_ = 0;
  std::deque<Job> waiting_;
  long long calls_ = 0;
  double busy_time_ = 0.0;
};

/**
 * Shared simulation universe: one virtual clock, the engines, the balancer
 * and the tool service. Persists across iterations so KV caches, affinity
 * and the clock carry over, the way a long training run behaves.
 */
class SimContext {
 public:
  explicit SimContext(SimParams params);

  struct RunResult {
    double makespan = 0.0;
    int finished = 0;
    int suspended = 0;
    int failed = 0;
  };

  // Runs every request for one segment-iteration (to Finished, Suspended or
  // Failed), per the configured mode. Requests must be ReadyToGenerate or
  // freshly Suspended.
  RunResult run(std::vector<RolloutRequest*> requests);

  sim::EventQueue& queue() { return queue_; }
  balancer::Balancer& load_balancer() { return balancer_; }
  engine::SimEngine& engine(int i) { return *engines_[i]; }
  int engine_count() const { return static_cast<int>(engines_.size()); }
  SimToolService& tools() { return tools_; }
  const SimParams& params() const { return params_; }
  SimCounters counters() const;  // aggregated engine + tool counters

 private:
  void start_segment(RolloutRequest* r);
  void issue_generate(RolloutRequest* r);
  void on_chunk(RolloutRequest* r, const engine::GenerationChunk& chunk, plan::Cursor end);
  void submit_tool(RolloutRequest* r);
  void on_tool_result(RolloutRequest* r, const sandbox::ExecResult& res);
  void resume_after_tool(RolloutRequest* r);
  void resume_issue(RolloutRequest* r);
  void finish(RolloutRequest* r, protocol::FinishReason reason);
  void suspend(RolloutRequest* r);
  void fail(RolloutRequest* r, std::string why);

  void append_generated(RolloutRequest* r, plan::Cursor from, int tokens);
  bool append_interpreter(RolloutRequest* r, const std::string& output);
  void release_weight(RolloutRequest* r);
  void begin_piece(RolloutRequest* r);
  void close_piece(RolloutRequest* r);
  void request_done(RolloutRequest* r);
  void admit_more();

  void run_async(std::vector<RolloutRequest*>& requests);
  void run_serial(std::vector<RolloutRequest*>& requests);

  SimParams params_;
  sim::EventQueue queue_;
  std::vector<std::unique_ptr<engine::SimEngine>> engines_;
  balancer::Balancer balancer_;
  SimToolService tools_;

  // Driver state (valid during run).
  std::deque<RolloutRequest*> pending_;
  int in_flight_ = 0;
  bool defer_tools_ = false;  // serial mode: collect pauses for the wave barrier
  std::vector<RolloutRequest*> deferred_tools_;
  long long failed_total_ = 0;
};

// Spec-named conveniences. Content is identical across the two; only virtual
// timing differs.
SimContext::RunResult run_concurrent(std::vector<RolloutRequest*> requests, SimContext& ctx);
SimContext::RunResult serial_reference(std::vector<RolloutRequest*> requests, SimContext& ctx);

// One segment-iteration of one request on a fresh single-context simulation.
RolloutRequest agent_loop_step(RolloutRequest req, SimParams params = {});

}  // namespace agentrl::scheduler
