#include "agentrl/scheduler.hpp"

#include <algorithm>
#include <cassert>
#include <limits>
#include <stdexcept>

namespace agentrl::scheduler {

using protocol::FinishReason;
using protocol::SegmentKind;

RolloutRequest make_request(const plan::SyntheticPlan& p, BudgetSet budgets) {
  RolloutRequest r;
  r.request_id = p.rollout_id;
  r.problem_id = p.problem_id;
  r.plan = &p;
  r.trajectory.problem_id = p.problem_id;
  r.budgets = budgets;
  return r;
}

// ============================================================================
// SimToolService
// ============================================================================

SimToolService::SimToolService(const sandbox::PoolConfig& cfg, sim::EventQueue& queue)
    : pool_([&cfg] {
        sandbox::PoolConfig c = cfg;
        c.mode = sandbox::PoolMode::Simulated;  // no worker threads
        return c;
      }()),
      queue_(queue),
      workers_(cfg.workers) {
  if (workers_ < 1) workers_ = 1;
}

void SimToolService::submit(const sandbox::ExecRequest& req, uint64_t seed, DoneFn done) {
  Job job{pool_.simulated_execute(req, seed), std::move(done)};
  ++calls_;
  busy_time_ += job.result.wall_time_s;
  if (busy_ < workers_) {
    start(std::move(job));
  } else {
    waiting_.push_back(std::move(job));
  }
}

void SimToolService::start(Job job) {
  ++busy_;
  const double latency = job.result.wall_time_s;
  queue_.after(latency, [this, j = std::make_shared<Job>(std::move(job))] {
    --busy_;
    if (!waiting_.empty()) {
      Job next = std::move(waiting_.front());
      waiting_.pop_front();
      start(std::move(next));
    }
    j->done(j->result);
  });
}

// ============================================================================
// SimContext
// ============================================================================

SimContext::SimContext(SimParams params)
    : params_(params),
      balancer_(params.engines, params.balancer_cfg),
      tools_(params.tool_cfg, queue_) {
  if (params_.engines < 1) throw std::invalid_argument("need >= 1 engine");
  engines_.reserve(static_cast<size_t>(params_.engines));
  for (int i = 0; i < params_.engines; ++i)
    engines_.push_back(
        std::make_unique<engine::SimEngine>(i, params_.cost, params_.engine_cfg, queue_));
}

SimCounters SimContext::counters() const {
  SimCounters c;
  c.tool_calls = tools_.calls();
  c.tool_busy_time = tools_.busy_time();
  c.failed_requests = failed_total_;
  for (const auto& e : engines_) {
    const auto& ec = e->counters();
    c.generate_calls += ec.generate_calls;
    c.decoded_tokens += ec.decoded_tokens;
    c.prefilled_tokens += ec.prefilled_tokens;
    c.full_cache_hits += ec.full_cache_hits;
    c.cache_evictions += ec.cache_evictions;
  }
  return c;
}

// ---------------------------------------------------------------------------
// Content assembly
// ---------------------------------------------------------------------------

void SimContext::append_generated(RolloutRequest* r, plan::Cursor from, int tokens) {
  if (tokens <= 0) return;
  plan::append_slice(*r->plan, from, tokens, r->trajectory.segments);
  r->prefix_tokens += tokens;
  r->seg_new_tokens += tokens;
}

bool SimContext::append_interpreter(RolloutRequest* r, const std::string& output) {
  const auto& tok = default_tokenizer();
  const long long avail = r->budgets.l_global - r->prefix_tokens;
  if (avail < 2) return false;  // not even the delimiter tags fit
  protocol::Segment seg;
  const int full = tok.count(output) + 2;
  if (full > avail) {
    seg = protocol::make_segment(SegmentKind::Interpreter,
                                 std::string(tok.prefix(output, static_cast<int>(avail) - 2)), tok);
  } else {
    seg = protocol::make_segment(SegmentKind::Interpreter, output, tok);
  }
  r->prefix_tokens += seg.token_count;
  r->trajectory.segments.push_back(std::move(seg));
  return true;
}

void SimContext::begin_piece(RolloutRequest* r) {
  r->piece_mark_segments = r->trajectory.segments.size();
  r->piece_was_open = r->segment_open;
  if (r->segment_open && !r->trajectory.segments.empty()) {
    r->piece_mark_text_len = r->trajectory.segments.back().text.size();
    r->piece_mark_tokens = r->trajectory.segments.back().token_count;
  } else {
    r->piece_mark_text_len = 0;
    r->piece_mark_tokens = 0;
  }
}

void SimContext::close_piece(RolloutRequest* r) {
  if (!params_.record_pieces) return;
  TrajectoryPiece piece;
  piece.problem_id = r->problem_id;
  piece.continues_previous = r->piece_was_open;
  size_t first = r->piece_mark_segments;
  if (r->piece_was_open && first > 0) {
    const protocol::Segment& s = r->trajectory.segments[first - 1];
    piece.segments.push_back(protocol::Segment{
        s.kind, s.text.substr(r->piece_mark_text_len), s.token_count - r->piece_mark_tokens});
  }
  for (size_t i = first; i < r->trajectory.segments.size(); ++i)
    piece.segments.push_back(r->trajectory.segments[i]);
  piece.finished = r->trajectory.finished;
  piece.finish_reason = r->trajectory.finish_reason;
  r->pieces.push_back(std::move(piece));
}

// ---------------------------------------------------------------------------
// Weights
// ---------------------------------------------------------------------------

void SimContext::release_weight(RolloutRequest* r) {
  if (r->held_weight == 0) return;
  balancer_.release(r->engine_id, r->held_weight);
  r->held_weight = 0;
  engines_[static_cast<size_t>(r->engine_id)]->load_weight = balancer_.load(r->engine_id);
}

// ---------------------------------------------------------------------------
// Agent loop
// ---------------------------------------------------------------------------

void SimContext::start_segment(RolloutRequest* r) {
  r->state = RequestState::ReadyToGenerate;
  r->seg_new_tokens = 0;
  r->seg_tool_calls = 0;
  r->segments_used += 1;
  begin_piece(r);

  auto d = balancer_.route(r->request_id, r->prefix_tokens);
  r->engine_id = d.engine_id;
  r->held_weight = d.weight;
  engines_[static_cast<size_t>(d.engine_id)]->load_weight = balancer_.load(d.engine_id);
  issue_generate(r);
}

void SimContext::issue_generate(RolloutRequest* r) {
  const long long global_room = r->budgets.l_global - r->prefix_tokens;
  const int seg_room = r->budgets.l_seg - r->seg_new_tokens;
  const int max_new = static_cast<int>(std::min<long long>(seg_room, global_room));
  if (max_new <= 0) {
    release_weight(r);
    if (global_room <= 0)
      finish(r, FinishReason::LengthLimit);
    else
      suspend(r);
    return;
  }

  engine::SimEngine::Request greq;
  greq.trajectory_id = r->request_id;
  greq.prefix_tokens = r->prefix_tokens;
  greq.plan = r->plan;
  greq.cursor = r->cursor;
  greq.max_new_tokens = max_new;
  greq.stop_at_tool = true;

  auto submit_to = [&](int engine_idx) {
    engines_[static_cast<size_t>(engine_idx)]->generate_async(
        greq, [this, r](const engine::GenerationChunk& chunk, plan::Cursor end) {
          on_chunk(r, chunk, end);
        });
  };

  try {
    submit_to(r->engine_id);
  } catch (const engine::EngineOverloaded&) {
    // Retry once on the least-busy other engine.
    release_weight(r);
    int alt = -1;
    int best = std::numeric_limits<int>::max();
    for (int k = 0; k < engine_count(); ++k) {
      if (k == r->engine_id) continue;
      if (engines_[static_cast<size_t>(k)]->active_count() < best) {
        best = engines_[static_cast<size_t>(k)]->active_count();
        alt = k;
      }
    }
    if (alt < 0) {
      fail(r, "engine overloaded and no alternative");
      return;
    }
    auto d = balancer_.reacquire(alt, r->prefix_tokens);
    r->engine_id = alt;
    r->held_weight = d.weight;
    engines_[static_cast<size_t>(alt)]->load_weight = balancer_.load(alt);
    try {
      submit_to(alt);
    } catch (const engine::EngineOverloaded&) {
      release_weight(r);
      fail(r, "engine overloaded after retry");
    }
  }
}

void SimContext::on_chunk(RolloutRequest* r, const engine::GenerationChunk& chunk,
                          plan::Cursor end) {
  append_generated(r, r->cursor, chunk.tokens_generated);
  r->cursor = end;
  r->segment_open = end.k != 0;

  switch (chunk.stop) {
    case engine::GenerationChunk::Stop::Eos:
      release_weight(r);
      finish(r, FinishReason::Eos);
      return;
    case engine::GenerationChunk::Stop::SegmentBudget:
    case engine::GenerationChunk::Stop::None:
      release_weight(r);
      if (r->prefix_tokens >= r->budgets.l_global)
        finish(r, FinishReason::LengthLimit);
      else
        suspend(r);
      return;
    case engine::GenerationChunk::Stop::ToolPause:
      release_weight(r);  // the engine does no work while the tool runs
      r->state = RequestState::WaitingOnTool;
      if (defer_tools_)
        deferred_tools_.push_back(r);
      else
        submit_tool(r);
      return;
  }
}

void SimContext::submit_tool(RolloutRequest* r) {
  sandbox::ExecRequest req;
  req.code = plan::code_text_before(*r->plan, r->cursor);
  req.timeout_s = params_.tool_cfg.default_timeout_s;
  req.output_cap_tokens = params_.tool_cfg.default_output_cap_tokens;
  const uint64_t seed = r->plan->tool_seed(r->tool_calls);
  tools_.submit(req, seed,
                [this, r](const sandbox::ExecResult& res) { on_tool_result(r, res); });
}

void SimContext::on_tool_result(RolloutRequest* r, const sandbox::ExecResult& res) {
  const bool appended = append_interpreter(r, res.output);
  r->tool_calls += 1;
  r->seg_tool_calls += 1;

  if (!appended || r->prefix_tokens >= r->budgets.l_global) {
    finish(r, FinishReason::LengthLimit);
    return;
  }
  if (r->tool_calls >= r->budgets.t_global) {
    finish(r, FinishReason::ToolLimit);
    return;
  }
  if (r->seg_tool_calls >= r->budgets.t_seg) {
    suspend(r);
    return;
  }
  resume_after_tool(r);
}

void SimContext::resume_after_tool(RolloutRequest* r) {
  if (defer_tools_) {
    // Serial waves: the next generation phase reissues.
    r->state = RequestState::ReadyToGenerate;
    return;
  }
  resume_issue(r);
}

void SimContext::resume_issue(RolloutRequest* r) {
  r->state = RequestState::ReadyToGenerate;
  auto d = balancer_.reacquire(r->engine_id, r->prefix_tokens);
  r->held_weight = d.weight;
  engines_[static_cast<size_t>(r->engine_id)]->load_weight = balancer_.load(r->engine_id);
  issue_generate(r);
}

void SimContext::finish(RolloutRequest* r, FinishReason reason) {
  release_weight(r);
  r->state = RequestState::Finished;
  r->trajectory.finished = true;
  r->trajectory.finish_reason = reason;
  close_piece(r);
  request_done(r);
}

void SimContext::suspend(RolloutRequest* r) {
  release_weight(r);
  r->state = RequestState::Suspended;
  close_piece(r);
  request_done(r);
}

void SimContext::fail(RolloutRequest* r, std::string why) {
  release_weight(r);
  r->state = RequestState::Failed;
  r->fail_reason = std::move(why);
  ++failed_total_;
  request_done(r);
}

void SimContext::request_done(RolloutRequest*) {
  if (in_flight_ > 0) --in_flight_;
  admit_more();
}

void SimContext::admit_more() {
  while (in_flight_ < params_.max_inflight && !pending_.empty()) {
    RolloutRequest* r = pending_.front();
    pending_.pop_front();
    ++in_flight_;
    start_segment(r);
  }
}

// ---------------------------------------------------------------------------
// Drivers
// ---------------------------------------------------------------------------

void SimContext::run_async(std::vector<RolloutRequest*>& requests) {
  defer_tools_ = false;
  pending_.assign(requests.begin(), requests.end());
  in_flight_ = 0;
  admit_more();
  queue_.run();
}

void SimContext::run_serial(std::vector<RolloutRequest*>& requests) {
  defer_tools_ = true;
  pending_.clear();
  in_flight_ = 0;

  for (RolloutRequest* r : requests) start_segment(r);
  queue_.run();

  while (!deferred_tools_.empty()) {
    std::vector<RolloutRequest*> batch = std::move(deferred_tools_);
    deferred_tools_.clear();

    // Tool phase: everything executes together.
    std::vector<sandbox::ExecResult> results(batch.size());
    for (size_t i = 0; i < batch.size(); ++i) {
      RolloutRequest* r = batch[i];
      sandbox::ExecRequest req;
      req.code = plan::code_text_before(*r->plan, r->cursor);
      req.timeout_s = params_.tool_cfg.default_timeout_s;
      req.output_cap_tokens = params_.tool_cfg.default_output_cap_tokens;
      tools_.submit(req, r->plan->tool_seed(r->tool_calls),
                    [&results, i](const sandbox::ExecResult& res) { results[i] = res; });
    }
    queue_.run();

    // Resolve phase, then everyone resumes together.
    std::vector<RolloutRequest*> continuing;
    for (size_t i = 0; i < batch.size(); ++i) {
      on_tool_result(batch[i], results[i]);
      if (batch[i]->state == RequestState::ReadyToGenerate) continuing.push_back(batch[i]);
    }
    for (RolloutRequest* r : continuing) resume_issue(r);
    queue_.run();
  }
  defer_tools_ = false;
}

SimContext::RunResult SimContext::run(std::vector<RolloutRequest*> requests) {
  for (RolloutRequest* r : requests) {
    if (r->state == RequestState::Finished || r->state == RequestState::Failed)
      throw std::logic_error("request already terminal");
    if (!r->plan) throw std::logic_error("request has no plan");
  }
  const double t0 = queue_.now();
  if (params_.mode == Mode::Serial)
    run_serial(requests);
  else
    run_async(requests);

  RunResult res;
  res.makespan = queue_.now() - t0;
  for (const RolloutRequest* r : requests) {
    switch (r->state) {
      case RequestState::Finished: ++res.finished; break;
      case RequestState::Suspended: ++res.suspended; break;
      case RequestState::Failed: ++res.failed; break;
      default: throw std::logic_error("request still in flight after run");
    }
  }
  return res;
}

SimContext::RunResult run_concurrent(std::vector<RolloutRequest*> requests, SimContext& ctx) {
  if (ctx.params().mode != Mode::Async)
    throw std::logic_error("run_concurrent needs an Async context");
  return ctx.run(std::move(requests));
}

SimContext::RunResult serial_reference(std::vector<RolloutRequest*> requests, SimContext& ctx) {
  if (ctx.params().mode != Mode::Serial)
    throw std::logic_error("serial_reference needs a Serial context");
  return ctx.run(std::move(requests));
}

RolloutRequest agent_loop_step(RolloutRequest req, SimParams params) {
  SimContext ctx(params);
  ctx.run({&req});
  return req;
}

}  // namespace agentrl::scheduler
