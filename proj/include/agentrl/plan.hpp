#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "agentrl/protocol.hpp"

namespace agentrl::plan {

// One policy-generated block of the plan: a Think or Code segment with a
// fixed number of text tokens. Interpreter segments are not planned; the
// environment produces them at rollout time.
struct PlanStep {
  protocol::SegmentKind kind;
  int text_tokens;
};

/**
 * Pre-sampled trajectory content for one rollout of one problem.
 *
 * The simulated engine "generates" by replaying this token stream at the
 * cost model's speed, which decouples throughput experiments from any real
 * model while driving every scheduler path. Content is a pure function of
 * the plan, so two runs that schedule differently still produce identical
 * trajectories.
 *
 * Token stream per step: [open tag][text tokens...][close tag]. The final
 * Think step ends with the answer atom "\boxed{...}", which renders as five
 * tokenizer tokens.
 */
struct SyntheticPlan {
  std::string problem_id;
  std::string rollout_id;  // unique per rollout; doubles as trajectory id
  uint64_t seed = 0;
  std::vector<PlanStep> steps;
  std::string boxed_answer;  // content inside \boxed{}
  bool answer_correct = false;

  int code_step_count() const;
  // Plan tokens = policy tokens only (tags + words); interpreter tokens are
  // drawn at rollout time from the tool seed.
  long long policy_tokens() const;

  // Seed for the i-th tool call of this rollout: drives both the simulated
  // latency and the placeholder output, independent of scheduling.
  uint64_t tool_seed(int call_index) const;
};

// Position in the plan token stream. k indexes within a step:
// 0 = open tag, 1..text_tokens = words, text_tokens+1 = close tag.
struct Cursor {
  int step = 0;
  int k = 0;

  bool operator==(const Cursor&) const = default;
};

bool at_end(const SyntheticPlan& p, Cursor c);

enum class StopKind { ToolPause, Eos, SegmentBudget };

struct ReplayResult {
  int tokens = 0;   // tokens consumed by this replay
  Cursor end;       // stream position after the replay
  StopKind stop = StopKind::Eos;
};

// Walks the stream from `from` for at most `max_tokens` tokens, stopping at
// the close of a Code step when `stop_at_tool` is set, or at stream end
// (EOS). max_tokens <= 0 yields an empty SegmentBudget result.
ReplayResult replay(const SyntheticPlan& p, Cursor from, int max_tokens, bool stop_at_tool);

// Rendered text of one stream token. Word k>0 carries its leading separator
// so that any split of the stream concatenates back byte-identically.
struct TokenPiece {
  enum class Type { OpenTag, Word, CloseTag };
  Type type;
  std::string text;  // for words, includes the leading space when k > 1
};

TokenPiece token_piece(const SyntheticPlan& p, int step, int k,
                       const protocol::TagConfig& tags = protocol::default_tags());

// Appends the rendered stream slice [from, from+tokens) onto `segments`,
// extending a trailing open segment when the slice starts mid-step.
// Token counts are maintained incrementally (tags count one token each).
void append_slice(const SyntheticPlan& p, Cursor from, int tokens,
                  std::vector<protocol::Segment>& segments,
                  const protocol::TagConfig& tags = protocol::default_tags());

// Raw text of the slice (diagnostics and the chunk payload).
std::string render_slice(const SyntheticPlan& p, Cursor from, int tokens,
                         const protocol::TagConfig& tags = protocol::default_tags());

// Code text of the step that `cursor` just closed (cursor sits right after a
// Code step's close tag).
std::string code_text_before(const SyntheticPlan& p, Cursor cursor,
                             const protocol::TagConfig& tags = protocol::default_tags());

}  // namespace agentrl::plan
