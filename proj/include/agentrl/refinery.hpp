#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "agentrl/protocol.hpp"
#include "agentrl/sandbox.hpp"

namespace agentrl::refinery {

enum class ActionKind { Normalized, Reverted, Replaced, Dropped };

struct Action {
  ActionKind kind;
  int block_index = -1;  // code block index for Reverted/Replaced
};

struct TraceReport {
  bool format_ok = false;
  bool exec_ok = false;
  bool aligned = false;
  bool complexity_ok = false;
  std::vector<Action> actions;
  std::vector<std::string> violations;
  std::vector<int> mismatched_blocks;  // for the external consistency judge
};

// ============================================================================
// Stage (i): format
// ============================================================================

struct FormatResult {
  bool ok = false;
  std::string normalized;  // canonical tag spelling, always usable when ok
  bool changed = false;    // a Normalized action applies
  std::vector<std::string> violations;
};

// Canonicalizes whitespace inside tags (e.g. "< think >" -> "<think>"), then
// verifies tag pairing and code->interpreter adjacency. Ambiguous structure
// is reported, not repaired.
FormatResult check_format(const std::string& trace_text,
                          const protocol::TagConfig& tags = protocol::default_tags());

// ============================================================================
// Stage (ii): executability
// ============================================================================

// Produces replacement code for a failing block, or nullopt to give up.
// Default (null) resampler gives up immediately.
using Resampler =
    std::function<std::optional<std::string>(const std::string& code, const std::string& error,
                                             int attempt)>;

struct ExecOutcome {
  protocol::Trajectory trajectory;
  bool exec_ok = false;  // every surviving code block runs clean
  std::vector<Action> actions;
};

// Runs every code block; failures go through the resampler up to `budget`
// attempts, then the block (and its interpreter feedback) reverts to plain
// Think text, preserving order.
ExecOutcome verify_executability(protocol::Trajectory t, sandbox::Pool& pool, int budget,
                                 const Resampler& resampler = nullptr);

// ============================================================================
// Stage (iii): feedback alignment
// ============================================================================

struct AlignOutcome {
  protocol::Trajectory trajectory;
  std::vector<int> mismatched_blocks;  // differed beyond whitespace
};

// Replaces every interpreter text with a fresh sandbox execution of its code
// block (byte equality post-truncation). Mismatches are flagged for the
// external consistency judge.
AlignOutcome align_feedback(protocol::Trajectory t, sandbox::Pool& pool);

// ============================================================================
// Stage (iv): complexity heuristics
// ============================================================================

enum class ComplexityVerdict { Ok, Trivial, TooDeep };

// Line count ignores blank and comment lines; depth is the maximum
// indentation nesting level (language-agnostic stand-in for AST depth).
ComplexityVerdict complexity_check(const std::string& code, int min_lines, int max_depth);

int effective_lines(const std::string& code);
int indentation_depth(const std::string& code);

// ============================================================================
// SFT emission & pipeline
// ============================================================================

// JSONL: header record, then {problem_id, text, mask} per trace, with the
// mask from protocol::build_loss_mask.
void emit_sft_samples(const std::vector<protocol::Trajectory>& traces, const std::string& path);

struct PipelineConfig {
  int min_lines = 5;
  int max_depth = 10;
  int resample_budget = 0;
  Resampler resampler = nullptr;
};

struct PipelineResult {
  std::vector<protocol::Trajectory> refined;  // traces that survived
  std::vector<TraceReport> reports;           // one per input trace
  int dropped = 0;
};

// Full deterministic pass: format -> executability -> alignment ->
// complexity. Teacher-dependent repairs are stubs; traces needing them are
// flagged (complexity) or dropped (unparseable).
PipelineResult refine_traces(const std::vector<std::string>& trace_texts, sandbox::Pool& pool,
                             const PipelineConfig& cfg = {});

}  // namespace agentrl::refinery
