#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "agentrl/tokenizer.hpp"

namespace agentrl::protocol {

// ============================================================================
// Markup vocabulary
// ============================================================================

// Delimiters are configurable; defaults are the literal wire tags. Each tag
// and the EOS marker count as one token of the segment that owns them.
struct TagConfig {
  std::string think_open = "<think>";
  std::string think_close = "</think>";
  std::string code_open = "<code>";
  std::string code_close = "</code>";
  std::string interp_open = "<interpreter>";
  std::string interp_close = "</interpreter>";
  std::string eos = "<eos>";
};

const TagConfig& default_tags();

enum class SegmentKind { Think, Code, Interpreter };

std::string_view kind_name(SegmentKind k);

enum class FinishReason { None, Eos, LengthLimit, ToolLimit };

std::string_view finish_reason_name(FinishReason r);
FinishReason finish_reason_from_name(std::string_view name);

// ============================================================================
// Core records
// ============================================================================

struct Segment {
  SegmentKind kind;
  std::string text;
  // Tokenizer count of `text` plus one token for each delimiter tag.
  int token_count = 0;
};

Segment make_segment(SegmentKind kind, std::string text,
                     const Tokenizer& tok = default_tokenizer());

struct Trajectory {
  std::string problem_id;
  std::vector<Segment> segments;
  bool finished = false;
  FinishReason finish_reason = FinishReason::None;

  bool operator==(const Trajectory& other) const;
};

int total_tokens(const Trajectory& t);

// One flag per trajectory token, in segment order; 1 = excluded from loss.
struct LossMask {
  std::vector<uint8_t> flags;

  int popcount() const;
};

// ============================================================================
// Errors
// ============================================================================

class MalformedMarkup : public std::runtime_error {
 public:
  MalformedMarkup(size_t position, std::string expected_tag);

  size_t position;
  std::string expected_tag;
};

// ============================================================================
// Operations
// ============================================================================

// Parses a full trace. Text outside any tag is attached to the nearest
// preceding Think segment (or becomes one); whitespace-only gaps are dropped.
Trajectory parse_trace(std::string_view text, const TagConfig& tags = default_tags(),
                       const Tokenizer& tok = default_tokenizer());

// Inverse of parse_trace for well-formed trajectories; appends the EOS marker
// when finish_reason is Eos. Byte-stable.
std::string serialize(const Trajectory& t, const TagConfig& tags = default_tags());

struct NeedMore {};
struct PauseForTool {
  std::string code_text;
};
struct Complete {
  FinishReason reason;
};
using ScanResult = std::variant<NeedMore, PauseForTool, Complete>;

// Classifies a growing stream prefix: PauseForTool exactly when the buffer
// ends at a closing code tag with no interpreter answer yet; Complete on the
// EOS marker; NeedMore otherwise. Throws MalformedMarkup on nested tags.
ScanResult incremental_scan(std::string_view buffer, const TagConfig& tags = default_tags());

LossMask build_loss_mask(const Trajectory& t);

int count_code_segments(const Trajectory& t);

// ============================================================================
// Trace files (one JSON object per line)
// ============================================================================

std::string to_jsonl_line(const Trajectory& t);
Trajectory from_jsonl_line(std::string_view line, const Tokenizer& tok = default_tokenizer());

std::vector<Trajectory> read_trace_file(const std::string& path,
                                        const Tokenizer& tok = default_tokenizer());
void write_trace_file(const std::string& path, const std::vector<Trajectory>& traces);

}  // namespace agentrl::protocol
