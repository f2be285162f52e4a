#include "agentrl/refinery.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include <json.hpp>

namespace agentrl::refinery {

using protocol::SegmentKind;
using protocol::Trajectory;

// ============================================================================
// Stage (i): format
// ============================================================================

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)); }

// Matches "< /? name >" with arbitrary internal whitespace at text[i];
// returns the canonical tag and match length.
bool match_loose_tag(const std::string& text, size_t i, std::string& canonical, size_t& len) {
  static const char* kNames[] = {"think", "code", "interpreter"};
  if (text[i] != '<') return false;
  size_t j = i + 1;
  while (j < text.size() && is_space(text[j])) ++j;
  bool closing = false;
  if (j < text.size() && text[j] == '/') {
    closing = true;
    ++j;
    while (j < text.size() && is_space(text[j])) ++j;
  }
  for (const char* name : kNames) {
    size_t n = std::string_view(name).size();
    if (text.compare(j, n, name) != 0) continue;
    size_t k = j + n;
    while (k < text.size() && is_space(text[k])) ++k;
    if (k < text.size() && text[k] == '>') {
      canonical = closing ? "</" + std::string(name) + ">" : "<" + std::string(name) + ">";
      len = k - i + 1;
      return true;
    }
  }
  return false;
}

std::string normalize_tags(const std::string& text) {
  std::string out;
  out.reserve(text.size());
  size_t i = 0;
  while (i < text.size()) {
    if (text[i] == '<') {
      std::string canonical;
      size_t len = 0;
      if (match_loose_tag(text, i, canonical, len)) {
        out += canonical;
        i += len;
        continue;
      }
    }
    out += text[i++];
  }
  return out;
}

bool whitespace_equal(std::string_view a, std::string_view b) {
  size_t i = 0, j = 0;
  auto skip = [](std::string_view s, size_t& k) {
    while (k < s.size() && is_space(s[k])) ++k;
  };
  while (true) {
    skip(a, i);
    skip(b, j);
    if (i == a.size() || j == b.size()) break;
    if (a[i] != b[j]) return false;
    ++i;
    ++j;
  }
  skip(a, i);
  skip(b, j);
  return i == a.size() && j == b.size();
}

}  // namespace

FormatResult check_format(const std::string& trace_text, const protocol::TagConfig& tags) {
  FormatResult res;
  res.normalized = normalize_tags(trace_text);
  res.changed = res.normalized != trace_text;

  Trajectory t;
  try {
    t = protocol::parse_trace(res.normalized, tags);
  } catch (const protocol::MalformedMarkup& e) {
    res.violations.push_back("unbalanced_tag at offset " + std::to_string(e.position) +
                             " (expected " + e.expected_tag + ")");
    res.ok = false;
    return res;
  }

  for (size_t i = 0; i < t.segments.size(); ++i) {
    if (t.segments[i].kind != SegmentKind::Code) continue;
    const bool answered =
        i + 1 < t.segments.size() && t.segments[i + 1].kind == SegmentKind::Interpreter;
    if (!answered) res.violations.push_back("code_without_feedback at segment " + std::to_string(i));
  }
  for (size_t i = 0; i < t.segments.size(); ++i) {
    if (t.segments[i].kind == SegmentKind::Interpreter &&
        (i == 0 || t.segments[i - 1].kind != SegmentKind::Code))
      res.violations.push_back("feedback_without_code at segment " + std::to_string(i));
  }
  res.ok = res.violations.empty();
  return res;
}

// ============================================================================
// Stage (ii): executability
// ============================================================================

ExecOutcome verify_executability(Trajectory t, sandbox::Pool& pool, int budget,
                                 const Resampler& resampler) {
  ExecOutcome out;
  std::vector<protocol::Segment> kept;
  kept.reserve(t.segments.size());

  int code_index = -1;
  for (size_t i = 0; i < t.segments.size(); ++i) {
    protocol::Segment seg = t.segments[i];
    if (seg.kind != SegmentKind::Code) {
      kept.push_back(std::move(seg));
      continue;
    }
    ++code_index;

    sandbox::ExecRequest req;
    req.code = seg.text;
    req.timeout_s = pool.config().default_timeout_s;
    req.output_cap_tokens = pool.config().default_output_cap_tokens;
    sandbox::ExecResult res = pool.execute(req);

    bool replaced = false;
    for (int attempt = 1; !res.ok() && resampler && attempt <= budget; ++attempt) {
      auto candidate = resampler(seg.text, res.output, attempt);
      if (!candidate) break;
      sandbox::ExecRequest retry = req;
      retry.code = *candidate;
      sandbox::ExecResult rres = pool.execute(retry);
      if (rres.ok()) {
        seg = protocol::make_segment(SegmentKind::Code, *candidate);
        res = rres;
        replaced = true;
        break;
      }
    }

    if (res.ok()) {
      if (replaced) out.actions.push_back({ActionKind::Replaced, code_index});
      kept.push_back(std::move(seg));
      continue;
    }

    // Persistent failure: the block becomes plain reasoning text and its
    // stale feedback goes with it.
    out.actions.push_back({ActionKind::Reverted, code_index});
    kept.push_back(protocol::make_segment(SegmentKind::Think, seg.text));
    if (i + 1 < t.segments.size() && t.segments[i + 1].kind == SegmentKind::Interpreter) ++i;
  }

  t.segments = std::move(kept);
  out.exec_ok = std::none_of(out.actions.begin(), out.actions.end(), [](const Action& a) {
    return a.kind == ActionKind::Reverted;
  });
  out.trajectory = std::move(t);
  return out;
}

// ============================================================================
// Stage (iii): alignment
// ============================================================================

AlignOutcome align_feedback(Trajectory t, sandbox::Pool& pool) {
  AlignOutcome out;
  int code_index = -1;
  for (size_t i = 0; i < t.segments.size(); ++i) {
    if (t.segments[i].kind != SegmentKind::Code) continue;
    ++code_index;

    sandbox::ExecRequest req;
    req.code = t.segments[i].text;
    req.timeout_s = pool.config().default_timeout_s;
    req.output_cap_tokens = pool.config().default_output_cap_tokens;
    const sandbox::ExecResult res = pool.execute(req);

    protocol::Segment real = protocol::make_segment(SegmentKind::Interpreter, res.output);
    if (i + 1 < t.segments.size() && t.segments[i + 1].kind == SegmentKind::Interpreter) {
      if (!whitespace_equal(t.segments[i + 1].text, res.output))
        out.mismatched_blocks.push_back(code_index);
      t.segments[i + 1] = std::move(real);
    } else {
      // Truncated trace: supply the missing feedback.
      t.segments.insert(t.segments.begin() + static_cast<long>(i) + 1, std::move(real));
      out.mismatched_blocks.push_back(code_index);
    }
  }
  out.trajectory = std::move(t);
  return out;
}

// ============================================================================
// Stage (iv): complexity
// ============================================================================

int effective_lines(const std::string& code) {
  int lines = 0;
  size_t pos = 0;
  while (pos <= code.size()) {
    size_t nl = code.find('\n', pos);
    std::string_view line(code.data() + pos, (nl == std::string::npos ? code.size() : nl) - pos);
    size_t first = 0;
    while (first < line.size() && is_space(line[first])) ++first;
    if (first < line.size() && line[first] != '#') ++lines;
    if (nl == std::string::npos) break;
    pos = nl + 1;
  }
  return lines;
}

int indentation_depth(const std::string& code) {
  std::vector<int> stack{0};
  int max_depth = 0;
  size_t pos = 0;
  while (pos <= code.size()) {
    size_t nl = code.find('\n', pos);
    std::string_view line(code.data() + pos, (nl == std::string::npos ? code.size() : nl) - pos);
    int indent = 0;
    size_t first = 0;
    while (first < line.size() && (line[first] == ' ' || line[first] == '\t')) {
      indent += line[first] == '\t' ? 4 : 1;
      ++first;
    }
    if (first < line.size() && line[first] != '#') {
      while (stack.size() > 1 && stack.back() > indent) stack.pop_back();
      if (indent > stack.back()) stack.push_back(indent);
      max_depth = std::max(max_depth, static_cast<int>(stack.size()) - 1);
    }
    if (nl == std::string::npos) break;
    pos = nl + 1;
  }
  return max_depth;
}

ComplexityVerdict complexity_check(const std::string& code, int min_lines, int max_depth) {
  if (effective_lines(code) < min_lines) return ComplexityVerdict::Trivial;
  if (indentation_depth(code) > max_depth) return ComplexityVerdict::TooDeep;
  return ComplexityVerdict::Ok;
}

// ============================================================================
// SFT emission & pipeline
// ============================================================================

void emit_sft_samples(const std::vector<Trajectory>& traces, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open sft output: " + path);
  nlohmann::ordered_json header;
  header["type"] = "header";
  header["count"] = traces.size();
  header["mask_semantics"] = "1 = environment token, excluded from loss";
  out << header.dump() << "\n";

  for (const auto& t : traces) {
    const auto mask = protocol::build_loss_mask(t);
    nlohmann::ordered_json j;
    j["problem_id"] = t.problem_id;
    j["text"] = protocol::serialize(t);
    j["mask"] = std::vector<int>(mask.flags.begin(), mask.flags.end());
    out << j.dump() << "\n";
  }
}

PipelineResult refine_traces(const std::vector<std::string>& trace_texts, sandbox::Pool& pool,
                             const PipelineConfig& cfg) {
  PipelineResult out;
  out.reports.resize(trace_texts.size());

  for (size_t i = 0; i < trace_texts.size(); ++i) {
    TraceReport& report = out.reports[i];

    FormatResult fmt = check_format(trace_texts[i]);
    report.violations = fmt.violations;
    if (fmt.changed) report.actions.push_back({ActionKind::Normalized, -1});
    report.format_ok = fmt.ok;
    if (!fmt.ok) {
      // Structure needs regeneration by a teacher; nothing mechanical left.
      report.actions.push_back({ActionKind::Dropped, -1});
      ++out.dropped;
      continue;
    }

    Trajectory t = protocol::parse_trace(fmt.normalized);

    ExecOutcome exec = verify_executability(std::move(t), pool, cfg.resample_budget, cfg.resampler);
    report.exec_ok = exec.exec_ok;
    for (const auto& a : exec.actions) report.actions.push_back(a);

    AlignOutcome align = align_feedback(std::move(exec.trajectory), pool);
    report.mismatched_blocks = align.mismatched_blocks;
    report.aligned = true;

    report.complexity_ok = true;
    for (const auto& seg : align.trajectory.segments) {
      if (seg.kind != SegmentKind::Code) continue;
      if (complexity_check(seg.text, cfg.min_lines, cfg.max_depth) != ComplexityVerdict::Ok)
        report.complexity_ok = false;
    }

    out.refined.push_back(std::move(align.trajectory));
  }
  return out;
}

}  // namespace agentrl::refinery
