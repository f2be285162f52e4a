#include "agentrl/protocol.hpp"

#include <algorithm>
#include <array>
#include <fstream>

#include <json.hpp>

namespace agentrl::protocol {

const TagConfig& default_tags() {
  static TagConfig cfg;
  return cfg;
}

std::string_view kind_name(SegmentKind k) {
  switch (k) {
    case SegmentKind::Think: return "think";
    case SegmentKind::Code: return "code";
    case SegmentKind::Interpreter: return "interpreter";
  }
  return "?";
}

std::string_view finish_reason_name(FinishReason r) {
  switch (r) {
    case FinishReason::None: return "none";
    case FinishReason::Eos: return "eos";
    case FinishReason::LengthLimit: return "length_limit";
    case FinishReason::ToolLimit: return "tool_limit";
  }
  return "?";
}

FinishReason finish_reason_from_name(std::string_view name) {
  if (name == "eos") return FinishReason::Eos;
  if (name == "length_limit") return FinishReason::LengthLimit;
  if (name == "tool_limit") return FinishReason::ToolLimit;
  if (name == "none") return FinishReason::None;
  throw std::invalid_argument("unknown finish_reason: " + std::string(name));
}

Segment make_segment(SegmentKind kind, std::string text, const Tokenizer& tok) {
  Segment s;
  s.kind = kind;
  s.token_count = tok.count(text) + 2;  // open + close tag
  s.text = std::move(text);
  return s;
}

bool Trajectory::operator==(const Trajectory& other) const {
  if (problem_id != other.problem_id || finished != other.finished ||
      finish_reason != other.finish_reason || segments.size() != other.segments.size())
    return false;
  for (size_t i = 0; i < segments.size(); ++i) {
    if (segments[i].kind != other.segments[i].kind || segments[i].text != other.segments[i].text)
      return false;
  }
  return true;
}

int total_tokens(const Trajectory& t) {
  int n = 0;
  for (const auto& s : t.segments) n += s.token_count;
  return n;
}

int LossMask::popcount() const {
  return static_cast<int>(std::count(flags.begin(), flags.end(), uint8_t{1}));
}

MalformedMarkup::MalformedMarkup(size_t pos, std::string expected)
    : std::runtime_error("malformed markup at offset " + std::to_string(pos) + ", expected " +
                         expected),
      position(pos),
      expected_tag(std::move(expected)) {}

// ============================================================================
// Parsing
// ============================================================================

namespace {

struct TagSet {
  std::array<std::string_view, 3> open;
  std::array<std::string_view, 3> close;
  std::string_view eos;

  explicit TagSet(const TagConfig& cfg)
      : open{cfg.think_open, cfg.code_open, cfg.interp_open},
        close{cfg.think_close, cfg.code_close, cfg.interp_close},
        eos(cfg.eos) {}
};

constexpr std::array<SegmentKind, 3> kKinds = {SegmentKind::Think, SegmentKind::Code,
                                               SegmentKind::Interpreter};

bool starts_with_at(std::string_view text, size_t pos, std::string_view token) {
  return text.size() - pos >= token.size() && text.compare(pos, token.size(), token) == 0;
}

// True when text[pos..] is a proper prefix of `token` running into the end of
// the buffer (the stream may still complete it).
bool is_truncated_prefix_of(std::string_view text, size_t pos, std::string_view token) {
  size_t avail = text.size() - pos;
  return avail < token.size() && token.compare(0, avail, text.substr(pos)) == 0;
}

bool all_space(std::string_view s) {
  return std::all_of(s.begin(), s.end(),
                     [](char c) { return std::isspace(static_cast<unsigned char>(c)); });
}

void attach_stray_text(Trajectory& out, std::string_view stray, const Tokenizer& tok) {
  if (all_space(stray)) return;
  if (!out.segments.empty() && out.segments.back().kind == SegmentKind::Think) {
    Segment& last = out.segments.back();
    last.text.append(stray);
    last.token_count = tok.count(last.text) + 2;
  } else {
    out.segments.push_back(make_segment(SegmentKind::Think, std::string(stray), tok));
  }
}

// Shared scanner for parse_trace and incremental_scan. `partial_ok` tolerates
// a buffer that ends mid-token/mid-segment and reports how it ended.
struct ScanState {
  Trajectory trajectory;
  bool saw_eos = false;
  bool ends_at_code_close = false;  // buffer ends exactly at </code>
  bool truncated = false;           // ended inside a segment or mid-tag
};

ScanState scan(std::string_view text, const TagConfig& cfg, const Tokenizer& tok,
               bool partial_ok) {
  TagSet tags(cfg);
  ScanState st;
  size_t i = 0;
  size_t stray_begin = 0;

  auto flush_stray = [&](size_t end) {
    if (end > stray_begin)
      attach_stray_text(st.trajectory, text.substr(stray_begin, end - stray_begin), tok);
  };

  while (i < text.size()) {
    int opened = -1;
    for (int k = 0; k < 3; ++k) {
      if (starts_with_at(text, i, tags.open[k])) {
        opened = k;
        break;
      }
    }
    if (opened < 0) {
      if (starts_with_at(text, i, tags.eos)) {
        flush_stray(i);
        st.saw_eos = true;
        i += tags.eos.size();
        stray_begin = i;
        // Anything significant after EOS is a protocol violation.
        if (!all_space(text.substr(i))) throw MalformedMarkup(i, "end of stream");
        break;
      }
      if (partial_ok) {
        bool maybe_tag = false;
        for (int k = 0; k < 3; ++k)
          if (is_truncated_prefix_of(text, i, tags.open[k])) maybe_tag = true;
        if (is_truncated_prefix_of(text, i, tags.eos)) maybe_tag = true;
        if (maybe_tag) {
          st.truncated = true;
          flush_stray(i);
          return st;
        }
      }
      ++i;
      continue;
    }

    flush_stray(i);
    size_t open_pos = i;
    i += tags.open[opened].size();
    size_t body_begin = i;

    // Walk to the matching close tag; any other tag in between is nesting.
    while (true) {
      if (i >= text.size()) {
        if (partial_ok) {
          st.truncated = true;
          Segment seg = make_segment(kKinds[opened], std::string(text.substr(body_begin)), tok);
          st.trajectory.segments.push_back(std::move(seg));
          return st;
        }
        throw MalformedMarkup(open_pos, std::string(tags.close[opened]));
      }
      if (starts_with_at(text, i, tags.close[opened])) break;
      for (int k = 0; k < 3; ++k) {
        if (starts_with_at(text, i, tags.open[k]) || starts_with_at(text, i, tags.close[k]))
          throw MalformedMarkup(i, std::string(tags.close[opened]));
      }
      if (starts_with_at(text, i, tags.eos))
        throw MalformedMarkup(i, std::string(tags.close[opened]));
      if (partial_ok) {
        bool maybe_tag = is_truncated_prefix_of(text, i, tags.close[opened]);
        for (int k = 0; k < 3; ++k) {
          if (is_truncated_prefix_of(text, i, tags.open[k]) ||
              is_truncated_prefix_of(text, i, tags.close[k]))
            maybe_tag = true;
        }
        if (maybe_tag) {
          st.truncated = true;
          Segment seg = make_segment(kKinds[opened],
                                     std::string(text.substr(body_begin, i - body_begin)), tok);
          st.trajectory.segments.push_back(std::move(seg));
          return st;
        }
      }
      ++i;
    }

    Segment seg =
        make_segment(kKinds[opened], std::string(text.substr(body_begin, i - body_begin)), tok);
    st.trajectory.segments.push_back(std::move(seg));
    i += tags.close[opened].size();
    stray_begin = i;
    if (opened == 1 && i == text.size()) st.ends_at_code_close = true;
  }

  flush_stray(text.size());
  if (st.saw_eos) {
    st.trajectory.finished = true;
    st.trajectory.finish_reason = FinishReason::Eos;
  }
  return st;
}

}  // namespace

Trajectory parse_trace(std::string_view text, const TagConfig& tags, const Tokenizer& tok) {
  return scan(text, tags, tok, /*partial_ok=*/false).trajectory;
}

std::string serialize(const Trajectory& t, const TagConfig& tags) {
  size_t reserve = tags.eos.size();
  for (const auto& s : t.segments) reserve += s.text.size() + 32;
  std::string out;
  out.reserve(reserve);
  for (const auto& s : t.segments) {
    switch (s.kind) {
      case SegmentKind::Think:
        out += tags.think_open;
        out += s.text;
        out += tags.think_close;
        break;
      case SegmentKind::Code:
        out += tags.code_open;
        out += s.text;
        out += tags.code_close;
        break;
      case SegmentKind::Interpreter:
        out += tags.interp_open;
        out += s.text;
        out += tags.interp_close;
        break;
    }
  }
  if (t.finish_reason == FinishReason::Eos) out += tags.eos;
  return out;
}

ScanResult incremental_scan(std::string_view buffer, const TagConfig& tags) {
  ScanState st = scan(buffer, tags, default_tokenizer(), /*partial_ok=*/true);
  if (st.saw_eos) return Complete{FinishReason::Eos};
  if (st.ends_at_code_close && !st.trajectory.segments.empty() &&
      st.trajectory.segments.back().kind == SegmentKind::Code) {
    return PauseForTool{st.trajectory.segments.back().text};
  }
  return NeedMore{};
}

LossMask build_loss_mask(const Trajectory& t) {
  LossMask mask;
  mask.flags.resize(static_cast<size_t>(total_tokens(t)), 0);
  size_t pos = 0;
  for (const auto& s : t.segments) {
    if (s.kind == SegmentKind::Interpreter)
      std::fill_n(mask.flags.begin() + pos, s.token_count, uint8_t{1});
    pos += static_cast<size_t>(s.token_count);
  }
  return mask;
}

int count_code_segments(const Trajectory& t) {
  return static_cast<int>(std::count_if(t.segments.begin(), t.segments.end(), [](const Segment& s) {
    return s.kind == SegmentKind::Code;
  }));
}

// ============================================================================
// Trace files
// ============================================================================

std::string to_jsonl_line(const Trajectory& t) {
  nlohmann::ordered_json j;
  j["problem_id"] = t.problem_id;
  auto& segs = j["segments"] = nlohmann::ordered_json::array();
  for (const auto& s : t.segments) {
    segs.push_back({{"kind", std::string(kind_name(s.kind))}, {"text", s.text}});
  }
  j["finish_reason"] = std::string(finish_reason_name(t.finish_reason));
  return j.dump();
}

Trajectory from_jsonl_line(std::string_view line, const Tokenizer& tok) {
  auto j = nlohmann::json::parse(line);
  Trajectory t;
  t.problem_id = j.at("problem_id").get<std::string>();
  for (const auto& js : j.at("segments")) {
    std::string kind = js.at("kind").get<std::string>();
    SegmentKind k;
    if (kind == "think")
      k = SegmentKind::Think;
    else if (kind == "code")
      k = SegmentKind::Code;
    else if (kind == "interpreter")
      k = SegmentKind::Interpreter;
    else
      throw std::invalid_argument("unknown segment kind: " + kind);
    t.segments.push_back(make_segment(k, js.at("text").get<std::string>(), tok));
  }
  t.finish_reason = finish_reason_from_name(j.at("finish_reason").get<std::string>());
  t.finished = t.finish_reason != FinishReason::None;
  return t;
}

std::vector<Trajectory> read_trace_file(const std::string& path, const Tokenizer& tok) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open trace file: " + path);
  std::vector<Trajectory> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(from_jsonl_line(line, tok));
  }
  return out;
}

void write_trace_file(const std::string& path, const std::vector<Trajectory>& traces) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open trace file for writing: " + path);
  for (const auto& t : traces) out << to_jsonl_line(t) << "\n";
}

}  // namespace agentrl::protocol
