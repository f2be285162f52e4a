#include "agentrl/plan.hpp"

#include <stdexcept>

#include "agentrl/rng.hpp"

namespace agentrl::plan {

using protocol::SegmentKind;

int SyntheticPlan::code_step_count() const {
  int n = 0;
  for (const auto& s : steps)
    if (s.kind == SegmentKind::Code) ++n;
  return n;
}

long long SyntheticPlan::policy_tokens() const {
  long long n = 0;
  for (const auto& s : steps) n += s.text_tokens + 2;
  return n;
}

uint64_t SyntheticPlan::tool_seed(int call_index) const {
  return splitmix64(seed ^ (0x544f4f4c5345ULL + static_cast<uint64_t>(call_index) * 0x9e3779b9ULL));
}

bool at_end(const SyntheticPlan& p, Cursor c) {
  return c.step >= static_cast<int>(p.steps.size());
}

ReplayResult replay(const SyntheticPlan& p, Cursor from, int max_tokens, bool stop_at_tool) {
  ReplayResult r;
  r.end = from;
  if (at_end(p, from)) {
    r.stop = StopKind::Eos;
    return r;
  }
  if (max_tokens <= 0) {
    r.stop = StopKind::SegmentBudget;
    return r;
  }

  int budget = max_tokens;
  int step = from.step;
  int k = from.k;
  while (true) {
    const int step_len = p.steps[step].text_tokens + 2;
    const int avail = step_len - k;
    if (avail > budget) {
      k += budget;
      r.tokens += budget;
      r.stop = StopKind::SegmentBudget;
      break;
    }
    r.tokens += avail;
    budget -= avail;
    const bool was_code = p.steps[step].kind == SegmentKind::Code;
    ++step;
    k = 0;
    if (was_code && stop_at_tool) {
      r.stop = StopKind::ToolPause;
      break;
    }
    if (step >= static_cast<int>(p.steps.size())) {
      r.stop = StopKind::Eos;
      break;
    }
    if (budget == 0) {
      r.stop = StopKind::SegmentBudget;
      break;
    }
  }
  r.end = Cursor{step, k};
  return r;
}

namespace {

constexpr int kAnswerAtomTokens = 5;  // \ boxed { ans }

bool is_final_think(const SyntheticPlan& p, int step) {
  return step == static_cast<int>(p.steps.size()) - 1 &&
         p.steps[step].kind == SegmentKind::Think &&
         p.steps[step].text_tokens >= kAnswerAtomTokens;
}

std::string word_text(int step, int w) {
  std::string s = "t";
  s += std::to_string(step);
  s += 'x';
  s += std::to_string(w);
  return s;
}

}  // namespace

TokenPiece token_piece(const SyntheticPlan& p, int step, int k, const protocol::TagConfig& tags) {
  if (step < 0 || step >= static_cast<int>(p.steps.size()))
    throw std::out_of_range("plan step out of range");
  const PlanStep& st = p.steps[step];
  if (k == 0) {
    const auto& tag = st.kind == SegmentKind::Code ? tags.code_open : tags.think_open;
    return {TokenPiece::Type::OpenTag, tag};
  }
  if (k == st.text_tokens + 1) {
    const auto& tag = st.kind == SegmentKind::Code ? tags.code_close : tags.think_close;
    return {TokenPiece::Type::CloseTag, tag};
  }
  if (k < 1 || k > st.text_tokens) throw std::out_of_range("plan token out of range");

  const int w = k - 1;
  if (is_final_think(p, step)) {
    const int atom_begin = st.text_tokens - kAnswerAtomTokens;
    if (w >= atom_begin) {
      // "\boxed{ans}" as five glued tokens; only the first carries a space.
      switch (w - atom_begin) {
        case 0: return {TokenPiece::Type::Word, w > 0 ? " \\" : "\\"};
        case 1: return {TokenPiece::Type::Word, "boxed"};
        case 2: return {TokenPiece::Type::Word, "{"};
        case 3: return {TokenPiece::Type::Word, p.boxed_answer};
        default: return {TokenPiece::Type::Word, "}"};
      }
    }
  }
  std::string text = word_text(step, w);
  if (w > 0) text.insert(text.begin(), ' ');
  return {TokenPiece::Type::Word, std::move(text)};
}

void append_slice(const SyntheticPlan& p, Cursor from, int tokens,
                  std::vector<protocol::Segment>& segments, const protocol::TagConfig& tags) {
  int step = from.step;
  int k = from.k;
  for (int i = 0; i < tokens; ++i) {
    TokenPiece piece = token_piece(p, step, k, tags);
    switch (piece.type) {
      case TokenPiece::Type::OpenTag:
        segments.push_back(protocol::Segment{p.steps[step].kind, "", 1});
        break;
      case TokenPiece::Type::Word:
        if (segments.empty() || segments.back().kind != p.steps[step].kind)
          throw std::logic_error("append_slice: no open segment to extend");
        segments.back().text += piece.text;
        segments.back().token_count += 1;
        break;
      case TokenPiece::Type::CloseTag:
        if (segments.empty() || segments.back().kind != p.steps[step].kind)
          throw std::logic_error("append_slice: no open segment to close");
        segments.back().token_count += 1;
        break;
    }
    ++k;
    if (k >= p.steps[step].text_tokens + 2) {
      ++step;
      k = 0;
    }
  }
}

std::string render_slice(const SyntheticPlan& p, Cursor from, int tokens,
                         const protocol::TagConfig& tags) {
  std::string out;
  int step = from.step;
  int k = from.k;
  for (int i = 0; i < tokens; ++i) {
    out += token_piece(p, step, k, tags).text;
    ++k;
    if (k >= p.steps[step].text_tokens + 2) {
      ++step;
      k = 0;
    }
  }
  return out;
}

std::string code_text_before(const SyntheticPlan& p, Cursor cursor,
                             const protocol::TagConfig& tags) {
  const int step = cursor.step - 1;
  if (cursor.k != 0 || step < 0 || p.steps[step].kind != SegmentKind::Code)
    throw std::logic_error("cursor is not just past a code step");
  std::string out;
  for (int w = 0; w < p.steps[step].text_tokens; ++w)
    out += token_piece(p, step, w + 1, tags).text;
  return out;
}

}  // namespace agentrl::plan
