#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "agentrl/protocol.hpp"
#include "agentrl/rng.hpp"

using namespace agentrl;
using namespace agentrl::protocol;

namespace {

Trajectory random_trajectory(Rng& rng) {
  Trajectory t;
  t.problem_id = "p" + std::to_string(rng.next_below(1000));
  const int rounds = static_cast<int>(rng.next_below(5));
  auto words = [&](int n) {
    std::string s;
    for (int i = 0; i < n; ++i) {
      if (i) s += ' ';
      s += "w" + std::to_string(rng.next_below(100));
    }
    return s;
  };
  for (int r = 0; r < rounds; ++r) {
    t.segments.push_back(make_segment(SegmentKind::Think, words(1 + rng.next_below(8))));
    t.segments.push_back(make_segment(SegmentKind::Code, words(1 + rng.next_below(6))));
    t.segments.push_back(make_segment(SegmentKind::Interpreter, words(1 + rng.next_below(4))));
  }
  t.segments.push_back(make_segment(SegmentKind::Think, words(2 + rng.next_below(6))));
  if (rng.next_below(2) == 0) {
    t.finished = true;
    t.finish_reason = FinishReason::Eos;
  }
  return t;
}

}  // namespace

TEST_CASE("parse_trace: three tagged blocks in textual order") {
  auto t = parse_trace("<think>a</think><code>print(1+1)</code><interpreter>2</interpreter>");
  REQUIRE(t.segments.size() == 3);
  CHECK(t.segments[0].kind == SegmentKind::Think);
  CHECK(t.segments[1].kind == SegmentKind::Code);
  CHECK(t.segments[2].kind == SegmentKind::Interpreter);
  CHECK(t.segments[0].text == "a");
  CHECK(t.segments[1].text == "print(1+1)");
  CHECK(t.segments[2].text == "2");
  CHECK_FALSE(t.finished);
}

TEST_CASE("parse_trace: empty input is an empty unfinished trajectory") {
  auto t = parse_trace("");
  CHECK(t.segments.empty());
  CHECK_FALSE(t.finished);
  CHECK(t.finish_reason == FinishReason::None);
}

TEST_CASE("parse_trace: nested tag reports the unclosed think") {
  try {
    parse_trace("<think>a<code>b</code>");
    FAIL("expected MalformedMarkup");
  } catch (const MalformedMarkup& e) {
    CHECK(e.expected_tag == "</think>");
    CHECK(e.position == 8);  // where <code> interrupts the think block
  }
}

TEST_CASE("parse_trace: unterminated segment reports the open position") {
  CHECK_THROWS_AS(parse_trace("<code>print(1)"), MalformedMarkup);
}

TEST_CASE("parse_trace: stray text joins the preceding think segment") {
  auto t = parse_trace("<think>a</think>loose words<code>c</code><interpreter>o</interpreter>");
  REQUIRE(t.segments.size() == 3);
  CHECK(t.segments[0].text == "aloose words");

  // No preceding segment: the stray text becomes its own think segment.
  auto lead = parse_trace("lead<code>c</code><interpreter>o</interpreter>");
  REQUIRE(lead.segments.size() == 3);
  CHECK(lead.segments[0].kind == SegmentKind::Think);
  CHECK(lead.segments[0].text == "lead");
}

TEST_CASE("parse_trace: eos marker finishes the trajectory") {
  auto t = parse_trace("<think>done</think><eos>");
  CHECK(t.finished);
  CHECK(t.finish_reason == FinishReason::Eos);
  CHECK(serialize(t) == "<think>done</think><eos>");
}

TEST_CASE("round-trip: serialize(parse(x)) == x for well-formed traces") {
  const std::string x =
      "<think>plan the attack</think><code>print(6*7)</code><interpreter>42</interpreter>"
      "<think>answer is \\boxed{42}</think><eos>";
  CHECK(serialize(parse_trace(x)) == x);
}

TEST_CASE("round-trip property: parse(serialize(t)) == t for random trajectories") {
  Rng rng(12345);
  for (int i = 0; i < 200; ++i) {
    Trajectory t = random_trajectory(rng);
    Trajectory back = parse_trace(serialize(t));
    back.problem_id = t.problem_id;  // problem id does not live in the markup
    CHECK(back == t);
  }
}

TEST_CASE("segment token accounting: tags count one token each") {
  auto seg = make_segment(SegmentKind::Think, "a b c");
  CHECK(seg.token_count == 5);  // 3 words + 2 tags
  auto empty = make_segment(SegmentKind::Interpreter, "");
  CHECK(empty.token_count == 2);
}

TEST_CASE("build_loss_mask: interpreter span carries the ones") {
  // Token counts [5 think, 4 code, 3 interpreter] -> 0^9 1^3.
  Trajectory t;
  t.segments.push_back(make_segment(SegmentKind::Think, "a b c"));        // 5
  t.segments.push_back(make_segment(SegmentKind::Code, "x y"));           // 4
  t.segments.push_back(make_segment(SegmentKind::Interpreter, "7"));      // 3
  auto mask = build_loss_mask(t);
  REQUIRE(mask.flags.size() == 12);
  for (int i = 0; i < 9; ++i) CHECK(mask.flags[i] == 0);
  for (int i = 9; i < 12; ++i) CHECK(mask.flags[i] == 1);
}

TEST_CASE("build_loss_mask: no interpreter segment means all zeros") {
  Trajectory t;
  t.segments.push_back(make_segment(SegmentKind::Think, "a b"));
  t.segments.push_back(make_segment(SegmentKind::Code, "c"));
  auto mask = build_loss_mask(t);
  CHECK(mask.popcount() == 0);
}

TEST_CASE("build_loss_mask: two rounds of counts [2,2,2,2,2,2] -> 0^4 1^2 0^4 1^2") {
  // Hand oracle: spans are T[0,2) C[2,4) I[4,6) T[6,8) C[8,10) I[10,12).
  Trajectory t;
  for (int round = 0; round < 2; ++round) {
    t.segments.push_back(make_segment(SegmentKind::Think, ""));
    t.segments.push_back(make_segment(SegmentKind::Code, ""));
    t.segments.push_back(make_segment(SegmentKind::Interpreter, ""));
  }
  auto mask = build_loss_mask(t);
  const std::vector<uint8_t> expected = {0, 0, 0, 0, 1, 1, 0, 0, 0, 0, 1, 1};
  CHECK(mask.flags == expected);
}

TEST_CASE("mask completeness property: popcount equals interpreter token sum") {
  Rng rng(777);
  for (int i = 0; i < 100; ++i) {
    Trajectory t = random_trajectory(rng);
    auto mask = build_loss_mask(t);
    int interp = 0;
    for (const auto& s : t.segments)
      if (s.kind == SegmentKind::Interpreter) interp += s.token_count;
    CHECK(mask.popcount() == interp);
    CHECK(static_cast<int>(mask.flags.size()) == total_tokens(t));
  }
}

TEST_CASE("count_code_segments basics") {
  CHECK(count_code_segments(Trajectory{}) == 0);
  auto t = parse_trace("<think>a</think><code>print(1+1)</code><interpreter>2</interpreter>");
  CHECK(count_code_segments(t) == 1);
}

TEST_CASE("count_code_segments: 27-block fixture matches a substring-count oracle") {
  std::string text;
  for (int i = 0; i < 27; ++i) {
    text += "<think>step " + std::to_string(i) + "</think>";
    text += "<code>print(" + std::to_string(i) + ")</code>";
    text += "<interpreter>" + std::to_string(i) + "</interpreter>";
  }
  text += "<think>\\boxed{27}</think>";

  // Independent oracle: count occurrences of the opening tag in the text.
  int oracle = 0;
  for (size_t pos = 0; (pos = text.find("<code>", pos)) != std::string::npos; pos += 6) ++oracle;
  CHECK(oracle == 27);
  CHECK(count_code_segments(parse_trace(text)) == 27);
}

TEST_CASE("incremental_scan: pause exactly at an unanswered closing code tag") {
  auto res = incremental_scan("<think>a</think><code>print(9)</code>");
  auto* pause = std::get_if<PauseForTool>(&res);
  REQUIRE(pause != nullptr);
  CHECK(pause->code_text == "print(9)");
}

TEST_CASE("incremental_scan: mid-word think content needs more") {
  auto res = incremental_scan("<think>partial wor");
  CHECK(std::holds_alternative<NeedMore>(res));
  CHECK(std::holds_alternative<NeedMore>(incremental_scan("<thi")));
}

TEST_CASE("incremental_scan: eos marker completes") {
  auto res = incremental_scan("<think>a</think><eos>");
  auto* done = std::get_if<Complete>(&res);
  REQUIRE(done != nullptr);
  CHECK(done->reason == FinishReason::Eos);
}

TEST_CASE("incremental_scan: nesting throws") {
  CHECK_THROWS_AS(incremental_scan("<think><code>x</code>"), MalformedMarkup);
}

TEST_CASE("pause soundness property: one pause per code segment, char by char") {
  Rng rng(31337);
  for (int round = 0; round < 20; ++round) {
    Trajectory t = random_trajectory(rng);
    const std::string text = serialize(t);
    const int code_segments = count_code_segments(t);
    int pauses = 0;
    for (size_t len = 1; len <= text.size(); ++len) {
      auto res = incremental_scan(std::string_view(text).substr(0, len));
      if (std::holds_alternative<PauseForTool>(res)) ++pauses;
    }
    CHECK(pauses == code_segments);
  }
}

TEST_CASE("trace jsonl: byte-stable round trip") {
  Rng rng(99);
  Trajectory t = random_trajectory(rng);
  const std::string line1 = to_jsonl_line(t);
  Trajectory back = from_jsonl_line(line1);
  CHECK(back == t);
  CHECK(to_jsonl_line(back) == line1);
}

TEST_CASE("trace file io") {
  Rng rng(4242);
  std::vector<Trajectory> traces;
  for (int i = 0; i < 8; ++i) traces.push_back(random_trajectory(rng));
  const std::string path =
      (std::filesystem::temp_directory_path() / "agentrl_traces_test.jsonl").string();
  write_trace_file(path, traces);
  auto back = read_trace_file(path);
  REQUIRE(back.size() == traces.size());
  for (size_t i = 0; i < traces.size(); ++i) CHECK(back[i] == traces[i]);
  std::filesystem::remove(path);
}
