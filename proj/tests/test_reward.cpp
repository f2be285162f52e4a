#include <doctest.h>

#include <cmath>

#include "agentrl/reward.hpp"

using namespace agentrl;
using namespace agentrl::reward;

TEST_CASE("extract_boxed: last balanced expression wins") {
  CHECK(*extract_boxed("so \\boxed{12} then \\boxed{34}") == "34");
  CHECK(*extract_boxed("\\boxed{\\frac{1}{2}}") == "\\frac{1}{2}");
  CHECK_FALSE(extract_boxed("no marker here").has_value());
  CHECK_FALSE(extract_boxed("\\boxed{unbalanced").has_value());
}

TEST_CASE("verify_answer: numeric equality after parsing") {
  CHECK(verify_answer("\\boxed{042}", "42") == 1);
  CHECK(verify_answer("\\boxed{42}", "43") == 0);
}

TEST_CASE("verify_answer: rational vs decimal") {
  // Oracle: 1/2 parsed as a rational equals 0.5 exactly.
  CHECK(verify_answer("\\boxed{1/2}", "0.5") == 1);
  CHECK(verify_answer("\\boxed{3/4}", "0.75") == 1);
  CHECK(verify_answer("\\boxed{1/3}", "0.5") == 0);
}

TEST_CASE("verify_answer: missing boxed marker scores zero") {
  CHECK(verify_answer("the answer is 42", "42") == 0);
  CHECK(verify_answer("", "42") == 0);
}

TEST_CASE("verify_answer: string equality route for non-numeric answers") {
  CHECK(verify_answer("\\boxed{x+1}", "x + 1") == 1);
  CHECK(verify_answer("\\boxed{x+2}", "x + 1") == 0);
}

TEST_CASE("tool_reward formula") {
  RewardParams p;  // alpha 0.1, beta 0.05, r_max 0.5
  CHECK(tool_reward(0, p) == 0.0);
  CHECK(tool_reward(3, p) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(tool_reward(100, p) == 0.5);
}

namespace {

protocol::Trajectory make_traj(const std::string& final_think, int n_code) {
  protocol::Trajectory t;
  t.problem_id = "p";
  for (int i = 0; i < n_code; ++i) {
    t.segments.push_back(protocol::make_segment(protocol::SegmentKind::Think, "hmm"));
    t.segments.push_back(protocol::make_segment(protocol::SegmentKind::Code, "print(1)"));
    t.segments.push_back(protocol::make_segment(protocol::SegmentKind::Interpreter, "1"));
  }
  t.segments.push_back(protocol::make_segment(protocol::SegmentKind::Think, final_think));
  t.finished = true;
  t.finish_reason = protocol::FinishReason::Eos;
  return t;
}

}  // namespace

TEST_CASE("total_reward composition") {
  RewardParams p;
  auto correct3 = total_reward(make_traj("\\boxed{7}", 3), "7", p);
  CHECK(correct3.r_acc == 1);
  CHECK(correct3.n_code == 3);
  CHECK(correct3.r_total == doctest::Approx(1.25));

  auto wrong5 = total_reward(make_traj("\\boxed{8}", 5), "7", p);
  CHECK(wrong5.r_acc == 0);
  CHECK(wrong5.r_total == 0.0);

  auto correct0 = total_reward(make_traj("\\boxed{7}", 0), "7", p);
  CHECK(correct0.r_total == doctest::Approx(1.0));
  CHECK(correct0.r_tool == 0.0);
}

TEST_CASE("reward range and monotonicity properties") {
  RewardParams p;
  double prev = 0.0;
  for (int n = 0; n <= 40; ++n) {
    auto b = total_reward(make_traj("\\boxed{7}", n), "7", p);
    CHECK(b.r_total >= prev);                      // nondecreasing in n_code
    CHECK(b.r_total >= 1.0);
    CHECK(b.r_total <= 1.0 + p.r_max);
    if (n >= 10) CHECK(b.r_total == doctest::Approx(1.0 + p.r_max));  // cap binds
    prev = b.r_total;
  }
}

TEST_CASE("indicator soundness: wrong answer kills the tool bonus") {
  RewardParams p;
  for (int n : {0, 1, 5, 30}) {
    auto b = total_reward(make_traj("\\boxed{99}", n), "7", p);
    CHECK(b.r_total == 0.0);
  }
}

TEST_CASE("exhaustive reward table: n_code in [0,20] x correctness") {
  // Acceptance criterion 6: exact match with min(R_max, alpha+beta*n).
  RewardParams p;
  for (int n = 0; n <= 20; ++n) {
    for (int correct = 0; correct <= 1; ++correct) {
      auto t = make_traj(correct ? "\\boxed{7}" : "\\boxed{8}", n);
      auto b = total_reward(t, "7", p);
      const double expected_tool = n > 0 ? std::min(p.r_max, p.alpha + p.beta * n) : 0.0;
      const double expected_total = correct ? 1.0 + expected_tool : 0.0;
      CHECK(b.r_acc == correct);
      CHECK(b.n_code == n);
      CHECK(b.r_total == expected_total);
      if (correct) CHECK(b.r_tool == expected_tool);
    }
  }
}
