#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>

#include "agentrl/protocol.hpp"

namespace agentrl::reward {

struct RewardParams {
  double alpha = 0.1;   // base tool-usage reward
  double beta = 0.05;   // per-invocation increment
  double r_max = 0.5;   // tool-usage cap
};

struct RewardBreakdown {
  int r_acc = 0;        //, {0,1}
  double r_tool = 0.0;
  double r_total = 0.0;
  int n_code = 0;
};

// Last \boxed{...} expression in `text`, brace-balanced; nullopt if absent.
std::optional<std::string> extract_boxed(std::string_view text);

// 1 when the expressions match after normalization: exact string equality,
// or numeric equality within 1e-9 after rational/decimal parsing. A missing
// boxed answer scores 0 rather than erroring.
int verify_answer(std::string_view predicted, std::string_view truth);

double tool_reward(int n_code, const RewardParams& p);

RewardBreakdown total_reward(const protocol::Trajectory& t, std::string_view truth,
                             const RewardParams& p = {});

// Truth sets: JSONL lines {problem_id, answer}.
using TruthSet = std::unordered_map<std::string, std::string>;
TruthSet read_truth_file(const std::string& path);
void write_truth_file(const std::string& path, const TruthSet& truth);

}  // namespace agentrl::reward
