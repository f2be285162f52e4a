#pragma once

namespace agentrl {

// Segment budgets bound one generation iteration; global limits bound the
// whole trajectory. Hitting a global limit finishes the trajectory, hitting
// a segment budget suspends it.
struct BudgetSet {
  int l_seg = 24576;     // new tokens per iteration
  int t_seg = 24;        // tool calls per iteration
  int l_global = 49152;  // total trajectory tokens
  int t_global = 48;     // total tool calls

  bool valid() const {
    return l_seg > 0 && t_seg > 0 && l_seg <= l_global && t_seg <= t_global;
  }

  // Budgets for N segments per trajectory.
  static BudgetSet with_partial_n(int l_global, int t_global, int n) {
    if (n < 1) n = 1;
    BudgetSet b;
    b.l_global = l_global;
    b.t_global = t_global;
    b.l_seg = (l_global + n - 1) / n;
    b.t_seg = (t_global + n - 1) / n;
    if (b.t_seg < 1) b.t_seg = 1;
    return b;
  }
};

}  // namespace agentrl
