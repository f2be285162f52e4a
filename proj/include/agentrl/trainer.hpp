#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "agentrl/budgets.hpp"

namespace agentrl::trainer {

class ShapeMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct GrpoParams {
  double eps_low = 0.2;
  double eps_high = 0.28;  // Clip-Higher: looser upper bound
  double delta = 1e-6;     // advantage-normalisation stabiliser
  enum class LossAgg { TokenLevel, TrajectoryMean };
  LossAgg loss_agg = LossAgg::TokenLevel;
};

/**
 * Reference categorical policy used to verify the policy-gradient math.
 *
 * theta is a (features x vocab) matrix; the distribution for context feature
 * f is softmax(theta[f]). Small enough that finite differences are exact
 * company for the analytic gradient.
 */
class ToyPolicy {
 public:
  using Matrix = std::vector<double>;  // row-major features x vocab

  ToyPolicy(int features, int vocab);
  static ToyPolicy random(int features, int vocab, uint64_t seed, double scale = 0.5);

  int features() const { return features_; }
  int vocab() const { return vocab_; }

  double param(int f, int v) const { return theta_[index(f, v)]; }
  void set_param(int f, int v, double x) { theta_[index(f, v)] = x; }
  void add_scaled(const Matrix& grad, double step);

  double log_prob(int f, int v) const;
  std::vector<double> distribution_row(int f) const;

  Matrix zero_gradient() const { return Matrix(theta_.size(), 0.0); }
  size_t index(int f, int v) const { return static_cast<size_t>(f) * vocab_ + v; }

 private:
  int features_;
  int vocab_;
  std::vector<double> theta_;
};

// One policy-generated or environment-generated token of a trajectory.
struct TokenRecord {
  int feature = 0;
  int token = 0;
  double old_log_prob = 0.0;
  bool masked = false;  // environment token: excluded from every loss
};

struct GroupBatch {
  std::string problem_id;
  std::vector<std::vector<TokenRecord>> trajectories;  // size G
  std::vector<double> rewards;                         // size G
  std::vector<double> advantages;                      // size G, normalised
  bool degenerate = false;
};

struct AdvantageResult {
  std::vector<double> values;
  bool degenerate = false;  // sigma == 0: all advantages zero
};

// (R_i - mean) / (population std + delta); all-equal rewards flag degenerate
// and yield zeros.
AdvantageResult group_advantages(const std::vector<double>& rewards, double delta);

// Fills batch.advantages / batch.degenerate from batch.rewards.
void attach_advantages(GroupBatch& batch, double delta);

// Clipped importance-weighted objective; masked tokens contribute nothing,
// there is no KL term. TokenLevel divides by the group's unmasked token
// count; TrajectoryMean averages per-trajectory means.
double grpo_objective(const GroupBatch& batch, const ToyPolicy& policy, const GrpoParams& params);

// Analytic gradient of grpo_objective with respect to theta. Tokens whose
// clipped term dominates contribute zero.
ToyPolicy::Matrix grpo_gradient(const GroupBatch& batch, const ToyPolicy& policy,
                                const GrpoParams& params);

// Negative mean of unmasked log-probs; 0 when everything is masked.
double masked_sft_loss(std::span<const double> log_probs, std::span<const uint8_t> mask);

// ============================================================================
// Multi-stage budget controller
// ============================================================================

struct StageTier {
  int l_global;
  int t_global;
  int partial_n;  // segments per trajectory at this stage
};

std::vector<StageTier> default_tiers();  // (48k,48,2) -> (72k,72,3) -> (96k,96,4)

/**
 * Advances the length tier when the length truncation ratio exceeds the
 * threshold, and the tool tier when the tool truncation ratio does; the two
 * advance independently and never regress.
 */
class MultiStageController {
 public:
  explicit MultiStageController(std::vector<StageTier> tiers = default_tiers(),
                                double threshold = 0.10);

  BudgetSet update(double length_clip_ratio, double tool_clip_ratio);
  BudgetSet current() const;

  int length_tier() const { return static_cast<int>(l_idx_); }
  int tool_tier() const { return static_cast<int>(t_idx_); }
  int partial_n() const { return tiers_[l_idx_].partial_n; }

 private:
  std::vector<StageTier> tiers_;
  double threshold_;
  size_t l_idx_ = 0;
  size_t t_idx_ = 0;
};

}  // namespace agentrl::trainer
