#include "agentrl/trainer.hpp"

#include <algorithm>
#include <cmath>

#include "agentrl/rng.hpp"

namespace agentrl::trainer {

ToyPolicy::ToyPolicy(int features, int vocab) : features_(features), vocab_(vocab) {
  if (features < 1 || vocab < 2) throw std::invalid_argument("policy needs features>=1, vocab>=2");
  theta_.assign(static_cast<size_t>(features) * vocab, 0.0);
}

ToyPolicy ToyPolicy::random(int features, int vocab, uint64_t seed, double scale) {
  ToyPolicy p(features, vocab);
  Rng rng(seed);
  for (auto& x : p.theta_) x = rng.normal(0.0, scale);
  return p;
}

void ToyPolicy::add_scaled(const Matrix& grad, double step) {
  if (grad.size() != theta_.size()) throw ShapeMismatch("gradient shape != theta shape");
  for (size_t i = 0; i < theta_.size(); ++i) theta_[i] += step * grad[i];
}

double ToyPolicy::log_prob(int f, int v) const {
  const double* row = theta_.data() + static_cast<size_t>(f) * vocab_;
  double mx = row[0];
  for (int j = 1; j < vocab_; ++j) mx = std::max(mx, row[j]);
  double sum = 0.0;
  for (int j = 0; j < vocab_; ++j) sum += std::exp(row[j] - mx);
  return row[v] - mx - std::log(sum);
}

std::vector<double> ToyPolicy::distribution_row(int f) const {
  const double* row = theta_.data() + static_cast<size_t>(f) * vocab_;
  double mx = row[0];
  for (int j = 1; j < vocab_; ++j) mx = std::max(mx, row[j]);
  double sum = 0.0;
  std::vector<double> out(static_cast<size_t>(vocab_));
  for (int j = 0; j < vocab_; ++j) {
    out[j] = std::exp(row[j] - mx);
    sum += out[j];
  }
  for (auto& x : out) x /= sum;
  return out;
}

AdvantageResult group_advantages(const std::vector<double>& rewards, double delta) {
  if (rewards.size() < 2) throw std::invalid_argument("group needs G >= 2 rewards");
  const double g = static_cast<double>(rewards.size());
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= g;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  var /= g;  // population variance, no Bessel correction
  const double sigma = std::sqrt(var);

  AdvantageResult out;
  out.values.resize(rewards.size());
  if (sigma == 0.0) {
    out.degenerate = true;
    std::fill(out.values.begin(), out.values.end(), 0.0);
    return out;
  }
  for (size_t i = 0; i < rewards.size(); ++i) out.values[i] = (rewards[i] - mean) / (sigma + delta);
  return out;
}

void attach_advantages(GroupBatch& batch, double delta) {
  auto res = group_advantages(batch.rewards, delta);
  batch.advantages = std::move(res.values);
  batch.degenerate = res.degenerate;
}

namespace {

void check_shapes(const GroupBatch& batch) {
  const size_t g = batch.trajectories.size();
  if (g == 0) throw ShapeMismatch("empty group");
  if (batch.rewards.size() != g || batch.advantages.size() != g)
    throw ShapeMismatch("rewards/advantages size != G");
}

// Shared walk over unmasked tokens. visit(i, record, advantage, ratio,
// clipped_dominates) is called once per unmasked token; weights handle the
// aggregation mode.
template <typename Visit>
void walk_tokens(const GroupBatch& batch, const ToyPolicy& policy, const GrpoParams& params,
                 Visit&& visit) {
  for (size_t i = 0; i < batch.trajectories.size(); ++i) {
    const double adv = batch.advantages[i];
    for (const TokenRecord& rec : batch.trajectories[i]) {
      if (rec.masked) continue;
      const double lp_new = policy.log_prob(rec.feature, rec.token);
      const double ratio = std::exp(lp_new - rec.old_log_prob);
      const double clipped =
          std::clamp(ratio, 1.0 - params.eps_low, 1.0 + params.eps_high);
      const double unclipped_term = ratio * adv;
      const double clipped_term = clipped * adv;
      // min(r*A, clip(r)*A): gradient flows only through the unclipped branch.
      const bool clip_dominates = clipped_term < unclipped_term;
      visit(i, rec, adv, ratio, std::min(unclipped_term, clipped_term), clip_dominates);
    }
  }
}

std::vector<long long> unmasked_counts(const GroupBatch& batch) {
  std::vector<long long> out(batch.trajectories.size(), 0);
  for (size_t i = 0; i < batch.trajectories.size(); ++i)
    for (const auto& rec : batch.trajectories[i])
      if (!rec.masked) ++out[i];
  return out;
}

}  // namespace

double grpo_objective(const GroupBatch& batch, const ToyPolicy& policy, const GrpoParams& params) {
  check_shapes(batch);
  const auto counts = unmasked_counts(batch);

  if (params.loss_agg == GrpoParams::LossAgg::TokenLevel) {
    long long total = 0;
    for (auto c : counts) total += c;
    if (total == 0) return 0.0;
    double sum = 0.0;
    walk_tokens(batch, policy, params,
                [&](size_t, const TokenRecord&, double, double, double term, bool) { sum += term; });
    return sum / static_cast<double>(total);
  }

  // TrajectoryMean: per-trajectory mean over its unmasked tokens, averaged
  // over the group.
  std::vector<double> per_traj(batch.trajectories.size(), 0.0);
  walk_tokens(batch, policy, params,
              [&](size_t i, const TokenRecord&, double, double, double term, bool) {
                per_traj[i] += term;
              });
  double sum = 0.0;
  for (size_t i = 0; i < per_traj.size(); ++i)
    if (counts[i] > 0) sum += per_traj[i] / static_cast<double>(counts[i]);
  return sum / static_cast<double>(batch.trajectories.size());
}

ToyPolicy::Matrix grpo_gradient(const GroupBatch& batch, const ToyPolicy& policy,
                                const GrpoParams& params) {
  check_shapes(batch);
  const auto counts = unmasked_counts(batch);
  long long total = 0;
  for (auto c : counts) total += c;

  ToyPolicy::Matrix grad = policy.zero_gradient();
  if (total == 0) return grad;

  const double g = static_cast<double>(batch.trajectories.size());
  walk_tokens(batch, policy, params,
              [&](size_t i, const TokenRecord& rec, double adv, double ratio, double,
                  bool clip_dominates) {
                if (clip_dominates) return;  // constant branch, no gradient
                double scale;
                if (params.loss_agg == GrpoParams::LossAgg::TokenLevel) {
                  scale = 1.0 / static_cast<double>(total);
                } else {
                  scale = counts[i] > 0 ? 1.0 / (g * static_cast<double>(counts[i])) : 0.0;
                }
                // d/dtheta [A * r] = A * r * dlogpi/dtheta;
                // dlogpi(v|f)/dtheta[f,v'] = 1[v=v'] - pi(v'|f).
                const double coeff = scale * adv * ratio;
                const auto dist = policy.distribution_row(rec.feature);
                const size_t base = policy.index(rec.feature, 0);
                for (int v = 0; v < policy.vocab(); ++v) grad[base + v] -= coeff * dist[v];
                grad[policy.index(rec.feature, rec.token)] += coeff;
              });
  return grad;
}

double masked_sft_loss(std::span<const double> log_probs, std::span<const uint8_t> mask) {
  if (log_probs.size() != mask.size()) throw ShapeMismatch("log_probs/mask length mismatch");
  double sum = 0.0;
  long long n = 0;
  for (size_t i = 0; i < log_probs.size(); ++i) {
    if (mask[i]) continue;
    sum += log_probs[i];
    ++n;
  }
  if (n == 0) return 0.0;
  return -sum / static_cast<double>(n);
}

// ============================================================================
// Multi-stage controller
// ============================================================================

std::vector<StageTier> default_tiers() {
  return {{49152, 48, 2}, {73728, 72, 3}, {98304, 96, 4}};
}

MultiStageController::MultiStageController(std::vector<StageTier> tiers, double threshold)
    : tiers_(std::move(tiers)), threshold_(threshold) {
  if (tiers_.empty()) throw std::invalid_argument("controller needs >= 1 tier");
}

BudgetSet MultiStageController::current() const {
  const StageTier& lt = tiers_[l_idx_];
  const StageTier& tt = tiers_[t_idx_];
  BudgetSet b = BudgetSet::with_partial_n(lt.l_global, tt.t_global, lt.partial_n);
  return b;
}

BudgetSet MultiStageController::update(double length_clip_ratio, double tool_clip_ratio) {
  if (length_clip_ratio > threshold_ && l_idx_ + 1 < tiers_.size()) ++l_idx_;
  if (tool_clip_ratio > threshold_ && t_idx_ + 1 < tiers_.size()) ++t_idx_;
  return current();
}

}  // namespace agentrl::trainer
