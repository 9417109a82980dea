// Copyright 2026 The avsep Authors
// SPDX-License-Identifier: Apache-2.0

#include "avsep/rl_core.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace avsep {

void RewardConfig::validate() const {
  if (!(lambda_acc >= 0.0) || !(lambda_mps >= 0.0) || !std::isfinite(lambda_acc) || !std::isfinite(lambda_mps)) {
    throw std::invalid_argument("reward weights must be finite and nonnegative");
  }
}

int reward_mps(std::string_view output_text, PemLabel gold) {
  ParseResult parsed = parse_trace(output_text);
  return parsed.ok() && parsed.trace->pem == gold ? 1 : 0;
}

int reward_acc(std::string_view output_text, std::string_view ground_truth, const AnswerNormalizer& normalizer) {
  ParseResult parsed = parse_trace(output_text);
  if (!parsed.ok()) return 0;
  return normalizer.equivalent(parsed.trace->answer_text, ground_truth) ? 1 : 0;
}

int reward_stage1(std::string_view output_text, PemLabel gold) { return reward_mps(output_text, gold); }

double reward_stage2(std::string_view output_text, PemLabel gold, std::string_view ground_truth,
                     const RewardConfig& cfg) {
  cfg.validate();
  return cfg.lambda_acc * reward_acc(output_text, ground_truth, cfg.normalizer) +
         cfg.lambda_mps * reward_mps(output_text, gold);
}

void GrpoConfig::validate() const {
  if (!(clip_alpha > 0.0 && clip_alpha < 1.0)) throw std::invalid_argument("clip_alpha must lie in (0, 1)");
  if (!(kl_beta >= 0.0) || !std::isfinite(kl_beta)) throw std::invalid_argument("kl_beta must be nonnegative");
  if (!(eps_stab > 0.0) || !std::isfinite(eps_stab)) throw std::invalid_argument("eps_stab must be positive");
}

void RolloutGroup::validate() const {
  const std::size_t g = rewards.size();
  if (g < 2) throw std::invalid_argument("rollout group needs at least two responses");
  if (logp_new.size() != g || logp_old.size() != g || logp_ref.size() != g) {
    throw std::invalid_argument("rollout group arrays differ in length");
  }
  auto finite = [](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
  };
  if (!finite(rewards) || !finite(logp_new) || !finite(logp_old) || !finite(logp_ref)) {
    throw std::domain_error("rollout group contains non-finite values");
  }
}

std::vector<double> group_advantages(std::span<const double> rewards, double eps_stab) {
  if (rewards.size() < 2) throw std::invalid_argument("group advantages need at least two rewards");
  if (!(eps_stab >= 0.0)) throw std::invalid_argument("eps_stab must be nonnegative");
  const double g = static_cast<double>(rewards.size());
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= g;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  var /= g;
  const double denom = std::sqrt(var + eps_stab);
  std::vector<double> adv(rewards.size(), 0.0);
  if (denom == 0.0) return adv;
  for (std::size_t i = 0; i < rewards.size(); ++i) adv[i] = (rewards[i] - mean) / denom;
  return adv;
}

double kl_estimate(std::span<const double> logp_new, std::span<const double> logp_ref, KlEstimator estimator) {
  if (logp_new.size() != logp_ref.size()) throw std::invalid_argument("KL inputs differ in length");
  if (logp_new.empty()) throw std::invalid_argument("KL inputs are empty");
  double total = 0.0;
  for (std::size_t i = 0; i < logp_new.size(); ++i) {
    if (!std::isfinite(logp_new[i]) || !std::isfinite(logp_ref[i])) {
      throw std::domain_error("KL inputs contain non-finite values");
    }
    const double d = logp_ref[i] - logp_new[i];
    // expm1(d) - d keeps precision for small d; the result is >= 0 for all d.
    total += estimator == KlEstimator::K3 ? std::max(0.0, std::expm1(d) - d) : 0.5 * d * d;
  }
  return total / static_cast<double>(logp_new.size());
}

GrpoResult grpo_objective(const RolloutGroup& group, const GrpoConfig& cfg) {
  group.validate();
  cfg.validate();
  GrpoResult out;
  out.advantages = group_advantages(group.rewards, cfg.eps_stab);
  const std::size_t g = group.size();
  out.ratios.resize(g);
  out.terms.resize(g);
  for (std::size_t i = 0; i < g; ++i) {
    const double rho = std::exp(group.logp_new[i] - group.logp_old[i]);
    if (!std::isfinite(rho)) throw std::domain_error("importance ratio is not finite");
    const double a = out.advantages[i];
    const double clipped = std::clamp(rho, 1.0 - cfg.clip_alpha, 1.0 + cfg.clip_alpha);
    out.ratios[i] = rho;
    out.terms[i] = std::min(rho * a, clipped * a);
    out.surrogate += out.terms[i];
    out.unclipped_surrogate += rho * a;
  }
  out.surrogate /= static_cast<double>(g);
  out.unclipped_surrogate /= static_cast<double>(g);
  out.kl = kl_estimate(group.logp_new, group.logp_ref, cfg.kl_estimator);
  out.objective = out.surrogate - cfg.kl_beta * out.kl;
  return out;
}

std::vector<double> grpo_objective_gradient(const RolloutGroup& group, const GrpoConfig& cfg) {
  group.validate();
  cfg.validate();
  const std::vector<double> adv = group_advantages(group.rewards, cfg.eps_stab);
  const double g = static_cast<double>(group.size());
  std::vector<double> grad(group.size());
  for (std::size_t i = 0; i < group.size(); ++i) {
    const double rho = std::exp(group.logp_new[i] - group.logp_old[i]);
    if (!std::isfinite(rho)) throw std::domain_error("importance ratio is not finite");
    const double a = adv[i];
    const double clipped = std::clamp(rho, 1.0 - cfg.clip_alpha, 1.0 + cfg.clip_alpha);
    // min() picks the clipped branch only when it is strictly smaller; that
    // branch is constant in logp_new once rho lies outside the clip range.
    const bool clip_active = clipped * a < rho * a;
    const double surrogate_grad = clip_active ? 0.0 : a * rho;
    const double d = group.logp_ref[i] - group.logp_new[i];
    const double kl_grad = cfg.kl_estimator == KlEstimator::K3 ? 1.0 - std::exp(d) : -d;
    grad[i] = (surrogate_grad - cfg.kl_beta * kl_grad) / g;
  }
  return grad;
}

}  // namespace avsep
