// Copyright 2026 The avsep Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "avsep/tag_grammar.hpp"
#include "avsep/text_normalize.hpp"

namespace avsep {

/// Stage-two reward weights.
struct RewardConfig {
  double lambda_acc = 1.0;
  double lambda_mps = 0.2;
  AnswerNormalizer normalizer;

  void validate() const;
};

/// 1 iff the text is a well-formed trace whose modality label equals `gold`.
int reward_mps(std::string_view output_text, PemLabel gold);

/// 1 iff the answer span matches the ground truth after normalization.
/// Malformed traces score 0.
int reward_acc(std::string_view output_text, std::string_view ground_truth,
               const AnswerNormalizer& normalizer = {});

/// Stage one optimizes the structure/modality reward alone.
int reward_stage1(std::string_view output_text, PemLabel gold);

double reward_stage2(std::string_view output_text, PemLabel gold, std::string_view ground_truth,
                     const RewardConfig& cfg = {});

enum class KlEstimator {
  /// exp(ref - new) - (ref - new) - 1
  K3,
  /// (ref - new)^2 / 2
  K2,
};

struct GrpoConfig {
  double clip_alpha = 0.2;
  double kl_beta = 0.04;
  double eps_stab = 1e-8;
  KlEstimator kl_estimator = KlEstimator::K3;

  void validate() const;
};

/// One group of G responses to the same prompt. Log-probabilities are
/// sequence-level (summed over tokens).
struct RolloutGroup {
  std::string group_id;
  std::vector<double> rewards;
  std::vector<double> logp_new;
  std::vector<double> logp_old;
  std::vector<double> logp_ref;

  std::size_t size() const { return rewards.size(); }
  void validate() const;
};

/// (r_i - mean) / sqrt(population variance + eps_stab). eps_stab may be 0,
/// in which case a zero-variance group yields all-zero advantages.
std::vector<double> group_advantages(std::span<const double> rewards, double eps_stab);

double kl_estimate(std::span<const double> logp_new, std::span<const double> logp_ref,
                   KlEstimator estimator = KlEstimator::K3);

struct GrpoResult {
  double objective = 0.0;          // clipped surrogate mean minus beta * KL
  double surrogate = 0.0;          // clipped surrogate mean
  double unclipped_surrogate = 0.0;
  double kl = 0.0;
  std::vector<double> advantages;
  std::vector<double> ratios;
  std::vector<double> terms;       // per-sample min(rho A, clip(rho) A)
};

/// Group objective to be maximized. Throws std::domain_error on non-finite ratios.
GrpoResult grpo_objective(const RolloutGroup& group, const GrpoConfig& cfg);

/// d(objective)/d(logp_new_i). At a clip boundary the gradient of the
/// branch selected by min() is returned.
std::vector<double> grpo_objective_gradient(const RolloutGroup& group, const GrpoConfig& cfg);

}  // namespace avsep
