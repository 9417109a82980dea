// Copyright 2026 The avsep Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "avsep/mask_engine.hpp"

namespace avsep {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Single-head attention inputs. Queries and keys are L x d, values L x d_v.
struct AttentionInputs {
  Matrix queries;
  Matrix keys;
  Matrix values;
  std::optional<double> scale;  // defaults to 1 / sqrt(d)
  MaskMatrix mask;

  double effective_scale() const;
  /// Throws std::invalid_argument on inconsistent shapes, non-finite
  /// entries or a non-positive scale.
  void validate() const;
};

struct AttentionResult {
  Matrix output;   // L x d_v
  Matrix weights;  // L x L, rows sum to 1, exactly 0 where blocked
};

/// Softmax over the visible logits of each row only; blocked cells never
/// enter the reduction. Throws std::domain_error if a row has no visible cell.
AttentionResult masked_attention(const AttentionInputs& inputs);

/// Multi-head variant: heads are independent and share one mask.
std::vector<AttentionResult> masked_attention_heads(std::span<const AttentionInputs> heads);

struct AttentionGradients {
  Matrix queries;
  Matrix keys;
  Matrix values;
};

/// Backward pass for an arbitrary upstream gradient d(loss)/d(output).
AttentionGradients attention_backward(const AttentionInputs& inputs, const AttentionResult& forward,
                                      const Matrix& output_grad);

/// Gradients of sum(output).
AttentionGradients sum_loss_gradients(const AttentionInputs& inputs);

/// Gradient of sum(output row `query_row`) with respect to key row `key_row`.
/// Exactly zero when the pair is blocked.
Eigen::RowVectorXd query_key_gradient(const AttentionInputs& inputs, std::size_t query_row, std::size_t key_row);

struct GradientCheckReport {
  double max_relative_error = 0.0;
  double max_absolute_error = 0.0;
  std::size_t entries = 0;
};

/// Compares the analytic gradients of sum(output) w.r.t. queries, keys and
/// values against central differences with the given step in [1e-6, 1e-3].
/// Relative error per entry is |a - n| / max(|a|, |n|, 1e-8); the floor only
/// matters when both gradients vanish.
GradientCheckReport gradient_check(const AttentionInputs& inputs, double step);

inline constexpr std::size_t kDefaultAllocationWindow = 16;

struct LayerAllocation {
  std::size_t layer = 0;
  double audio_mass = 0.0;
  double visual_mass = 0.0;
  double audio_fraction = 0.0;
  double visual_fraction = 0.0;
};

/// How query rows split their attention between the audio and visual
/// reasoning tokens over the last `last_k` layers.
struct AllocationReport {
  std::size_t last_k = kDefaultAllocationWindow;
  std::vector<LayerAllocation> layers;
  double audio_mass = 0.0;
  double visual_mass = 0.0;
  double audio_fraction = 0.0;
  double visual_fraction = 0.0;
};

/// Per layer, sums weights from `query_span` rows into the audio and visual
/// reasoning columns; the aggregate normalizes the summed masses. Throws
/// std::invalid_argument if last_k exceeds the layer count or the span is
/// empty, std::domain_error if no mass reaches either span.
AllocationReport attention_allocation(std::span<const Matrix> weights_per_layer, const TokenLayout& layout,
                                      const IndexSet& query_span, std::size_t last_k = kDefaultAllocationWindow);

/// Token counts for the synthetic leakage sequence, laid out in this order:
/// prefix, video, audio, question, mod, <v> visual </v>, <a> audio </a>, summary.
/// A reasoning span with zero tokens is left out together with its tags.
struct LeakageSizes {
  std::size_t prefix = 2;
  std::size_t video = 8;
  std::size_t audio = 8;
  std::size_t question = 4;
  std::size_t mod = 3;
  std::size_t visual_reasoning = 6;
  std::size_t audio_reasoning = 6;
  std::size_t summary = 4;
  std::size_t dim = 16;
  std::size_t layers = 2;

  TokenLayout layout() const;
};

struct LeakageReport {
  /// Total attention mass on the blocked query-key pairs, summed over layers.
  double direct_leakage = 0.0;
  /// direct_leakage per reasoning query row per layer.
  double blocked_pair_mass = 0.0;
  std::size_t blocked_pairs = 0;
  std::size_t length = 0;
};

/// Runs a seeded random residual stack of single-head attention layers over
/// the synthetic sequence, with or without the modality rules.
LeakageReport leakage_probe(std::uint64_t seed, const LeakageSizes& sizes, bool use_maam);

/// Weight dumps are JSONL, one layer per line:
///   {"layer": 0, "shape": [L, L], "data": [...row-major...]}
/// A shape of [H, L, L] is averaged over heads before use.
std::vector<Matrix> read_weight_dump(const std::filesystem::path& path);
void write_weight_dump(const std::filesystem::path& path, std::span<const Matrix> layers);

}  // namespace avsep
