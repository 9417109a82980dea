// Copyright 2026 The avsep Authors
// SPDX-License-Identifier: Apache-2.0

#include "avsep/attention_core.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <stdexcept>

namespace avsep {

double AttentionInputs::effective_scale() const {
  return scale.value_or(1.0 / std::sqrt(static_cast<double>(queries.cols())));
}

void AttentionInputs::validate() const {
  const auto length = static_cast<std::size_t>(queries.rows());
  if (length == 0 || queries.cols() == 0) throw std::invalid_argument("attention inputs are empty");
  if (keys.rows() != queries.rows() || keys.cols() != queries.cols()) {
    throw std::invalid_argument("keys must have the same shape as queries");
  }
  if (values.rows() != queries.rows() || values.cols() == 0) {
    throw std::invalid_argument("values must have one row per token");
  }
  if (mask.length() != length) throw std::invalid_argument("mask length does not match the token count");
  if (!queries.allFinite() || !keys.allFinite() || !values.allFinite()) {
    throw std::invalid_argument("attention inputs contain non-finite entries");
  }
  double s = effective_scale();
  if (!(s > 0.0) || !std::isfinite(s)) throw std::invalid_argument("attention scale must be positive");
}

AttentionResult masked_attention(const AttentionInputs& inputs) {
  inputs.validate();
  const Eigen::Index n = inputs.queries.rows();
  const double scale = inputs.effective_scale();
  const auto& mask = inputs.mask;

  AttentionResult result;
  result.weights = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto row = static_cast<std::size_t>(i);
    double max_logit = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (mask.blocked(row, static_cast<std::size_t>(j))) continue;
      double logit = scale * inputs.queries.row(i).dot(inputs.keys.row(j));
      result.weights(i, j) = logit;
      max_logit = std::max(max_logit, logit);
      any = true;
    }
    if (!any) throw std::domain_error("attention row " + std::to_string(i) + " has no visible key");
    double total = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (mask.blocked(row, static_cast<std::size_t>(j))) continue;
      double e = std::exp(result.weights(i, j) - max_logit);
      result.weights(i, j) = e;
      total += e;
    }
    for (Eigen::Index j = 0; j < n; ++j) {
      if (mask.visible(row, static_cast<std::size_t>(j))) result.weights(i, j) /= total;
    }
  }
  result.output = result.weights * inputs.values;
  return result;
}

std::vector<AttentionResult> masked_attention_heads(std::span<const AttentionInputs> heads) {
  std::vector<AttentionResult> out;
  out.reserve(heads.size());
  for (std::size_t h = 0; h < heads.size(); ++h) {
    if (h > 0 && !(heads[h].mask == heads[0].mask)) {
      throw std::invalid_argument("all heads must share one mask");
    }
    out.push_back(masked_attention(heads[h]));
  }
  return out;
}

AttentionGradients attention_backward(const AttentionInputs& inputs, const AttentionResult& forward,
                                      const Matrix& output_grad) {
  const double scale = inputs.effective_scale();
  const Matrix& w = forward.weights;
  Matrix weight_grad = output_grad * inputs.values.transpose();
  Matrix logit_grad(w.rows(), w.cols());
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    double dot = w.row(i).dot(weight_grad.row(i));
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      // Blocked cells carry zero weight, so their logit gradient is exactly zero.
      logit_grad(i, j) = w(i, j) == 0.0 ? 0.0 : w(i, j) * (weight_grad(i, j) - dot);
    }
  }
  AttentionGradients grads;
  grads.queries = scale * (logit_grad * inputs.keys);
  grads.keys = scale * (logit_grad.transpose() * inputs.queries);
  grads.values = w.transpose() * output_grad;
  return grads;
}

AttentionGradients sum_loss_gradients(const AttentionInputs& inputs) {
  AttentionResult forward = masked_attention(inputs);
  Matrix ones = Matrix::Ones(forward.output.rows(), forward.output.cols());
  return attention_backward(inputs, forward, ones);
}

Eigen::RowVectorXd query_key_gradient(const AttentionInputs& inputs, std::size_t query_row, std::size_t key_row) {
  AttentionResult forward = masked_attention(inputs);
  const auto n = static_cast<std::size_t>(forward.output.rows());
  if (query_row >= n || key_row >= n) throw std::out_of_range("query or key row out of range");
  Matrix upstream = Matrix::Zero(forward.output.rows(), forward.output.cols());
  upstream.row(static_cast<Eigen::Index>(query_row)).setOnes();
  AttentionGradients grads = attention_backward(inputs, forward, upstream);
  return grads.keys.row(static_cast<Eigen::Index>(key_row));
}

GradientCheckReport gradient_check(const AttentionInputs& inputs, double step) {
  if (!(step >= 1e-6 && step <= 1e-3)) throw std::invalid_argument("finite-difference step must lie in [1e-6, 1e-3]");
  inputs.validate();
  AttentionGradients analytic = sum_loss_gradients(inputs);

  GradientCheckReport report;
  auto probe = [&](Matrix AttentionInputs::*field, const Matrix& grad) {
    AttentionInputs work = inputs;
    Matrix& target = work.*field;
    for (Eigen::Index r = 0; r < target.rows(); ++r) {
      for (Eigen::Index c = 0; c < target.cols(); ++c) {
        const double original = target(r, c);
        target(r, c) = original + step;
        double plus = masked_attention(work).output.sum();
        target(r, c) = original - step;
        double minus = masked_attention(work).output.sum();
        target(r, c) = original;
        double numeric = (plus - minus) / (2.0 * step);
        if (!std::isfinite(numeric) || !std::isfinite(grad(r, c))) {
          throw std::domain_error("non-finite gradient during gradient check");
        }
        double abs_err = std::abs(numeric - grad(r, c));
        double denom = std::max({std::abs(numeric), std::abs(grad(r, c)), 1e-8});
        report.max_absolute_error = std::max(report.max_absolute_error, abs_err);
        report.max_relative_error = std::max(report.max_relative_error, abs_err / denom);
        ++report.entries;
      }
    }
  };
  probe(&AttentionInputs::queries, analytic.queries);
  probe(&AttentionInputs::keys, analytic.keys);
  probe(&AttentionInputs::values, analytic.values);
  return report;
}

AllocationReport attention_allocation(std::span<const Matrix> weights_per_layer, const TokenLayout& layout,
                                      const IndexSet& query_span, std::size_t last_k) {
  if (last_k == 0 || last_k > weights_per_layer.size()) {
    throw std::invalid_argument("allocation window of " + std::to_string(last_k) + " layers does not fit " +
                                std::to_string(weights_per_layer.size()) + " layers");
  }
  if (query_span.empty()) throw std::invalid_argument("allocation query span is empty");
  layout.validate();
  if (query_span.back() >= layout.length) throw std::invalid_argument("query span exceeds the layout");

  AllocationReport report;
  report.last_k = last_k;
  const std::size_t first_layer = weights_per_layer.size() - last_k;
  for (std::size_t l = first_layer; l < weights_per_layer.size(); ++l) {
    const Matrix& w = weights_per_layer[l];
    if (static_cast<std::size_t>(w.rows()) != layout.length || static_cast<std::size_t>(w.cols()) != layout.length) {
      throw std::invalid_argument("layer " + std::to_string(l) + " weights do not match the layout length");
    }
    LayerAllocation layer;
    layer.layer = l;
    for (std::size_t i : query_span) {
      for (std::size_t j : layout.audio_reasoning) layer.audio_mass += w(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      for (std::size_t j : layout.visual_reasoning) layer.visual_mass += w(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
    double total = layer.audio_mass + layer.visual_mass;
    if (total > 0.0) {
      layer.audio_fraction = layer.audio_mass / total;
      layer.visual_fraction = layer.visual_mass / total;
    }
    report.audio_mass += layer.audio_mass;
    report.visual_mass += layer.visual_mass;
    report.layers.push_back(layer);
  }
  double total = report.audio_mass + report.visual_mass;
  if (!(total > 0.0)) throw std::domain_error("no attention mass reaches the audio or visual reasoning span");
  report.audio_fraction = report.audio_mass / total;
  report.visual_fraction = report.visual_mass / total;
  return report;
}

TokenLayout LeakageSizes::layout() const {
  TokenLayout layout;
  std::size_t pos = prefix;
  auto take = [&](std::size_t count) {
    IndexSet set = count == 0 ? IndexSet{} : IndexSet::range(pos, pos + count - 1);
    pos += count;
    return set;
  };
  layout.video_input = take(video);
  layout.audio_input = take(audio);
  pos += question + mod;
  if (visual_reasoning > 0) {
    std::size_t open = pos++;
    layout.visual_reasoning = take(visual_reasoning);
    std::size_t close = pos++;
    layout.visual_span = IndexSet::range(open, close);
  }
  if (audio_reasoning > 0) {
    ++pos;
    layout.audio_reasoning = take(audio_reasoning);
    ++pos;
  }
  pos += summary;
  layout.length = pos;
  layout.validate();
  return layout;
}

LeakageReport leakage_probe(std::uint64_t seed, const LeakageSizes& sizes, bool use_maam) {
  if (sizes.dim == 0 || sizes.layers == 0) throw std::invalid_argument("leakage probe needs dim and layers > 0");
  const TokenLayout layout = sizes.layout();
  const MaskMatrix rules = build_maam(layout);
  const MaskMatrix mask = use_maam ? compose(build_causal(layout.length), rules) : build_causal(layout.length);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto n = static_cast<Eigen::Index>(layout.length);
  const auto d = static_cast<Eigen::Index>(sizes.dim);
  auto random_matrix = [&](Eigen::Index rows, Eigen::Index cols, double stddev) {
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = stddev * normal(rng);
    }
    return m;
  };

  LeakageReport report;
  report.length = layout.length;
  for (std::size_t i = 0; i < layout.length; ++i) {
    for (std::size_t j = 0; j <= i; ++j) report.blocked_pairs += rules.blocked(i, j) ? 1 : 0;
  }

  Matrix hidden = random_matrix(n, d, 1.0);
  const double proj_std = 1.0 / std::sqrt(static_cast<double>(d));
  for (std::size_t layer = 0; layer < sizes.layers; ++layer) {
    Matrix wq = random_matrix(d, d, proj_std);
    Matrix wk = random_matrix(d, d, proj_std);
    Matrix wv = random_matrix(d, d, proj_std);
    AttentionInputs inputs{hidden * wq, hidden * wk, hidden * wv, std::nullopt, mask};
    AttentionResult out = masked_attention(inputs);
    for (std::size_t i = 0; i < layout.length; ++i) {
      for (std::size_t j = 0; j <= i; ++j) {
        if (rules.blocked(i, j)) report.direct_leakage += out.weights(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      }
    }
    hidden += out.output;
  }
  const std::size_t query_rows = layout.visual_reasoning.size() + layout.audio_reasoning.size();
  if (query_rows > 0) {
    report.blocked_pair_mass = report.direct_leakage / static_cast<double>(query_rows * sizes.layers);
  }
  return report;
}

std::vector<Matrix> read_weight_dump(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open weight dump " + path.string());
  std::vector<Matrix> layers;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    auto shape = rec.at("shape").get<std::vector<std::size_t>>();
    auto data = rec.at("data").get<std::vector<double>>();
    std::size_t heads = 1;
    if (shape.size() == 3) {
      heads = shape[0];
      shape.erase(shape.begin());
    }
    if (shape.size() != 2 || shape[0] != shape[1] || heads == 0 || data.size() != heads * shape[0] * shape[1]) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": bad weight shape");
    }
    const auto l = static_cast<Eigen::Index>(shape[0]);
    Matrix avg = Matrix::Zero(l, l);
    for (std::size_t h = 0; h < heads; ++h) {
      avg += Eigen::Map<const Matrix>(data.data() + h * shape[0] * shape[1], l, l);
    }
    avg /= static_cast<double>(heads);
    std::size_t index = rec.contains("layer") ? rec.at("layer").get<std::size_t>() : layers.size();
    if (index != layers.size()) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": layers must appear in order");
    }
    layers.push_back(std::move(avg));
  }
  return layers;
}

void write_weight_dump(const std::filesystem::path& path, std::span<const Matrix> layers) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write weight dump " + path.string());
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const Matrix& w = layers[l];
    nlohmann::json rec;
    rec["layer"] = l;
    rec["shape"] = {w.rows(), w.cols()};
    rec["data"] = std::vector<double>(w.data(), w.data() + w.size());
    out << rec.dump() << '\n';
  }
}

}  // namespace avsep
