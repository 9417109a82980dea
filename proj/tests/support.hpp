// Copyright 2026 The avsep Authors
// SPDX-License-Identifier: Apache-2.0

// Independent reference implementations and generators shared by the unit
// tests and the acceptance binary. Nothing here calls into the code under
// test except for the plain data types.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "avsep/attention_core.hpp"
#include "avsep/mask_engine.hpp"
#include "avsep/tag_grammar.hpp"

namespace avsep::testing {

inline std::filesystem::path fixture(const std::string& name) {
  return std::filesystem::path(AVSEP_FIXTURE_DIR) / name;
}

inline std::filesystem::path config_file(const std::string& name) {
  return std::filesystem::path(AVSEP_CONFIG_DIR) / name;
}

inline std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("avsep_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// ---------------------------------------------------------------- layouts

// Random layout honoring the input-before-reasoning order. Roles are drawn
// independently per position so empty sets and scattered sets both occur.
inline TokenLayout random_layout(std::mt19937_64& rng, std::size_t max_length = 64) {
  std::uniform_int_distribution<std::size_t> len_dist(1, max_length);
  TokenLayout layout;
  layout.length = len_dist(rng);
  const std::size_t split = std::uniform_int_distribution<std::size_t>(0, layout.length)(rng);
  std::uniform_int_distribution<int> input_role(0, 2);
  for (std::size_t i = 0; i < split; ++i) {
    switch (input_role(rng)) {
      case 0: layout.video_input.insert(i); break;
      case 1: layout.audio_input.insert(i); break;
      default: break;
    }
  }
  if (split < layout.length) {
    std::uniform_int_distribution<std::size_t> pos(split, layout.length - 1);
    std::size_t a = pos(rng), b = pos(rng);
    if (a > b) std::swap(a, b);
    const bool has_v_span = std::bernoulli_distribution(0.8)(rng);
    if (has_v_span) {
      for (std::size_t i = a; i <= b; ++i) {
        layout.visual_span.insert(i);
        const bool boundary = (i == a || i == b) && b > a;
        if (!boundary && std::bernoulli_distribution(0.9)(rng)) layout.visual_reasoning.insert(i);
      }
    }
    for (std::size_t i = split; i < layout.length; ++i) {
      if (has_v_span && i >= a && i <= b) continue;
      if (std::bernoulli_distribution(0.5)(rng)) layout.audio_reasoning.insert(i);
    }
  }
  return layout;
}

// Cell-by-cell evaluation of the causal rule and the three blocking rules.
inline bool oracle_visible(const TokenLayout& layout, std::size_t i, std::size_t j) {
  const std::set<std::size_t> kv(layout.video_input.begin(), layout.video_input.end());
  const std::set<std::size_t> ka(layout.audio_input.begin(), layout.audio_input.end());
  const std::set<std::size_t> qv(layout.visual_reasoning.begin(), layout.visual_reasoning.end());
  const std::set<std::size_t> qa(layout.audio_reasoning.begin(), layout.audio_reasoning.end());
  const std::set<std::size_t> kvs(layout.visual_span.begin(), layout.visual_span.end());
  if (j > i) return false;
  if (qv.count(i) && ka.count(j)) return false;
  if (qa.count(i) && kv.count(j)) return false;
  if (qa.count(i) && kvs.count(j)) return false;
  return true;
}

inline std::vector<std::vector<bool>> oracle_mask(const TokenLayout& layout) {
  std::vector<std::vector<bool>> out(layout.length, std::vector<bool>(layout.length));
  for (std::size_t i = 0; i < layout.length; ++i) {
    for (std::size_t j = 0; j < layout.length; ++j) out[i][j] = oracle_visible(layout, i, j);
  }
  return out;
}

// The six-token layout used throughout: video 0, audio 1, v-span 2, a-span 3.
inline TokenLayout fixture_layout() {
  TokenLayout layout;
  layout.length = 6;
  layout.video_input = {0};
  layout.audio_input = {1};
  layout.visual_reasoning = {2};
  layout.visual_span = {2};
  layout.audio_reasoning = {3};
  return layout;
}

// ---------------------------------------------------------------- attention

inline Matrix random_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols, double sd = 1.0) {
  std::normal_distribution<double> dist(0.0, sd);
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = dist(rng);
  }
  return m;
}

inline MaskMatrix mask_from_oracle(const std::vector<std::vector<bool>>& cells) {
  MaskMatrix mask(cells.size(), false);
  for (std::size_t i = 0; i < cells.size(); ++i) {
    for (std::size_t j = 0; j < cells.size(); ++j) mask.set_visible(i, j, cells[i][j]);
  }
  return mask;
}

// Dense softmax over explicitly filtered visible columns, using plain loops.
inline std::vector<std::vector<double>> oracle_weights(const Matrix& q, const Matrix& k, double scale,
                                                       const MaskMatrix& mask) {
  const std::size_t n = static_cast<std::size_t>(q.rows());
  std::vector<std::vector<double>> w(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::size_t> cols;
    for (std::size_t j = 0; j < n; ++j) {
      if (mask.visible(i, j)) cols.push_back(j);
    }
    double best = -std::numeric_limits<double>::infinity();
    std::vector<double> logits;
    for (std::size_t j : cols) {
      double s = 0.0;
      for (Eigen::Index c = 0; c < q.cols(); ++c) s += q(i, c) * k(j, c);
      logits.push_back(s * scale);
      best = std::max(best, logits.back());
    }
    double z = 0.0;
    for (double& l : logits) {
      l = std::exp(l - best);
      z += l;
    }
    for (std::size_t t = 0; t < cols.size(); ++t) w[i][cols[t]] = logits[t] / z;
  }
  return w;
}

inline double oracle_sum_loss(const AttentionInputs& in) {
  auto w = oracle_weights(in.queries, in.keys, in.effective_scale(), in.mask);
  double total = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    for (std::size_t j = 0; j < w.size(); ++j) {
      for (Eigen::Index c = 0; c < in.values.cols(); ++c) total += w[i][j] * in.values(j, c);
    }
  }
  return total;
}

// ---------------------------------------------------------------- traces

inline std::string random_body(std::mt19937_64& rng) {
  static const std::vector<std::string> pieces = {"a", "dog", " ", "barks", "\n", "3", "?", "é", "鳥", "x y",
                                                  "<", ">", "&", "mod", "/", "sum"};
  std::uniform_int_distribution<std::size_t> count(0, 6), pick(0, pieces.size() - 1);
  std::string out;
  for (std::size_t n = count(rng); n > 0; --n) out += pieces[pick(rng)];
  // A literal tag inside a body would change the structure; keep bodies tag-free.
  for (std::size_t p = out.find('<'); p != std::string::npos; p = out.find('<')) out.replace(p, 1, "(");
  return out;
}

inline SfrTrace random_trace(std::mt19937_64& rng) {
  SfrTrace t;
  t.pem = static_cast<PemLabel>(std::uniform_int_distribution<int>(0, 2)(rng));
  t.visual_text = random_body(rng);
  t.audio_text = random_body(rng);
  t.summary_text = random_body(rng);
  t.answer_text = random_body(rng);
  return t;
}

}  // namespace avsep::testing
