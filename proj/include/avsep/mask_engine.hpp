// Copyright 2026 The avsep Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace avsep {

/// Sorted, duplicate-free token positions.
class IndexSet {
 public:
  IndexSet() = default;
  IndexSet(std::initializer_list<std::size_t> indices);
  explicit IndexSet(std::vector<std::size_t> indices);

  /// Inclusive range [first, last].
  static IndexSet range(std::size_t first, std::size_t last);

  bool contains(std::size_t index) const;
  bool empty() const { return items_.empty(); }
  std::size_t size() const { return items_.size(); }
  std::size_t front() const { return items_.front(); }
  std::size_t back() const { return items_.back(); }
  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }
  const std::vector<std::size_t>& values() const { return items_; }

  void insert(std::size_t index);
  void erase(std::size_t index);
  IndexSet united(const IndexSet& other) const;

  bool operator==(const IndexSet&) const = default;

 private:
  std::vector<std::size_t> items_;
};

/// Token roles over one sequence. Names follow the roles the sets play when
/// masking: video/audio input keys, visual/audio reasoning queries and the
/// whole visual span (reasoning plus its boundary tags).
struct TokenLayout {
  std::size_t length = 0;
  IndexSet video_input;
  IndexSet audio_input;
  IndexSet visual_reasoning;
  IndexSet audio_reasoning;
  IndexSet visual_span;

  /// Throws LayoutError naming the first violated invariant.
  void validate() const;

  bool operator==(const TokenLayout&) const = default;
};

class LayoutError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// L x L visibility matrix. Blocked cells stand for an additive -inf.
class MaskMatrix {
 public:
  MaskMatrix() = default;
  MaskMatrix(std::size_t length, bool visible);

  std::size_t length() const { return length_; }
  bool visible(std::size_t row, std::size_t col) const { return cells_[row * length_ + col] != 0; }
  bool blocked(std::size_t row, std::size_t col) const { return !visible(row, col); }
  void set_visible(std::size_t row, std::size_t col, bool visible) {
    cells_[row * length_ + col] = visible ? 1 : 0;
  }

  std::span<const std::uint8_t> row(std::size_t i) const {
    return {cells_.data() + i * length_, length_};
  }
  std::size_t visible_count() const;

  /// Additive bias for cell (i, j): 0 if visible, otherwise the most
  /// negative finite value of T.
  template <typename T>
  T additive(std::size_t row, std::size_t col) const {
    return visible(row, col) ? T(0) : std::numeric_limits<T>::lowest();
  }

  bool operator==(const MaskMatrix&) const = default;

 private:
  std::size_t length_ = 0;
  std::vector<std::uint8_t> cells_;
};

/// Cell (i, j) visible iff j <= i. Throws std::invalid_argument for L = 0.
MaskMatrix build_causal(std::size_t length);

/// Modality-asymmetric rules alone: visual reasoning queries cannot see audio
/// inputs; audio reasoning queries cannot see video inputs or the visual span.
/// Every other cell is visible.
MaskMatrix build_maam(const TokenLayout& layout);

/// Blocked iff blocked in either operand.
MaskMatrix compose(const MaskMatrix& causal, const MaskMatrix& maam);

/// Convenience: compose(build_causal(L), build_maam(layout)).
MaskMatrix build_composite(const TokenLayout& layout);

/// Row i of the composite mask restricted to columns 0..i, without building
/// the matrix. 1 = visible.
std::vector<std::uint8_t> incremental_row(const TokenLayout& layout, std::size_t row);

/// Per-position role flags for step-by-step decoding. Each appended token
/// gets its visibility row in O(position) work.
class DecodingMask {
 public:
  enum Role : std::uint8_t {
    kNone = 0,
    kVideoInput = 1 << 0,
    kAudioInput = 1 << 1,
    kVisualReasoning = 1 << 2,
    kAudioReasoning = 1 << 3,
    kVisualSpan = 1 << 4,
  };

  DecodingMask() = default;
  explicit DecodingMask(const TokenLayout& layout);

  /// Appends a token with the given role flags and returns its row.
  std::vector<std::uint8_t> append(std::uint8_t roles);
  std::vector<std::uint8_t> row(std::size_t position) const;
  std::size_t size() const { return roles_.size(); }

 private:
  std::vector<std::uint8_t> roles_;
};

/// Token ids that delimit modalities and control tags in a token stream.
/// Input payloads lie strictly between a begin and an end indicator.
struct MarkerTable {
  std::int64_t video_begin = -1;
  std::int64_t video_end = -1;
  std::int64_t audio_begin = -1;
  std::int64_t audio_end = -1;
  std::int64_t mod_open = -1, mod_close = -1;
  std::int64_t v_open = -1, v_close = -1;
  std::int64_t a_open = -1, a_close = -1;
  std::int64_t sum_open = -1, sum_close = -1;
  std::int64_t ans_open = -1, ans_close = -1;
  /// Count the indicator tokens themselves as input positions.
  bool include_indicators = false;
};

class LocateError : public std::invalid_argument {
 public:
  enum class Kind { MissingTag, DuplicateTag, NestedTag, CrossingTags, UnbalancedIndicator, ReasoningBeforeInput };

  LocateError(Kind kind, const std::string& what) : std::invalid_argument(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

/// Scans a token stream for modality indicators and control tags. Multiple
/// video/audio segments are allowed; each control tag may occur at most once.
TokenLayout locate_layout(std::span<const std::int64_t> tokens, const MarkerTable& markers);

}  // namespace avsep
