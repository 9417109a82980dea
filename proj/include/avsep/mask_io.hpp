// Copyright 2026 The avsep Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "avsep/mask_engine.hpp"

namespace avsep {

struct IndexRange {
  std::size_t first;
  std::size_t last;  // inclusive

  bool operator==(const IndexRange&) const = default;
};

/// Parses "1-3, 5, 8-9" into inclusive ranges. Empty text is an empty list.
std::vector<IndexRange> parse_ranges(std::string_view text);
std::string format_ranges(const IndexSet& set);

/// Declarative layout, one key per role:
///
///   length = 12
///   video_input = 1-3
///   audio_input = 5-6
///   visual_span = 7-9
///   visual_reasoning = 8
///   audio_reasoning = 11
///
/// Optional keys: video_indicators / audio_indicators (positions of the
/// modality indicator tokens, merged into the inputs when include_indicators
/// is true) and summary (query rows for attention reports).
struct LayoutSpec {
  std::size_t length = 0;
  std::vector<IndexRange> video_input;
  std::vector<IndexRange> audio_input;
  std::vector<IndexRange> visual_reasoning;
  std::vector<IndexRange> audio_reasoning;
  std::vector<IndexRange> visual_span;
  std::vector<IndexRange> video_indicators;
  std::vector<IndexRange> audio_indicators;
  bool include_indicators = false;
  std::vector<IndexRange> summary;

  /// Throws LayoutError if the resolved layout is invalid.
  TokenLayout resolve() const;
  IndexSet summary_set() const;
};

LayoutSpec parse_layout_spec(std::string_view text);
LayoutSpec load_layout_spec(const std::filesystem::path& path);

// Dense text grid: one line per row, '1' visible, '0' blocked.
std::string mask_to_text(const MaskMatrix& mask);
MaskMatrix mask_from_text(std::string_view text);

// Run-length record, little endian:
//   "AVMK" | u8 version (1) | u32 length | u8 first cell value |
//   u32 run count | runs as unsigned LEB128
// Cells are row-major; runs alternate between values starting with the first.
std::vector<std::uint8_t> mask_to_rle(const MaskMatrix& mask);
MaskMatrix mask_from_rle(const std::vector<std::uint8_t>& bytes);

}  // namespace avsep
