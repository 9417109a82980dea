// Copyright 2026 The avsep Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <string_view>

namespace avsep {

/// Steps applied before comparing a predicted answer with the gold answer.
/// All steps are on by default.
struct AnswerNormalizer {
  bool case_fold = true;
  bool collapse_whitespace = true;
  bool strip_terminal_punctuation = true;

  /// Unicode case fold, trim, collapse whitespace runs to one space, and drop
  /// trailing sentence punctuation (. , ! ? and the like; brackets and quotes
  /// stay). Invalid UTF-8 sequences are kept as U+FFFD.
  std::string normalize(std::string_view text) const;

  bool equivalent(std::string_view a, std::string_view b) const {
    return normalize(a) == normalize(b);
  }
};

}  // namespace avsep
