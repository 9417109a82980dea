// Copyright 2026 The avsep Authors
// SPDX-License-Identifier: Apache-2.0

#include "avsep/text_normalize.hpp"

#include <unicode/uchar.h>
#include <unicode/unistr.h>

namespace avsep {

std::string AnswerNormalizer::normalize(std::string_view text) const {
  icu::UnicodeString u = icu::UnicodeString::fromUTF8(icu::StringPiece(text.data(), static_cast<int32_t>(text.size())));
  if (case_fold) u.foldCase(U_FOLD_CASE_DEFAULT);

  icu::UnicodeString out;
  bool pending_space = false;
  for (int32_t i = 0; i < u.length();) {
    UChar32 c = u.char32At(i);
    i += U16_LENGTH(c);
    if (u_isUWhiteSpace(c)) {
      if (collapse_whitespace) {
        pending_space = !out.isEmpty();
      } else {
        out.append(c);
      }
      continue;
    }
    if (pending_space) {
      out.append(static_cast<UChar32>(' '));
      pending_space = false;
    }
    out.append(c);
  }

  auto trailing_removable = [&](UChar32 c) {
    return u_isUWhiteSpace(c) || (strip_terminal_punctuation && u_charType(c) == U_OTHER_PUNCTUATION);
  };
  while (!out.isEmpty()) {
    UChar32 last = out.char32At(out.length() - 1);
    if (!trailing_removable(last)) break;
    out.truncate(out.length() - U16_LENGTH(last));
  }
  int32_t lead = 0;
  while (lead < out.length() && u_isUWhiteSpace(out.char32At(lead))) lead += U16_LENGTH(out.char32At(lead));
  out.remove(0, lead);

  std::string result;
  out.toUTF8String(result);
  return result;
}

}  // namespace avsep
