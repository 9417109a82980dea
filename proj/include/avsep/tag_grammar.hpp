// Copyright 2026 The avsep Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace avsep {

/// Preferred evidence modality of an instance.
enum class PemLabel { Audio, Visual, AudioVisual };

/// Serialized forms are "Audio", "Visual" and "Audio-Visual".
std::string_view to_string(PemLabel label);
std::optional<PemLabel> parse_pem_label(std::string_view text);

/// The five control tags, in the only order a trace may use them.
enum class TraceTag { Mod = 0, Visual = 1, Audio = 2, Summary = 3, Answer = 4 };

inline constexpr std::size_t kTraceTagCount = 5;
inline constexpr std::array<TraceTag, kTraceTagCount> kTraceTagOrder = {
    TraceTag::Mod, TraceTag::Visual, TraceTag::Audio, TraceTag::Summary, TraceTag::Answer};

/// Bare tag name, e.g. "mod" or "sum".
std::string_view tag_name(TraceTag tag);

struct TraceSpan {
  TraceTag tag;
  std::size_t start;  // offset of the opening tag
  std::size_t end;    // one past the closing tag

  bool operator==(const TraceSpan&) const = default;
};

/// A parsed separate-then-fuse output. Segment texts are the exact bytes
/// between the opening and closing tags.
struct SfrTrace {
  PemLabel pem = PemLabel::AudioVisual;
  std::string visual_text;
  std::string audio_text;
  std::string summary_text;
  std::string answer_text;
  std::vector<TraceSpan> spans;

  bool operator==(const SfrTrace&) const = default;
};

/// Equality on the label and the four segments, ignoring offsets.
bool same_content(const SfrTrace& a, const SfrTrace& b);

enum class DiagnosticKind {
  MissingTag,
  UnclosedTag,
  DuplicateTag,
  OutOfOrder,
  NestedTag,
  UnknownPemValue,
  StrayContent,
};

std::string_view to_string(DiagnosticKind kind);

/// Every diagnostic is fatal. Offsets are byte offsets into the UTF-8 input.
struct ParseDiagnostic {
  DiagnosticKind kind;
  std::size_t offset;
  std::string message;

  bool operator==(const ParseDiagnostic&) const = default;
};

/// Either a trace or a non-empty list of diagnostics.
struct ParseResult {
  std::optional<SfrTrace> trace;
  std::vector<ParseDiagnostic> diagnostics;

  bool ok() const { return trace.has_value(); }
};

/// Parses a tagged trace. Never throws on malformed input; any byte sequence
/// is accepted and yields either a trace or diagnostics.
ParseResult parse_trace(std::string_view text);

struct StructureCheck {
  bool valid = false;
  std::vector<ParseDiagnostic> diagnostics;
};

/// True iff parse_trace succeeds. Diagnostics are forwarded unchanged.
StructureCheck validate_structure(std::string_view text);

/// Canonical form: tags back to back, no whitespace between them.
std::string render_trace(const SfrTrace& trace);

}  // namespace avsep
