// Copyright 2026 The avsep Authors
// SPDX-License-Identifier: Apache-2.0

#include "avsep/tag_grammar.hpp"

#include <algorithm>

namespace avsep {

namespace {

constexpr std::array<std::string_view, kTraceTagCount> kTagNames = {"mod", "v", "a", "sum", "ans"};

std::size_t rank(TraceTag tag) { return static_cast<std::size_t>(tag); }

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

struct TagToken {
  TraceTag tag;
  bool closing;
  std::size_t offset;
  std::size_t length;
};

std::optional<TagToken> match_tag(std::string_view text, std::size_t pos) {
  if (text[pos] != '<') return std::nullopt;
  std::size_t p = pos + 1;
  bool closing = false;
  if (p < text.size() && text[p] == '/') {
    closing = true;
    ++p;
  }
  for (std::size_t t = 0; t < kTraceTagCount; ++t) {
    std::string_view name = kTagNames[t];
    if (text.substr(p, name.size()) == name && p + name.size() < text.size() &&
        text[p + name.size()] == '>') {
      return TagToken{static_cast<TraceTag>(t), closing, pos, p + name.size() + 1 - pos};
    }
  }
  return std::nullopt;
}

std::vector<TagToken> tokenize(std::string_view text) {
  std::vector<TagToken> tokens;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t next = text.find('<', pos);
    if (next == std::string_view::npos) break;
    if (auto tok = match_tag(text, next)) {
      tokens.push_back(*tok);
      pos = next + tok->length;
    } else {
      pos = next + 1;
    }
  }
  return tokens;
}

std::string tag_text(TraceTag tag, bool closing) {
  std::string out = closing ? "</" : "<";
  out += tag_name(tag);
  out += '>';
  return out;
}

class TraceParser {
 public:
  explicit TraceParser(std::string_view text) : text_(text), tokens_(tokenize(text)) {
    for (std::size_t k = 0; k < tokens_.size(); ++k) {
      last_index_[rank(tokens_[k].tag)][tokens_[k].closing ? 1 : 0] = k + 1;
    }
  }

  ParseResult run() {
    std::size_t cursor = 0;
    for (std::size_t k = 0; k < tokens_.size(); ++k) {
      const TagToken& tok = tokens_[k];
      check_gap(cursor, tok.offset);
      if (tok.closing) {
        on_close(tok);
      } else {
        on_open(tok, k);
      }
      cursor = tok.offset + tok.length;
    }
    check_gap(cursor, text_.size());
    finish();

    ParseResult result;
    if (!diags_.empty()) {
      std::stable_sort(diags_.begin(), diags_.end(),
                       [](const ParseDiagnostic& a, const ParseDiagnostic& b) { return a.offset < b.offset; });
      result.diagnostics = std::move(diags_);
      return result;
    }
    SfrTrace trace;
    trace.pem = *pem_;
    trace.visual_text = std::string(content(TraceTag::Visual));
    trace.audio_text = std::string(content(TraceTag::Audio));
    trace.summary_text = std::string(content(TraceTag::Summary));
    trace.answer_text = std::string(content(TraceTag::Answer));
    for (TraceTag tag : kTraceTagOrder) {
      const auto& s = slots_[rank(tag)];
      trace.spans.push_back({tag, s.open_offset, s.close_offset + tag_text(tag, true).size()});
    }
    result.trace = std::move(trace);
    return result;
  }

 private:
  struct Slot {
    bool opened = false;
    bool closed = false;
    bool deferred = false;         // opened later than a higher-ranked tag
    bool reported_missing = false;
    bool abandoned = false;        // unwound from the stack; its closer is absorbed
    std::size_t open_offset = 0;
    std::size_t content_begin = 0;
    std::size_t close_offset = 0;
  };

  struct Open {
    TraceTag tag;
    bool ghost;  // duplicate opener, tracked only to absorb its closer
  };

  void report(DiagnosticKind kind, std::size_t offset, std::string message) {
    diags_.push_back({kind, offset, std::move(message)});
  }

  std::string_view content(TraceTag tag) const {
    const auto& s = slots_[rank(tag)];
    return text_.substr(s.content_begin, s.close_offset - s.content_begin);
  }

  bool has_later(TraceTag tag, bool closing, std::size_t after) const {
    return last_index_[rank(tag)][closing ? 1 : 0] > after + 1;
  }

  void check_gap(std::size_t begin, std::size_t end) {
    if (!stack_.empty()) return;
    for (std::size_t i = begin; i < end; ++i) {
      if (!is_space(text_[i])) {
        report(DiagnosticKind::StrayContent, i, "non-whitespace text outside of any tag");
        return;
      }
    }
  }

  void on_open(const TagToken& tok, std::size_t index) {
    // An enclosing span whose closer never shows up is unclosed, not a parent.
    while (!stack_.empty() && !stack_.back().ghost &&
           !has_later(stack_.back().tag, true, index)) {
      TraceTag u = stack_.back().tag;
      report(DiagnosticKind::UnclosedTag, slots_[rank(u)].open_offset,
             tag_text(u, false) + " is never closed");
      slots_[rank(u)].abandoned = true;
      stack_.pop_back();
    }

    Slot& slot = slots_[rank(tok.tag)];
    if (slot.opened) {
      report(DiagnosticKind::DuplicateTag, tok.offset, tag_text(tok.tag, false) + " appears more than once");
      stack_.push_back({tok.tag, true});
      return;
    }
    if (!stack_.empty()) {
      report(DiagnosticKind::NestedTag, tok.offset,
             tag_text(tok.tag, false) + " opened inside " + tag_text(stack_.back().tag, false));
    }

    bool flagged_order = false;
    for (std::size_t r = 0; r < rank(tok.tag); ++r) {
      Slot& earlier = slots_[r];
      if (earlier.opened || earlier.deferred || earlier.reported_missing) continue;
      auto expected = static_cast<TraceTag>(r);
      if (has_later(expected, false, index)) {
        earlier.deferred = true;
        if (!flagged_order) {
          report(DiagnosticKind::OutOfOrder, tok.offset,
                 tag_text(tok.tag, false) + " appears before " + tag_text(expected, false));
          flagged_order = true;
        }
      } else {
        earlier.reported_missing = true;
        report(DiagnosticKind::MissingTag, tok.offset, tag_text(expected, false) + " is missing");
      }
    }

    slot.opened = true;
    slot.open_offset = tok.offset;
    slot.content_begin = tok.offset + tok.length;
    stack_.push_back({tok.tag, false});
  }

  void on_close(const TagToken& tok) {
    Slot& slot = slots_[rank(tok.tag)];
    auto it = std::find_if(stack_.rbegin(), stack_.rend(),
                           [&](const Open& o) { return o.tag == tok.tag; });
    if (it != stack_.rend()) {
      bool ghost = it->ghost;
      // Unwind anything opened after this tag; those were already reported as nested.
      while (stack_.back().tag != tok.tag || stack_.back().ghost != ghost) {
        if (!stack_.back().ghost) slots_[rank(stack_.back().tag)].abandoned = true;
        stack_.pop_back();
      }
      stack_.pop_back();
      if (ghost) return;
      slot.closed = true;
      slot.close_offset = tok.offset;
      if (tok.tag == TraceTag::Mod) check_pem(slot);
      return;
    }
    if (slot.closed) {
      report(DiagnosticKind::DuplicateTag, tok.offset, tag_text(tok.tag, true) + " appears more than once");
    } else if (slot.abandoned) {
      slot.abandoned = false;
    } else {
      slot.reported_missing = true;
      report(DiagnosticKind::MissingTag, tok.offset,
             tag_text(tok.tag, true) + " has no matching " + tag_text(tok.tag, false));
    }
  }

  void check_pem(const Slot& slot) {
    std::string_view raw = text_.substr(slot.content_begin, slot.close_offset - slot.content_begin);
    std::string_view value = trim(raw);
    pem_ = parse_pem_label(value);
    if (!pem_) {
      report(DiagnosticKind::UnknownPemValue, slot.content_begin,
             "unknown modality label '" + std::string(value) + "'");
    }
  }

  void finish() {
    for (const Open& o : stack_) {
      if (o.ghost) continue;
      report(DiagnosticKind::UnclosedTag, slots_[rank(o.tag)].open_offset,
             tag_text(o.tag, false) + " is never closed");
    }
    for (TraceTag tag : kTraceTagOrder) {
      const Slot& s = slots_[rank(tag)];
      if (!s.opened && !s.reported_missing) {
        report(DiagnosticKind::MissingTag, text_.size(), tag_text(tag, false) + " is missing");
      }
    }
  }

  std::string_view text_;
  std::vector<TagToken> tokens_;
  // One past the index of the last opener / closer of each tag; 0 if absent.
  std::array<std::array<std::size_t, 2>, kTraceTagCount> last_index_{};
  std::array<Slot, kTraceTagCount> slots_{};
  std::vector<Open> stack_;
  std::optional<PemLabel> pem_;
  std::vector<ParseDiagnostic> diags_;
};

}  // namespace

std::string_view to_string(PemLabel label) {
  switch (label) {
    case PemLabel::Audio:
      return "Audio";
    case PemLabel::Visual:
      return "Visual";
    case PemLabel::AudioVisual:
      return "Audio-Visual";
  }
  return "";
}

std::optional<PemLabel> parse_pem_label(std::string_view text) {
  if (text == "Audio") return PemLabel::Audio;
  if (text == "Visual") return PemLabel::Visual;
  if (text == "Audio-Visual") return PemLabel::AudioVisual;
  return std::nullopt;
}

std::string_view tag_name(TraceTag tag) { return kTagNames[rank(tag)]; }

std::string_view to_string(DiagnosticKind kind) {
  switch (kind) {
    case DiagnosticKind::MissingTag:
      return "MissingTag";
    case DiagnosticKind::UnclosedTag:
      return "UnclosedTag";
    case DiagnosticKind::DuplicateTag:
      return "DuplicateTag";
    case DiagnosticKind::OutOfOrder:
      return "OutOfOrder";
    case DiagnosticKind::NestedTag:
      return "NestedTag";
    case DiagnosticKind::UnknownPemValue:
      return "UnknownPemValue";
    case DiagnosticKind::StrayContent:
      return "StrayContent";
  }
  return "";
}

bool same_content(const SfrTrace& a, const SfrTrace& b) {
  return a.pem == b.pem && a.visual_text == b.visual_text && a.audio_text == b.audio_text &&
         a.summary_text == b.summary_text && a.answer_text == b.answer_text;
}

ParseResult parse_trace(std::string_view text) { return TraceParser(text).run(); }

StructureCheck validate_structure(std::string_view text) {
  ParseResult parsed = parse_trace(text);
  return {parsed.ok(), std::move(parsed.diagnostics)};
}

std::string render_trace(const SfrTrace& trace) {
  std::string out;
  auto emit = [&](TraceTag tag, std::string_view body) {
    out += tag_text(tag, false);
    out += body;
    out += tag_text(tag, true);
  };
  emit(TraceTag::Mod, to_string(trace.pem));
  emit(TraceTag::Visual, trace.visual_text);
  emit(TraceTag::Audio, trace.audio_text);
  emit(TraceTag::Summary, trace.summary_text);
  emit(TraceTag::Answer, trace.answer_text);
  return out;
}

}  // namespace avsep
