// Copyright 2026 The avsep Authors
// SPDX-License-Identifier: Apache-2.0

#include "avsep/mask_engine.hpp"

#include <algorithm>
#include <array>
#include <optional>
#include <utility>

namespace avsep {

// ---------------------------------------------------------------- IndexSet

IndexSet::IndexSet(std::initializer_list<std::size_t> indices) : IndexSet(std::vector<std::size_t>(indices)) {}

IndexSet::IndexSet(std::vector<std::size_t> indices) : items_(std::move(indices)) {
  std::sort(items_.begin(), items_.end());
  items_.erase(std::unique(items_.begin(), items_.end()), items_.end());
}

IndexSet IndexSet::range(std::size_t first, std::size_t last) {
  IndexSet out;
  if (last < first) return out;
  out.items_.reserve(last - first + 1);
  for (std::size_t i = first; i <= last; ++i) out.items_.push_back(i);
  return out;
}

bool IndexSet::contains(std::size_t index) const {
  return std::binary_search(items_.begin(), items_.end(), index);
}

void IndexSet::insert(std::size_t index) {
  auto it = std::lower_bound(items_.begin(), items_.end(), index);
  if (it == items_.end() || *it != index) items_.insert(it, index);
}

void IndexSet::erase(std::size_t index) {
  auto it = std::lower_bound(items_.begin(), items_.end(), index);
  if (it != items_.end() && *it == index) items_.erase(it);
}

IndexSet IndexSet::united(const IndexSet& other) const {
  IndexSet out;
  std::set_union(items_.begin(), items_.end(), other.items_.begin(), other.items_.end(),
                 std::back_inserter(out.items_));
  return out;
}

// ---------------------------------------------------------------- TokenLayout

namespace {

bool intersects(const IndexSet& a, const IndexSet& b) {
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (*ia == *ib) return true;
    if (*ia < *ib) {
      ++ia;
    } else {
      ++ib;
    }
  }
  return false;
}

}  // namespace

void TokenLayout::validate() const {
  if (length == 0) throw LayoutError("layout length must be positive");
  const std::array<std::pair<const char*, const IndexSet*>, 5> sets = {{
      {"video_input", &video_input},
      {"audio_input", &audio_input},
      {"visual_reasoning", &visual_reasoning},
      {"audio_reasoning", &audio_reasoning},
      {"visual_span", &visual_span},
  }};
  for (const auto& [name, set] : sets) {
    if (!set->empty() && set->back() >= length) {
      throw LayoutError(std::string(name) + " index " + std::to_string(set->back()) +
                        " is outside [0, " + std::to_string(length) + ")");
    }
  }
  if (intersects(video_input, audio_input)) {
    throw LayoutError("video_input and audio_input overlap");
  }
  if (!std::includes(visual_span.begin(), visual_span.end(), visual_reasoning.begin(), visual_reasoning.end())) {
    throw LayoutError("visual_reasoning is not contained in visual_span");
  }
  if (intersects(visual_span, audio_reasoning)) {
    throw LayoutError("visual_span and audio_reasoning overlap");
  }
  std::optional<std::size_t> last_input;
  for (const IndexSet* s : {&video_input, &audio_input}) {
    if (!s->empty()) last_input = std::max(last_input.value_or(0), s->back());
  }
  std::optional<std::size_t> first_reasoning;
  for (const IndexSet* s : {&visual_reasoning, &audio_reasoning, &visual_span}) {
    if (!s->empty()) first_reasoning = std::min(first_reasoning.value_or(length), s->front());
  }
  if (last_input && first_reasoning && *last_input >= *first_reasoning) {
    throw LayoutError("input position " + std::to_string(*last_input) +
                      " does not precede reasoning position " + std::to_string(*first_reasoning));
  }
}

// ---------------------------------------------------------------- MaskMatrix

MaskMatrix::MaskMatrix(std::size_t length, bool visible)
    : length_(length), cells_(length * length, visible ? 1 : 0) {}

std::size_t MaskMatrix::visible_count() const {
  return static_cast<std::size_t>(std::count(cells_.begin(), cells_.end(), std::uint8_t{1}));
}

MaskMatrix build_causal(std::size_t length) {
  if (length == 0) throw std::invalid_argument("causal mask length must be positive");
  MaskMatrix mask(length, false);
  for (std::size_t i = 0; i < length; ++i) {
    for (std::size_t j = 0; j <= i; ++j) mask.set_visible(i, j, true);
  }
  return mask;
}

MaskMatrix build_maam(const TokenLayout& layout) {
  layout.validate();
  MaskMatrix mask(layout.length, true);
  for (std::size_t i : layout.visual_reasoning) {
    for (std::size_t j : layout.audio_input) mask.set_visible(i, j, false);
  }
  for (std::size_t i : layout.audio_reasoning) {
    for (std::size_t j : layout.video_input) mask.set_visible(i, j, false);
    for (std::size_t j : layout.visual_span) mask.set_visible(i, j, false);
  }
  return mask;
}

MaskMatrix compose(const MaskMatrix& causal, const MaskMatrix& maam) {
  if (causal.length() != maam.length()) {
    throw std::invalid_argument("cannot compose masks of length " + std::to_string(causal.length()) + " and " +
                                std::to_string(maam.length()));
  }
  MaskMatrix out(causal.length(), false);
  for (std::size_t i = 0; i < out.length(); ++i) {
    for (std::size_t j = 0; j < out.length(); ++j) {
      out.set_visible(i, j, causal.visible(i, j) && maam.visible(i, j));
    }
  }
  return out;
}

MaskMatrix build_composite(const TokenLayout& layout) {
  return compose(build_causal(layout.length), build_maam(layout));
}

// ---------------------------------------------------------------- incremental rows

namespace {

std::vector<std::uint8_t> role_flags(const TokenLayout& layout) {
  std::vector<std::uint8_t> roles(layout.length, DecodingMask::kNone);
  auto mark = [&](const IndexSet& set, std::uint8_t flag) {
    for (std::size_t i : set) roles[i] |= flag;
  };
  mark(layout.video_input, DecodingMask::kVideoInput);
  mark(layout.audio_input, DecodingMask::kAudioInput);
  mark(layout.visual_reasoning, DecodingMask::kVisualReasoning);
  mark(layout.audio_reasoning, DecodingMask::kAudioReasoning);
  mark(layout.visual_span, DecodingMask::kVisualSpan);
  return roles;
}

std::vector<std::uint8_t> row_from_roles(std::span<const std::uint8_t> roles, std::size_t row) {
  std::uint8_t hidden = DecodingMask::kNone;
  if (roles[row] & DecodingMask::kVisualReasoning) hidden |= DecodingMask::kAudioInput;
  if (roles[row] & DecodingMask::kAudioReasoning) hidden |= DecodingMask::kVideoInput | DecodingMask::kVisualSpan;
  std::vector<std::uint8_t> out(row + 1);
  for (std::size_t j = 0; j <= row; ++j) out[j] = (roles[j] & hidden) ? 0 : 1;
  return out;
}

}  // namespace

std::vector<std::uint8_t> incremental_row(const TokenLayout& layout, std::size_t row) {
  if (row >= layout.length) {
    throw std::out_of_range("row " + std::to_string(row) + " is outside a layout of length " +
                            std::to_string(layout.length));
  }
  layout.validate();
  auto roles = role_flags(layout);
  return row_from_roles(roles, row);
}

DecodingMask::DecodingMask(const TokenLayout& layout) {
  layout.validate();
  roles_ = role_flags(layout);
}

std::vector<std::uint8_t> DecodingMask::append(std::uint8_t roles) {
  roles_.push_back(roles);
  return row_from_roles(roles_, roles_.size() - 1);
}

std::vector<std::uint8_t> DecodingMask::row(std::size_t position) const {
  if (position >= roles_.size()) throw std::out_of_range("decoding position out of range");
  return row_from_roles(roles_, position);
}

// ---------------------------------------------------------------- locate_layout

namespace {

struct TagPair {
  const char* name;
  std::int64_t open_id;
  std::int64_t close_id;
  std::optional<std::size_t> open;
  std::optional<std::size_t> close;
};

std::string pos_str(std::size_t p) { return "position " + std::to_string(p); }

}  // namespace

TokenLayout locate_layout(std::span<const std::int64_t> tokens, const MarkerTable& markers) {
  using Kind = LocateError::Kind;
  std::array<TagPair, 5> pairs = {{
      {"mod", markers.mod_open, markers.mod_close, {}, {}},
      {"v", markers.v_open, markers.v_close, {}, {}},
      {"a", markers.a_open, markers.a_close, {}, {}},
      {"sum", markers.sum_open, markers.sum_close, {}, {}},
      {"ans", markers.ans_open, markers.ans_close, {}, {}},
  }};

  TokenLayout layout;
  layout.length = tokens.size();
  if (tokens.empty()) throw LayoutError("token sequence is empty");

  enum class Segment { None, Video, Audio };
  Segment segment = Segment::None;
  std::size_t segment_begin = 0;
  std::optional<std::size_t> last_indicator;
  std::optional<std::size_t> first_tag;

  auto matches = [](std::int64_t id, std::int64_t marker) { return marker >= 0 && id == marker; };

  for (std::size_t p = 0; p < tokens.size(); ++p) {
    const std::int64_t id = tokens[p];
    bool is_begin_v = matches(id, markers.video_begin);
    bool is_begin_a = matches(id, markers.audio_begin);
    bool is_end_v = matches(id, markers.video_end);
    bool is_end_a = matches(id, markers.audio_end);
    if (is_begin_v || is_begin_a) {
      if (segment != Segment::None) {
        throw LocateError(Kind::UnbalancedIndicator, "modality segment opened inside another at " + pos_str(p));
      }
      segment = is_begin_v ? Segment::Video : Segment::Audio;
      segment_begin = p;
      last_indicator = p;
      continue;
    }
    if (is_end_v || is_end_a) {
      Segment expected = is_end_v ? Segment::Video : Segment::Audio;
      if (segment != expected) {
        throw LocateError(Kind::UnbalancedIndicator, "modality end indicator without a begin at " + pos_str(p));
      }
      IndexSet& target = segment == Segment::Video ? layout.video_input : layout.audio_input;
      std::size_t first = markers.include_indicators ? segment_begin : segment_begin + 1;
      std::size_t last = markers.include_indicators ? p : p - 1;
      if (first <= last) target = target.united(IndexSet::range(first, last));
      segment = Segment::None;
      last_indicator = p;
      continue;
    }
    for (TagPair& pair : pairs) {
      bool is_open = matches(id, pair.open_id);
      bool is_close = matches(id, pair.close_id);
      if (!is_open && !is_close) continue;
      auto& slot = is_open ? pair.open : pair.close;
      if (slot) {
        throw LocateError(Kind::DuplicateTag, std::string(is_open ? "<" : "</") + pair.name + "> repeated at " +
                                                  pos_str(p));
      }
      slot = p;
      if (!first_tag) first_tag = p;
    }
  }
  if (segment != Segment::None) {
    throw LocateError(Kind::UnbalancedIndicator, "modality segment starting at " + pos_str(segment_begin) +
                                                     " is never closed");
  }
  if (first_tag && last_indicator && *first_tag < *last_indicator) {
    throw LocateError(Kind::ReasoningBeforeInput, "control tag at " + pos_str(*first_tag) +
                                                      " precedes modality indicator at " + pos_str(*last_indicator));
  }

  for (const TagPair& pair : pairs) {
    if (pair.open.has_value() != pair.close.has_value()) {
      throw LocateError(Kind::MissingTag, std::string("<") + pair.name + "> is not paired");
    }
    if (pair.open && *pair.close < *pair.open) {
      throw LocateError(Kind::MissingTag, std::string("</") + pair.name + "> precedes its opening tag");
    }
  }
  for (std::size_t x = 0; x < pairs.size(); ++x) {
    for (std::size_t y = 0; y < pairs.size(); ++y) {
      if (x == y || !pairs[x].open || !pairs[y].open) continue;
      std::size_t xo = *pairs[x].open, xc = *pairs[x].close;
      std::size_t yo = *pairs[y].open, yc = *pairs[y].close;
      if (xo < yo && yc < xc) {
        throw LocateError(Kind::NestedTag, std::string("<") + pairs[y].name + "> is nested inside <" +
                                               pairs[x].name + ">");
      }
      if (xo < yo && yo < xc && xc < yc) {
        throw LocateError(Kind::CrossingTags, std::string("<") + pairs[x].name + "> and <" + pairs[y].name +
                                                  "> cross");
      }
    }
  }

  const TagPair& v = pairs[1];
  const TagPair& a = pairs[2];
  if (v.open) {
    layout.visual_span = IndexSet::range(*v.open, *v.close);
    if (*v.close > *v.open + 1) layout.visual_reasoning = IndexSet::range(*v.open + 1, *v.close - 1);
  }
  if (a.open && *a.close > *a.open + 1) {
    layout.audio_reasoning = IndexSet::range(*a.open + 1, *a.close - 1);
  }
  layout.validate();
  return layout;
}

}  // namespace avsep
