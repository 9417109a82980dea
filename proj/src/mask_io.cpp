// Copyright 2026 The avsep Authors
// SPDX-License-Identifier: Apache-2.0

#include "avsep/mask_io.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace avsep {

namespace pt = boost::property_tree;

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::size_t parse_index(std::string_view s) {
  s = trim(s);
  std::size_t value = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
    throw std::invalid_argument("bad index '" + std::string(s) + "'");
  }
  return value;
}

IndexSet to_set(const std::vector<IndexRange>& ranges) {
  IndexSet out;
  for (const auto& r : ranges) out = out.united(IndexSet::range(r.first, r.last));
  return out;
}

}  // namespace

std::vector<IndexRange> parse_ranges(std::string_view text) {
  std::vector<IndexRange> out;
  text = trim(text);
  if (text.empty()) return out;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t comma = text.find(',', start);
    std::string_view item = trim(text.substr(start, comma == std::string_view::npos ? text.npos : comma - start));
    std::size_t dash = item.find('-');
    IndexRange r{};
    if (dash == std::string_view::npos) {
      r.first = r.last = parse_index(item);
    } else {
      r.first = parse_index(item.substr(0, dash));
      r.last = parse_index(item.substr(dash + 1));
    }
    if (r.last < r.first) throw std::invalid_argument("descending range '" + std::string(item) + "'");
    out.push_back(r);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string format_ranges(const IndexSet& set) {
  std::string out;
  auto it = set.begin();
  while (it != set.end()) {
    std::size_t first = *it;
    std::size_t last = first;
    ++it;
    while (it != set.end() && *it == last + 1) {
      last = *it;
      ++it;
    }
    if (!out.empty()) out += ", ";
    out += std::to_string(first);
    if (last != first) out += "-" + std::to_string(last);
  }
  return out;
}

TokenLayout LayoutSpec::resolve() const {
  TokenLayout layout;
  layout.length = length;
  layout.video_input = to_set(video_input);
  layout.audio_input = to_set(audio_input);
  layout.visual_reasoning = to_set(visual_reasoning);
  layout.audio_reasoning = to_set(audio_reasoning);
  layout.visual_span = to_set(visual_span);
  if (include_indicators) {
    layout.video_input = layout.video_input.united(to_set(video_indicators));
    layout.audio_input = layout.audio_input.united(to_set(audio_indicators));
  }
  layout.validate();
  return layout;
}

IndexSet LayoutSpec::summary_set() const { return to_set(summary); }

LayoutSpec parse_layout_spec(std::string_view text) {
  pt::ptree tree;
  std::istringstream in{std::string(text)};
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw std::invalid_argument(std::string("layout spec: ") + e.what());
  }
  LayoutSpec spec;
  auto length = tree.get_optional<std::size_t>("length");
  if (!length) throw std::invalid_argument("layout spec: missing 'length'");
  spec.length = *length;
  auto ranges = [&](const char* key) { return parse_ranges(tree.get<std::string>(key, "")); };
  spec.video_input = ranges("video_input");
  spec.audio_input = ranges("audio_input");
  spec.visual_reasoning = ranges("visual_reasoning");
  spec.audio_reasoning = ranges("audio_reasoning");
  spec.visual_span = ranges("visual_span");
  spec.video_indicators = ranges("video_indicators");
  spec.audio_indicators = ranges("audio_indicators");
  spec.summary = ranges("summary");
  spec.include_indicators = tree.get<bool>("include_indicators", false);
  for (const auto& [key, _] : tree) {
    static const char* known[] = {"length", "video_input", "audio_input", "visual_reasoning", "audio_reasoning",
                                  "visual_span", "video_indicators", "audio_indicators", "summary",
                                  "include_indicators"};
    if (std::find(std::begin(known), std::end(known), key) == std::end(known)) {
      throw std::invalid_argument("layout spec: unknown key '" + key + "'");
    }
  }
  return spec;
}

LayoutSpec load_layout_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open layout spec " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_layout_spec(buf.str());
}

std::string mask_to_text(const MaskMatrix& mask) {
  std::string out;
  out.reserve(mask.length() * (mask.length() + 1));
  for (std::size_t i = 0; i < mask.length(); ++i) {
    for (std::size_t j = 0; j < mask.length(); ++j) out += mask.visible(i, j) ? '1' : '0';
    out += '\n';
  }
  return out;
}

MaskMatrix mask_from_text(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t nl = text.find('\n', start);
    std::string_view line = text.substr(start, nl == text.npos ? text.npos : nl - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!line.empty()) lines.push_back(line);
    if (nl == text.npos) break;
    start = nl + 1;
  }
  MaskMatrix mask(lines.size(), false);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].size() != lines.size()) throw std::invalid_argument("mask grid is not square");
    for (std::size_t j = 0; j < lines.size(); ++j) {
      char c = lines[i][j];
      if (c != '0' && c != '1') throw std::invalid_argument("mask grid cells must be 0 or 1");
      mask.set_visible(i, j, c == '1');
    }
  }
  return mask;
}

namespace {

constexpr std::uint8_t kRleVersion = 1;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
}

void put_varint(std::vector<std::uint8_t>& out, std::uint64_t v) {
  while (v >= 0x80) {
    out.push_back(static_cast<std::uint8_t>(v | 0x80));
    v >>= 7;
  }
  out.push_back(static_cast<std::uint8_t>(v));
}

class ByteReader {
 public:
  explicit ByteReader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  std::uint8_t u8() {
    if (pos_ >= bytes_.size()) throw std::invalid_argument("mask record truncated");
    return bytes_[pos_++];
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(u8()) << (8 * b);
    return v;
  }
  std::uint64_t varint() {
    std::uint64_t v = 0;
    for (int shift = 0; shift < 64; shift += 7) {
      std::uint8_t byte = u8();
      v |= static_cast<std::uint64_t>(byte & 0x7f) << shift;
      if (!(byte & 0x80)) return v;
    }
    throw std::invalid_argument("mask record has an overlong varint");
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> mask_to_rle(const MaskMatrix& mask) {
  std::vector<std::uint64_t> runs;
  const std::size_t n = mask.length();
  std::uint8_t first = n > 0 && mask.visible(0, 0) ? 1 : 0;
  std::uint8_t current = first;
  std::uint64_t run = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      std::uint8_t cell = mask.visible(i, j) ? 1 : 0;
      if (cell != current) {
        runs.push_back(run);
        current = cell;
        run = 0;
      }
      ++run;
    }
  }
  if (run > 0) runs.push_back(run);

  std::vector<std::uint8_t> out = {'A', 'V', 'M', 'K', kRleVersion};
  put_u32(out, static_cast<std::uint32_t>(n));
  out.push_back(first);
  put_u32(out, static_cast<std::uint32_t>(runs.size()));
  for (auto r : runs) put_varint(out, r);
  return out;
}

MaskMatrix mask_from_rle(const std::vector<std::uint8_t>& bytes) {
  ByteReader in(bytes);
  if (in.u8() != 'A' || in.u8() != 'V' || in.u8() != 'M' || in.u8() != 'K') {
    throw std::invalid_argument("not a mask record");
  }
  if (in.u8() != kRleVersion) throw std::invalid_argument("unsupported mask record version");
  const std::size_t n = in.u32();
  std::uint8_t value = in.u8();
  if (value > 1) throw std::invalid_argument("mask record has a bad first value");
  const std::uint32_t run_count = in.u32();
  MaskMatrix mask(n, false);
  const std::uint64_t total = static_cast<std::uint64_t>(n) * n;
  std::uint64_t cell = 0;
  for (std::uint32_t r = 0; r < run_count; ++r) {
    std::uint64_t len = in.varint();
    if (len == 0 || cell + len > total) throw std::invalid_argument("mask record runs do not fit the matrix");
    for (std::uint64_t k = 0; k < len; ++k, ++cell) mask.set_visible(cell / n, cell % n, value == 1);
    value ^= 1;
  }
  if (cell != total || !in.done()) throw std::invalid_argument("mask record runs do not cover the matrix");
  return mask;
}

}  // namespace avsep
