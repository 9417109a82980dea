// Copyright 2026 The avsep Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "avsep/tag_grammar.hpp"
#include "support.hpp"

namespace avsep {
namespace {

std::vector<DiagnosticKind> kinds(const std::vector<ParseDiagnostic>& d) {
  std::vector<DiagnosticKind> out;
  for (const auto& x : d) out.push_back(x.kind);
  return out;
}

bool has_kind(const ParseResult& r, DiagnosticKind k) {
  return std::any_of(r.diagnostics.begin(), r.diagnostics.end(), [&](const auto& d) { return d.kind == k; });
}

TEST(PemLabel, SerializedForms) {
  EXPECT_EQ(to_string(PemLabel::Audio), "Audio");
  EXPECT_EQ(to_string(PemLabel::Visual), "Visual");
  EXPECT_EQ(to_string(PemLabel::AudioVisual), "Audio-Visual");
  EXPECT_EQ(parse_pem_label("Audio-Visual"), PemLabel::AudioVisual);
  EXPECT_FALSE(parse_pem_label("audio"));
  EXPECT_FALSE(parse_pem_label("AudioVisual"));
}

TEST(ParseTrace, WellFormed) {
  const std::string text = "<mod>Audio</mod><v>sheep visible</v><a>barking only</a><sum>dog barks</sum><ans>collie</ans>";
  auto r = parse_trace(text);
  ASSERT_TRUE(r.ok());
  EXPECT_TRUE(r.diagnostics.empty());
  EXPECT_EQ(r.trace->pem, PemLabel::Audio);
  EXPECT_EQ(r.trace->visual_text, "sheep visible");
  EXPECT_EQ(r.trace->audio_text, "barking only");
  EXPECT_EQ(r.trace->summary_text, "dog barks");
  EXPECT_EQ(r.trace->answer_text, "collie");
  ASSERT_EQ(r.trace->spans.size(), 5u);
  EXPECT_EQ(r.trace->spans[0], (TraceSpan{TraceTag::Mod, 0, 16}));
  EXPECT_EQ(r.trace->spans[1].start, 16u);
  EXPECT_EQ(r.trace->spans[4].end, text.size());
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(r.trace->spans[i].tag, kTraceTagOrder[i]);
    if (i) EXPECT_LE(r.trace->spans[i - 1].end, r.trace->spans[i].start);
  }
}

TEST(ParseTrace, AudioBeforeVisualIsOutOfOrder) {
  const std::string text = "<mod>Audio</mod><a>x</a><v>y</v><sum>s</sum><ans>z</ans>";
  auto r = parse_trace(text);
  EXPECT_FALSE(r.ok());
  ASSERT_FALSE(r.diagnostics.empty());
  EXPECT_EQ(r.diagnostics.front().kind, DiagnosticKind::OutOfOrder);
  EXPECT_EQ(r.diagnostics.front().offset, text.find("<a>"));
}

TEST(ParseTrace, UnknownLabel) {
  auto r = parse_trace("<mod>Sound</mod><v>y</v><a>x</a><sum>s</sum><ans>z</ans>");
  EXPECT_FALSE(r.ok());
  EXPECT_EQ(kinds(r.diagnostics), std::vector<DiagnosticKind>{DiagnosticKind::UnknownPemValue});
  EXPECT_EQ(r.diagnostics[0].offset, 5u);
}

TEST(ParseTrace, LabelIsTrimmedButNotCaseFolded) {
  EXPECT_TRUE(parse_trace("<mod>\n Visual \t</mod><v></v><a></a><sum></sum><ans></ans>").ok());
  EXPECT_FALSE(parse_trace("<mod>visual</mod><v></v><a></a><sum></sum><ans></ans>").ok());
}

TEST(ParseTrace, WhitespaceBetweenTagsTolerated) {
  auto r = parse_trace("  <mod>Audio</mod>\n<v>a</v>\n\n<a>b</a> <sum>c</sum>\t<ans>d</ans>\n");
  ASSERT_TRUE(r.ok());
  EXPECT_EQ(r.trace->answer_text, "d");
}

TEST(ParseTrace, StrayText) {
  auto r = parse_trace("<mod>Audio</mod>oops<v>a</v><a>b</a><sum>c</sum><ans>d</ans>");
  EXPECT_EQ(kinds(r.diagnostics), std::vector<DiagnosticKind>{DiagnosticKind::StrayContent});
  EXPECT_EQ(r.diagnostics[0].offset, 16u);
  EXPECT_TRUE(has_kind(parse_trace("<mod>Audio</mod><v>a</v><a>b</a><sum>c</sum><ans>d</ans>tail"),
                       DiagnosticKind::StrayContent));
}

TEST(ParseTrace, DuplicateClosingTagAtSecondOccurrence) {
  const std::string text = "<mod>Audio</mod><v>a</v></v><a>b</a><sum>c</sum><ans>d</ans>";
  auto r = parse_trace(text);
  EXPECT_EQ(kinds(r.diagnostics), std::vector<DiagnosticKind>{DiagnosticKind::DuplicateTag});
  EXPECT_EQ(r.diagnostics[0].offset, text.find("</v></v>") + 4);
}

TEST(ParseTrace, DuplicateOpeningTag) {
  auto r = parse_trace("<mod>Audio</mod><v>a</v><v>a</v><a>b</a><sum>c</sum><ans>d</ans>");
  EXPECT_FALSE(r.ok());
  EXPECT_TRUE(has_kind(r, DiagnosticKind::DuplicateTag));
}

TEST(ParseTrace, Nested) {
  auto r = parse_trace("<mod>Audio</mod><v>a<a>b</a></v><sum>c</sum><ans>d</ans>");
  EXPECT_FALSE(r.ok());
  EXPECT_TRUE(has_kind(r, DiagnosticKind::NestedTag));
}

TEST(ParseTrace, MissingSpan) {
  const std::string text = "<mod>Audio</mod><v>a</v><sum>c</sum><ans>d</ans>";
  auto r = parse_trace(text);
  EXPECT_EQ(kinds(r.diagnostics), std::vector<DiagnosticKind>{DiagnosticKind::MissingTag});
}

TEST(ParseTrace, OrphanCloser) {
  auto r = parse_trace("<mod>Audio</mod><v>a</v>b</a><sum>c</sum><ans>d</ans>");
  EXPECT_FALSE(r.ok());
  EXPECT_TRUE(has_kind(r, DiagnosticKind::MissingTag));
}

TEST(ParseTrace, MultibyteOffsetsAreBytes) {
  const std::string text = "<mod>Audio</mod><v>鳥</v>x<a>b</a><sum>c</sum><ans>d</ans>";
  auto r = parse_trace(text);
  ASSERT_EQ(r.diagnostics.size(), 1u);
  EXPECT_EQ(r.diagnostics[0].offset, text.find("x<a>"));
}

TEST(ValidateStructure, Examples) {
  auto good = validate_structure("<mod>Visual</mod><v>a</v><a>b</a><sum>c</sum><ans>d</ans>");
  EXPECT_TRUE(good.valid);
  EXPECT_TRUE(good.diagnostics.empty());

  auto unclosed = validate_structure("<mod>Visual</mod><v>a</v><a>b</a><sum>c<ans>d</ans>");
  EXPECT_FALSE(unclosed.valid);
  EXPECT_EQ(kinds(unclosed.diagnostics), std::vector<DiagnosticKind>{DiagnosticKind::UnclosedTag});

  auto empty = validate_structure("");
  EXPECT_FALSE(empty.valid);
  EXPECT_EQ(kinds(empty.diagnostics), std::vector<DiagnosticKind>(5, DiagnosticKind::MissingTag));
}

TEST(RenderTrace, Canonical) {
  SfrTrace t;
  t.pem = PemLabel::Visual;
  t.visual_text = "a";
  t.audio_text = "b";
  t.summary_text = "c";
  t.answer_text = "d";
  EXPECT_EQ(render_trace(t), "<mod>Visual</mod><v>a</v><a>b</a><sum>c</sum><ans>d</ans>");
}

TEST(RenderTrace, EmptySegments) {
  SfrTrace t;
  t.pem = PemLabel::AudioVisual;
  const std::string text = render_trace(t);
  EXPECT_EQ(text, "<mod>Audio-Visual</mod><v></v><a></a><sum></sum><ans></ans>");
  auto r = parse_trace(text);
  ASSERT_TRUE(r.ok());
  EXPECT_TRUE(same_content(*r.trace, t));
}

TEST(RenderTrace, RoundTripRandom) {
  std::mt19937_64 rng(11);
  for (int n = 0; n < 500; ++n) {
    SfrTrace t = testing::random_trace(rng);
    const std::string text = render_trace(t);
    auto r = parse_trace(text);
    ASSERT_TRUE(r.ok()) << text;
    EXPECT_TRUE(same_content(*r.trace, t)) << text;
    EXPECT_EQ(render_trace(*r.trace), text);
  }
}

TEST(ParseTrace, EveryOtherOrderIsOutOfOrder) {
  std::array<int, 5> perm = {0, 1, 2, 3, 4};
  const char* open[] = {"<mod>", "<v>", "<a>", "<sum>", "<ans>"};
  const char* close[] = {"</mod>", "</v>", "</a>", "</sum>", "</ans>"};
  const char* body[] = {"Audio", "v", "a", "s", "z"};
  int permutations = 0;
  do {
    std::string text;
    for (int p : perm) text += std::string(open[p]) + body[p] + close[p];
    auto r = parse_trace(text);
    const bool canonical = std::is_sorted(perm.begin(), perm.end());
    EXPECT_EQ(r.ok(), canonical) << text;
    if (!canonical) EXPECT_TRUE(has_kind(r, DiagnosticKind::OutOfOrder)) << text;
    ++permutations;
  } while (std::next_permutation(perm.begin(), perm.end()));
  EXPECT_EQ(permutations, 120);
}

TEST(ParseTrace, FuzzNeverCrashes) {
  std::mt19937_64 rng(5);
  const std::vector<std::string> atoms = {"<mod>", "</mod>", "<v>", "</v>", "<a>", "</a>", "<sum>", "</sum>",
                                          "<ans>", "</ans>", "Audio", "Visual", " ", "\n", "x", "<", ">", "</",
                                          "\xff", "\xc3", "<mo", "d>"};
  std::uniform_int_distribution<std::size_t> pick(0, atoms.size() - 1), len(0, 20);
  std::uniform_int_distribution<int> byte(0, 255);
  for (int n = 0; n < 3000; ++n) {
    std::string text;
    for (std::size_t k = len(rng); k > 0; --k) {
      if (n % 2) {
        text += atoms[pick(rng)];
      } else {
        text += static_cast<char>(byte(rng));
      }
    }
    auto r = parse_trace(text);
    EXPECT_NE(r.ok(), !r.diagnostics.empty());
    for (const auto& d : r.diagnostics) EXPECT_LE(d.offset, text.size());
    EXPECT_EQ(validate_structure(text).valid, r.ok());
    if (r.ok()) {
      const auto& s = r.trace->spans;
      ASSERT_EQ(s.size(), 5u);
      for (std::size_t i = 1; i < s.size(); ++i) EXPECT_LT(s[i - 1].start, s[i].start);
    }
  }
}

}  // namespace
}  // namespace avsep
