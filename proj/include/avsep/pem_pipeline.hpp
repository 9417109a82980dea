// Copyright 2026 The avsep Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "avsep/tag_grammar.hpp"
#include "avsep/text_normalize.hpp"

namespace avsep {

/// Which inputs the model sees while probing: audio only, video only, or both.
enum class ProbeSetting { A = 0, V = 1, AV = 2 };

inline constexpr std::array<ProbeSetting, 3> kProbeSettings = {ProbeSetting::A, ProbeSetting::V, ProbeSetting::AV};

std::string_view to_string(ProbeSetting setting);
std::optional<ProbeSetting> parse_probe_setting(std::string_view text);

struct MediaRefs {
  std::string audio_ref;
  std::string video_ref;
};

struct Instance {
  std::string id;
  std::string question;
  MediaRefs media;
  std::string gold_answer;
  std::optional<std::vector<std::string>> choices;

  void validate() const;
};

struct CotSample {
  std::string answer;
  std::string cot_text;

  bool operator==(const CotSample&) const = default;
};

struct SampleSet {
  ProbeSetting setting = ProbeSetting::AV;
  std::vector<CotSample> samples;

  bool operator==(const SampleSet&) const = default;
};

struct SolvabilityRecord {
  double accuracy_rate = 0.0;
  double consistency = 0.0;
  bool solvable = false;
};

enum class DiscardReason { TriviallyEasy, Ambiguous, Contradictory, Unsolvable };

std::string_view to_string(DiscardReason reason);

using PemDecision = std::variant<PemLabel, DiscardReason>;

struct PemRecord {
  std::string id;
  std::array<SolvabilityRecord, 3> settings{};  // indexed by ProbeSetting
  PemDecision decision = DiscardReason::Unsolvable;
  /// First sampled chain of thought under AV, kept for SFT-style exports.
  std::string selected_cot;
  /// Set when sampling or embedding failed; the other fields are then unset.
  std::optional<std::string> error;

  const SolvabilityRecord& setting(ProbeSetting s) const { return settings[static_cast<std::size_t>(s)]; }
  bool labeled() const { return !error && std::holds_alternative<PemLabel>(decision); }
};

struct PipelineConfig {
  std::size_t n = 8;
  double tau_acc = 0.75;
  double tau_cons = 0.8;
  std::size_t parallelism = 1;
  AnswerNormalizer normalizer;

  void validate() const;
};

class SamplingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class EmbeddingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class EmptyDatasetError : public std::invalid_argument {
 public:
  EmptyDatasetError() : std::invalid_argument("EmptyDataset: no instances to annotate") {}
};

/// Draws chain-of-thought answers for one instance under one setting.
/// Implementations are called concurrently for different instances.
class CotSampler {
 public:
  virtual ~CotSampler() = default;
  /// Returns exactly n samples; throws SamplingError on failure.
  virtual SampleSet sample(const Instance& instance, ProbeSetting setting, std::size_t n) = 0;
};

/// Maps text to a finite embedding vector. Called concurrently.
class TextEmbedder {
 public:
  virtual ~TextEmbedder() = default;
  virtual std::vector<double> embed(std::string_view text) = 0;
};

/// Fraction of samples whose normalized answer equals the normalized gold.
double accuracy_rate(const SampleSet& samples, std::string_view gold, const AnswerNormalizer& normalizer = {});

/// Mean cosine similarity over all unordered pairs of chains of thought.
double consistency(std::span<const std::string> cot_texts, TextEmbedder& embedder);

/// Both thresholds are inclusive.
bool solvable(double accuracy, double consistency_score, const PipelineConfig& cfg);

/// The label table over (A solvable, V solvable, AV solvable).
PemDecision decide_pem(bool solvable_a, bool solvable_v, bool solvable_av);

struct AnnotationStats {
  std::size_t total = 0;
  std::size_t labeled = 0;
  std::map<PemLabel, std::size_t> label_counts;
  std::map<DiscardReason, std::size_t> discard_counts;
  std::vector<std::pair<std::string, std::string>> failures;  // (id, message)
};

struct AnnotationResult {
  std::vector<PemRecord> records;  // sorted by instance id
  AnnotationStats stats;
};

/// Probes every instance under A, V and AV and labels it. Per-instance
/// failures are recorded, never thrown. Throws EmptyDatasetError for an empty
/// dataset and std::invalid_argument for duplicate ids.
AnnotationResult annotate(std::span<const Instance> dataset, CotSampler& sampler, TextEmbedder& embedder,
                          const PipelineConfig& cfg);

std::string format_stats_report(const AnnotationStats& stats);

// ---- JSONL surfaces

Instance instance_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Instance& instance);
std::vector<Instance> read_instances(const std::filesystem::path& path);

nlohmann::ordered_json to_json(const PemRecord& record);
/// Training-set row for a labeled record: id, question, pem, answer, cot.
nlohmann::ordered_json labeled_row(const PemRecord& record, const Instance& instance);

// ---- Offline adapters

/// Replays scripted samples keyed by (instance id, setting). Scripts are JSONL:
///   {"id": "...", "setting": "A", "samples": [{"answer": "...", "cot": "..."}]}
class ScriptedSampler : public CotSampler {
 public:
  ScriptedSampler() = default;
  static ScriptedSampler from_jsonl(const std::filesystem::path& path);

  void add(const std::string& id, ProbeSetting setting, std::vector<CotSample> samples);
  SampleSet sample(const Instance& instance, ProbeSetting setting, std::size_t n) override;

 private:
  std::map<std::pair<std::string, ProbeSetting>, std::vector<CotSample>> script_;
};

/// Feature-hashed bag of words, L2-normalized. Deterministic and offline.
class HashingEmbedder : public TextEmbedder {
 public:
  explicit HashingEmbedder(std::size_t dim = 256) : dim_(dim) {}
  std::vector<double> embed(std::string_view text) override;

 private:
  std::size_t dim_;
};

}  // namespace avsep
