// Copyright 2026 The avsep Authors
// SPDX-License-Identifier: Apache-2.0

#include "avsep/pem_pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

namespace avsep {

std::string_view to_string(ProbeSetting setting) {
  switch (setting) {
    case ProbeSetting::A:
      return "A";
    case ProbeSetting::V:
      return "V";
    case ProbeSetting::AV:
      return "AV";
  }
  return "";
}

std::optional<ProbeSetting> parse_probe_setting(std::string_view text) {
  if (text == "A") return ProbeSetting::A;
  if (text == "V") return ProbeSetting::V;
  if (text == "AV") return ProbeSetting::AV;
  return std::nullopt;
}

std::string_view to_string(DiscardReason reason) {
  switch (reason) {
    case DiscardReason::TriviallyEasy:
      return "TriviallyEasy";
    case DiscardReason::Ambiguous:
      return "Ambiguous";
    case DiscardReason::Contradictory:
      return "Contradictory";
    case DiscardReason::Unsolvable:
      return "Unsolvable";
  }
  return "";
}

void Instance::validate() const {
  if (id.empty()) throw std::invalid_argument("instance id is empty");
  if (gold_answer.empty()) throw std::invalid_argument("instance " + id + " has an empty gold answer");
}

void PipelineConfig::validate() const {
  if (n < 2) throw std::invalid_argument("pipeline n must be at least 2");
  if (!(tau_acc > 0.0 && tau_acc <= 1.0)) throw std::invalid_argument("tau_acc must lie in (0, 1]");
  if (!(tau_cons > 0.0 && tau_cons <= 1.0)) throw std::invalid_argument("tau_cons must lie in (0, 1]");
  if (parallelism == 0) throw std::invalid_argument("parallelism must be at least 1");
}

double accuracy_rate(const SampleSet& samples, std::string_view gold, const AnswerNormalizer& normalizer) {
  if (samples.samples.empty()) throw std::invalid_argument("accuracy rate of an empty sample set");
  const std::string target = normalizer.normalize(gold);
  std::size_t correct = 0;
  for (const auto& s : samples.samples) correct += normalizer.normalize(s.answer) == target ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(samples.samples.size());
}

double consistency(std::span<const std::string> cot_texts, TextEmbedder& embedder) {
  if (cot_texts.size() < 2) throw std::invalid_argument("consistency needs at least two texts");
  std::vector<std::vector<double>> units;
  units.reserve(cot_texts.size());
  for (const auto& text : cot_texts) {
    std::vector<double> v = embedder.embed(text);
    double norm2 = 0.0;
    for (double x : v) {
      if (!std::isfinite(x)) throw EmbeddingError("embedding has non-finite entries");
      norm2 += x * x;
    }
    if (v.empty() || !(norm2 > 0.0)) throw EmbeddingError("embedding has zero norm");
    if (!units.empty() && v.size() != units.front().size()) throw EmbeddingError("embeddings differ in dimension");
    const double inv = 1.0 / std::sqrt(norm2);
    for (double& x : v) x *= inv;
    units.push_back(std::move(v));
  }
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < units.size(); ++i) {
    for (std::size_t j = i + 1; j < units.size(); ++j) {
      double dot = 0.0;
      for (std::size_t k = 0; k < units[i].size(); ++k) dot += units[i][k] * units[j][k];
      total += std::clamp(dot, -1.0, 1.0);  // rounding can push unit dot products past 1
      ++pairs;
    }
  }
  return total / static_cast<double>(pairs);
}

bool solvable(double accuracy, double consistency_score, const PipelineConfig& cfg) {
  return accuracy >= cfg.tau_acc && consistency_score >= cfg.tau_cons;
}

PemDecision decide_pem(bool solvable_a, bool solvable_v, bool solvable_av) {
  if (!solvable_av) {
    // Adding a modality must not lose a solvable question.
    if (solvable_a || solvable_v) return DiscardReason::Contradictory;
    return DiscardReason::Unsolvable;
  }
  if (solvable_a && solvable_v) return DiscardReason::TriviallyEasy;
  if (solvable_a) return PemLabel::Audio;
  if (solvable_v) return PemLabel::Visual;
  return PemLabel::AudioVisual;
}

namespace {

PemRecord annotate_one(const Instance& instance, CotSampler& sampler, TextEmbedder& embedder,
                       const PipelineConfig& cfg) {
  PemRecord record;
  record.id = instance.id;
  try {
    instance.validate();
    std::array<bool, 3> flags{};
    for (ProbeSetting setting : kProbeSettings) {
      SampleSet set = sampler.sample(instance, setting, cfg.n);
      if (set.samples.size() != cfg.n) {
        throw SamplingError("sampler returned " + std::to_string(set.samples.size()) + " samples under " +
                            std::string(to_string(setting)) + ", expected " + std::to_string(cfg.n));
      }
      std::vector<std::string> cots;
      cots.reserve(set.samples.size());
      for (const auto& s : set.samples) cots.push_back(s.cot_text);
      auto& rec = record.settings[static_cast<std::size_t>(setting)];
      rec.accuracy_rate = accuracy_rate(set, instance.gold_answer, cfg.normalizer);
      rec.consistency = consistency(cots, embedder);
      rec.solvable = solvable(rec.accuracy_rate, rec.consistency, cfg);
      flags[static_cast<std::size_t>(setting)] = rec.solvable;
      if (setting == ProbeSetting::AV) record.selected_cot = set.samples.front().cot_text;
    }
    record.decision = decide_pem(flags[0], flags[1], flags[2]);
  } catch (const std::exception& e) {
    record = PemRecord{};
    record.id = instance.id;
    record.error = "instance " + instance.id + ": " + e.what();
  }
  return record;
}

}  // namespace

AnnotationResult annotate(std::span<const Instance> dataset, CotSampler& sampler, TextEmbedder& embedder,
                          const PipelineConfig& cfg) {
  cfg.validate();
  if (dataset.empty()) throw EmptyDatasetError();
  {
    std::set<std::string> seen;
    for (const auto& inst : dataset) {
      if (!seen.insert(inst.id).second) throw std::invalid_argument("duplicate instance id " + inst.id);
    }
  }

  std::vector<PemRecord> records(dataset.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next.fetch_add(1); i < dataset.size(); i = next.fetch_add(1)) {
      records[i] = annotate_one(dataset[i], sampler, embedder, cfg);
    }
  };
  const std::size_t threads = std::min(cfg.parallelism, dataset.size());
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }

  std::sort(records.begin(), records.end(), [](const PemRecord& a, const PemRecord& b) { return a.id < b.id; });

  AnnotationResult result;
  result.stats.total = records.size();
  for (const auto& r : records) {
    if (r.error) {
      result.stats.failures.emplace_back(r.id, *r.error);
    } else if (const auto* label = std::get_if<PemLabel>(&r.decision)) {
      ++result.stats.labeled;
      ++result.stats.label_counts[*label];
    } else {
      ++result.stats.discard_counts[std::get<DiscardReason>(r.decision)];
    }
  }
  result.records = std::move(records);
  return result;
}

std::string format_stats_report(const AnnotationStats& stats) {
  std::ostringstream out;
  auto count = [](const auto& map, auto key) {
    auto it = map.find(key);
    return it == map.end() ? std::size_t{0} : it->second;
  };
  out << "instances: " << stats.total << '\n';
  out << "labeled: " << stats.labeled << '\n';
  out << "failed: " << stats.failures.size() << '\n';
  out << "labels:\n";
  for (PemLabel l : {PemLabel::Audio, PemLabel::Visual, PemLabel::AudioVisual}) {
    out << "  " << to_string(l) << ": " << count(stats.label_counts, l) << '\n';
  }
  out << "discards:\n";
  for (DiscardReason r : {DiscardReason::TriviallyEasy, DiscardReason::Ambiguous, DiscardReason::Contradictory,
                          DiscardReason::Unsolvable}) {
    out << "  " << to_string(r) << ": " << count(stats.discard_counts, r) << '\n';
  }
  if (!stats.failures.empty()) {
    out << "failures:\n";
    for (const auto& [id, message] : stats.failures) out << "  " << id << ": " << message << '\n';
  }
  return out.str();
}

Instance instance_from_json(const nlohmann::json& j) {
  Instance inst;
  inst.id = j.at("id").get<std::string>();
  inst.question = j.value("question", "");
  if (j.contains("media")) {
    const auto& media = j.at("media");
    inst.media.audio_ref = media.value("audio_ref", "");
    inst.media.video_ref = media.value("video_ref", "");
  }
  inst.gold_answer = j.at("gold_answer").get<std::string>();
  if (j.contains("choices") && !j.at("choices").is_null()) {
    inst.choices = j.at("choices").get<std::vector<std::string>>();
  }
  inst.validate();
  return inst;
}

nlohmann::json to_json(const Instance& instance) {
  nlohmann::json j;
  j["id"] = instance.id;
  j["question"] = instance.question;
  j["media"] = {{"audio_ref", instance.media.audio_ref}, {"video_ref", instance.media.video_ref}};
  j["gold_answer"] = instance.gold_answer;
  if (instance.choices) j["choices"] = *instance.choices;
  return j;
}

std::vector<Instance> read_instances(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset " + path.string());
  std::vector<Instance> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(instance_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

nlohmann::ordered_json to_json(const PemRecord& record) {
  nlohmann::ordered_json j;
  j["id"] = record.id;
  if (record.error) {
    j["error"] = *record.error;
    return j;
  }
  for (ProbeSetting s : kProbeSettings) {
    const auto& rec = record.setting(s);
    j[std::string(to_string(s))] = {
        {"accuracy_rate", rec.accuracy_rate}, {"consistency", rec.consistency}, {"solvable", rec.solvable}};
  }
  if (const auto* label = std::get_if<PemLabel>(&record.decision)) {
    j["decision"] = to_string(*label);
  } else {
    j["decision"] = "Discard";
    j["discard_reason"] = to_string(std::get<DiscardReason>(record.decision));
  }
  return j;
}

nlohmann::ordered_json labeled_row(const PemRecord& record, const Instance& instance) {
  if (!record.labeled()) throw std::invalid_argument("record " + record.id + " carries no label");
  nlohmann::ordered_json j;
  j["id"] = record.id;
  j["question"] = instance.question;
  j["pem"] = to_string(std::get<PemLabel>(record.decision));
  j["gold_answer"] = instance.gold_answer;
  j["cot"] = record.selected_cot;
  return j;
}

// ---------------------------------------------------------------- ScriptedSampler

ScriptedSampler ScriptedSampler::from_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open sampler script " + path.string());
  ScriptedSampler sampler;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto j = nlohmann::json::parse(line);
      auto setting = parse_probe_setting(j.at("setting").get<std::string>());
      if (!setting) throw std::invalid_argument("unknown setting");
      std::vector<CotSample> samples;
      for (const auto& s : j.at("samples")) {
        samples.push_back({s.at("answer").get<std::string>(), s.at("cot").get<std::string>()});
      }
      sampler.add(j.at("id").get<std::string>(), *setting, std::move(samples));
    } catch (const std::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return sampler;
}

void ScriptedSampler::add(const std::string& id, ProbeSetting setting, std::vector<CotSample> samples) {
  script_[{id, setting}] = std::move(samples);
}

SampleSet ScriptedSampler::sample(const Instance& instance, ProbeSetting setting, std::size_t n) {
  if (n == 0) throw std::invalid_argument("cannot draw zero samples");
  auto it = script_.find({instance.id, setting});
  if (it == script_.end()) {
    throw SamplingError("no scripted samples for " + instance.id + " under " + std::string(to_string(setting)));
  }
  if (it->second.size() < n) {
    throw SamplingError("script for " + instance.id + " under " + std::string(to_string(setting)) + " has only " +
                        std::to_string(it->second.size()) + " samples");
  }
  return {setting, std::vector<CotSample>(it->second.begin(), it->second.begin() + static_cast<std::ptrdiff_t>(n))};
}

// ---------------------------------------------------------------- HashingEmbedder

std::vector<double> HashingEmbedder::embed(std::string_view text) {
  if (dim_ == 0) throw EmbeddingError("hashing embedder dimension is zero");
  std::vector<double> out(dim_, 0.0);
  auto is_word = [](unsigned char c) { return std::isalnum(c) || c >= 0x80; };
  std::size_t i = 0;
  bool any = false;
  while (i < text.size()) {
    while (i < text.size() && !is_word(static_cast<unsigned char>(text[i]))) ++i;
    if (i >= text.size()) break;
    std::uint64_t h = 14695981039346656037ull;
    while (i < text.size() && is_word(static_cast<unsigned char>(text[i]))) {
      auto c = static_cast<unsigned char>(std::tolower(static_cast<unsigned char>(text[i])));
      h ^= c;
      h *= 1099511628211ull;
      ++i;
    }
    out[h % dim_] += (h >> 63) ? -1.0 : 1.0;
    any = true;
  }
  if (!any) throw EmbeddingError("text has no words to embed");
  double norm2 = 0.0;
  for (double x : out) norm2 += x * x;
  if (norm2 == 0.0) throw EmbeddingError("hashed features cancel out");
  const double inv = 1.0 / std::sqrt(norm2);
  for (double& x : out) x *= inv;
  return out;
}

}  // namespace avsep
