// Copyright 2026 The avsep Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>
#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <map>
#include <mutex>
#include <random>
#include <thread>

#include "avsep/endpoint.hpp"
#include "avsep/pem_pipeline.hpp"
#include "support.hpp"

// after the Eigen headers: resolv.h defines a _res macro that clashes with them
#include <httplib.h>

namespace avsep {
namespace {

// Maps each text to a fixed vector; unknown texts are an error.
class TableEmbedder : public TextEmbedder {
 public:
  explicit TableEmbedder(std::map<std::string, std::vector<double>> table) : table_(std::move(table)) {}
  std::vector<double> embed(std::string_view text) override {
    auto it = table_.find(std::string(text));
    if (it == table_.end()) throw EmbeddingError("no vector for '" + std::string(text) + "'");
    return it->second;
  }

 private:
  std::map<std::string, std::vector<double>> table_;
};

// Every call returns n copies of the same sample.
class ConstantSampler : public CotSampler {
 public:
  SampleSet sample(const Instance& instance, ProbeSetting setting, std::size_t n) override {
    return {setting, std::vector<CotSample>(n, {instance.gold_answer, "same reasoning"})};
  }
};

class FailingSampler : public CotSampler {
 public:
  explicit FailingSampler(std::string bad_id) : bad_id_(std::move(bad_id)) {}
  SampleSet sample(const Instance& instance, ProbeSetting setting, std::size_t n) override {
    if (instance.id == bad_id_) throw SamplingError("endpoint timed out");
    return {setting, std::vector<CotSample>(n, {instance.gold_answer, "same reasoning"})};
  }

 private:
  std::string bad_id_;
};

Instance make_instance(const std::string& id, const std::string& gold = "dog") {
  Instance inst;
  inst.id = id;
  inst.question = "What animal is heard?";
  inst.media = {"a.wav", "v.mp4"};
  inst.gold_answer = gold;
  return inst;
}

SampleSet answers(std::initializer_list<const char*> list) {
  SampleSet s;
  for (const char* a : list) s.samples.push_back({a, "cot"});
  return s;
}

TEST(ProbeSetting, Names) {
  EXPECT_EQ(to_string(ProbeSetting::AV), "AV");
  EXPECT_EQ(parse_probe_setting("V"), ProbeSetting::V);
  EXPECT_FALSE(parse_probe_setting("AVX"));
  EXPECT_EQ(kProbeSettings.size(), 3u);
}

TEST(AccuracyRate, Examples) {
  EXPECT_EQ(accuracy_rate(answers({"dog", "dog", "dog", "dog", "dog", "dog", "cat", "cow"}), "dog"), 0.75);
  EXPECT_EQ(accuracy_rate(answers({"Dog.", " DOG", "dog"}), "dog"), 1.0);
  EXPECT_EQ(accuracy_rate(answers({"cat", "cow"}), "dog"), 0.0);
  EXPECT_THROW(accuracy_rate(answers({}), "dog"), std::invalid_argument);
}

TEST(Consistency, Examples) {
  TableEmbedder table({{"a", {1, 0, 0}}, {"b", {0, 1, 0}}, {"c", {1, 1, 0}}, {"d", {3, 4, 0}}, {"z", {0, 0, 0}}});
  std::vector<std::string> same = {"c", "c", "c"};
  EXPECT_DOUBLE_EQ(consistency(same, table), 1.0);
  std::vector<std::string> ortho = {"a", "b"};
  EXPECT_DOUBLE_EQ(consistency(ortho, table), 0.0);
  // pairwise cosines by hand: (a,c)=1/sqrt2, (a,d)=3/5, (c,d)=7/(5 sqrt2)
  std::vector<std::string> three = {"a", "c", "d"};
  const double expected = (1.0 / std::sqrt(2.0) + 0.6 + 7.0 / (5.0 * std::sqrt(2.0))) / 3.0;
  EXPECT_NEAR(consistency(three, table), expected, 1e-15);
  std::vector<std::string> zero = {"a", "z"};
  EXPECT_THROW(consistency(zero, table), EmbeddingError);
  std::vector<std::string> one = {"a"};
  EXPECT_THROW(consistency(one, table), std::invalid_argument);
}

TEST(Consistency, PermutationInvariant) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> n(0.0, 1.0);
  std::map<std::string, std::vector<double>> table;
  std::vector<std::string> keys;
  for (int k = 0; k < 8; ++k) {
    keys.push_back("t" + std::to_string(k));
    table[keys.back()] = {n(rng), n(rng), n(rng), n(rng)};
  }
  TableEmbedder emb(table);
  const double base = consistency(keys, emb);
  for (int p = 0; p < 50; ++p) {
    std::shuffle(keys.begin(), keys.end(), rng);
    EXPECT_NEAR(consistency(keys, emb), base, 1e-12);
  }
}

TEST(Solvable, ThresholdsInclusive) {
  PipelineConfig cfg;
  EXPECT_EQ(cfg.n, 8u);
  EXPECT_EQ(cfg.tau_acc, 0.75);
  EXPECT_EQ(cfg.tau_cons, 0.8);
  EXPECT_TRUE(solvable(0.75, 0.80, cfg));
  EXPECT_FALSE(solvable(0.74, 0.99, cfg));
  EXPECT_FALSE(solvable(1.0, 0.79, cfg));
}

TEST(Solvable, MonotoneInBothScores) {
  PipelineConfig cfg;
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 2000; ++k) {
    double a = u(rng), c = u(rng), da = u(rng) * (1 - a), dc = u(rng) * (1 - c);
    if (solvable(a, c, cfg)) EXPECT_TRUE(solvable(a + da, c + dc, cfg));
  }
}

TEST(DecidePem, TruthTable) {
  auto label = [](bool a, bool v, bool av) { return decide_pem(a, v, av); };
  EXPECT_EQ(label(true, false, true), PemDecision(PemLabel::Audio));
  EXPECT_EQ(label(false, true, true), PemDecision(PemLabel::Visual));
  EXPECT_EQ(label(false, false, true), PemDecision(PemLabel::AudioVisual));
  EXPECT_EQ(label(true, true, true), PemDecision(DiscardReason::TriviallyEasy));
  EXPECT_EQ(label(true, true, false), PemDecision(DiscardReason::Contradictory));
  EXPECT_EQ(label(true, false, false), PemDecision(DiscardReason::Contradictory));
  EXPECT_EQ(label(false, true, false), PemDecision(DiscardReason::Contradictory));
  EXPECT_EQ(label(false, false, false), PemDecision(DiscardReason::Unsolvable));
  int labels = 0;
  for (int bits = 0; bits < 8; ++bits) {
    auto d = decide_pem(bits & 4, bits & 2, bits & 1);
    if (std::holds_alternative<PemLabel>(d)) {
      ++labels;
      EXPECT_TRUE(bits & 1);
    }
  }
  EXPECT_EQ(labels, 3);
}

TEST(Annotate, FixtureMatchesGolden) {
  auto dataset = read_instances(testing::fixture("pem_dataset.jsonl"));
  ASSERT_EQ(dataset.size(), 12u);
  auto sampler = ScriptedSampler::from_jsonl(testing::fixture("pem_script.jsonl"));
  HashingEmbedder embedder;
  auto result = annotate(dataset, sampler, embedder, PipelineConfig{});
  std::string records, labeled;
  std::map<std::string, const Instance*> by_id;
  for (const auto& inst : dataset) by_id[inst.id] = &inst;
  for (const auto& r : result.records) {
    records += to_json(r).dump() + "\n";
    if (r.labeled()) labeled += labeled_row(r, *by_id[r.id]).dump() + "\n";
  }
  EXPECT_EQ(records, testing::slurp(testing::fixture("pem_golden.jsonl")));
  EXPECT_EQ(labeled, testing::slurp(testing::fixture("pem_golden_labeled.jsonl")));
  EXPECT_EQ(result.stats.labeled, 7u);
  EXPECT_EQ(result.stats.discard_counts[DiscardReason::Contradictory], 3u);
  EXPECT_EQ(result.stats.discard_counts.count(DiscardReason::Ambiguous), 0u);
}

TEST(Annotate, EmptyDataset) {
  ConstantSampler sampler;
  HashingEmbedder embedder;
  std::vector<Instance> none;
  try {
    annotate(none, sampler, embedder, PipelineConfig{});
    FAIL() << "expected EmptyDatasetError";
  } catch (const EmptyDatasetError& e) {
    EXPECT_NE(std::string(e.what()).find("EmptyDataset"), std::string::npos);
  }
}

TEST(Annotate, UnanimousSamplerIsTriviallyEasy) {
  ConstantSampler sampler;
  HashingEmbedder embedder;
  std::vector<Instance> data = {make_instance("b"), make_instance("a"), make_instance("c")};
  auto result = annotate(data, sampler, embedder, PipelineConfig{});
  ASSERT_EQ(result.records.size(), 3u);
  EXPECT_EQ(result.records[0].id, "a");
  for (const auto& r : result.records) EXPECT_EQ(r.decision, PemDecision(DiscardReason::TriviallyEasy));
  EXPECT_EQ(result.stats.discard_counts[DiscardReason::TriviallyEasy], 3u);
}

TEST(Annotate, FailuresAreRecordedNotFatal) {
  FailingSampler sampler("bad");
  HashingEmbedder embedder;
  std::vector<Instance> data = {make_instance("ok"), make_instance("bad")};
  auto result = annotate(data, sampler, embedder, PipelineConfig{});
  ASSERT_EQ(result.records.size(), 2u);
  EXPECT_TRUE(result.records[0].error.has_value());
  EXPECT_FALSE(result.records[1].error.has_value());
  ASSERT_EQ(result.stats.failures.size(), 1u);
  EXPECT_NE(format_stats_report(result.stats).find("bad: instance bad: endpoint timed out"), std::string::npos);
  EXPECT_EQ(to_json(result.records[0]).dump(), R"({"id":"bad","error":"instance bad: endpoint timed out"})");
}

TEST(Annotate, DuplicateIdsRejected) {
  ConstantSampler sampler;
  HashingEmbedder embedder;
  std::vector<Instance> data = {make_instance("x"), make_instance("x")};
  EXPECT_THROW(annotate(data, sampler, embedder, PipelineConfig{}), std::invalid_argument);
}

TEST(Annotate, ScheduleIndependent) {
  auto dataset = read_instances(testing::fixture("pem_dataset.jsonl"));
  auto sampler = ScriptedSampler::from_jsonl(testing::fixture("pem_script.jsonl"));
  HashingEmbedder embedder;
  std::string reference;
  for (std::size_t p : {1u, 2u, 4u, 16u, 64u}) {
    PipelineConfig cfg;
    cfg.parallelism = p;
    std::string out;
    for (const auto& r : annotate(dataset, sampler, embedder, cfg).records) out += to_json(r).dump() + "\n";
    if (reference.empty()) reference = out;
    EXPECT_EQ(out, reference) << "parallelism " << p;
  }
}

TEST(PipelineConfig, Validation) {
  PipelineConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.n = 1;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.tau_acc = 1.5;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.tau_cons = 0.0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.parallelism = 0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(Instance, JsonAndValidation) {
  auto j = nlohmann::json::parse(
      R"({"id":"q1","question":"Q?","media":{"audio_ref":"a","video_ref":"v"},"gold_answer":"x","choices":["x","y"]})");
  Instance inst = instance_from_json(j);
  EXPECT_EQ(inst.choices->size(), 2u);
  EXPECT_EQ(to_json(inst), j);
  EXPECT_THROW(instance_from_json(nlohmann::json::parse(R"({"id":"q1","gold_answer":""})")), std::invalid_argument);
  EXPECT_THROW(instance_from_json(nlohmann::json::parse(R"({"gold_answer":"x"})")), std::exception);
}

TEST(ScriptedSampler, Behaviour) {
  auto sampler = ScriptedSampler::from_jsonl(testing::fixture("pem_script.jsonl"));
  auto inst = make_instance("inst03", "answer3");
  auto set = sampler.sample(inst, ProbeSetting::A, 8);
  EXPECT_EQ(set.setting, ProbeSetting::A);
  ASSERT_EQ(set.samples.size(), 8u);
  EXPECT_EQ(set.samples[0].answer, "wrong");
  EXPECT_EQ(sampler.sample(inst, ProbeSetting::A, 8), set);
  EXPECT_EQ(sampler.sample(inst, ProbeSetting::A, 3).samples.size(), 3u);
  EXPECT_THROW(sampler.sample(inst, ProbeSetting::A, 0), std::invalid_argument);
  EXPECT_THROW(sampler.sample(inst, ProbeSetting::A, 9), SamplingError);
  EXPECT_THROW(sampler.sample(make_instance("nobody"), ProbeSetting::A, 2), SamplingError);
}

TEST(HashingEmbedder, Behaviour) {
  HashingEmbedder e(64);
  auto a = e.embed("The dog barks");
  auto b = e.embed("the DOG barks!");
  EXPECT_EQ(a, b);
  double norm = 0.0;
  for (double x : a) norm += x * x;
  EXPECT_NEAR(norm, 1.0, 1e-12);
  EXPECT_THROW(e.embed("  ...  "), EmbeddingError);
}

// ---------------------------------------------------------------- endpoint

TEST(Endpoint, PromptRendering) {
  auto inst = make_instance("q");
  inst.choices = std::vector<std::string>{"dog", "cat"};
  std::string p = render_probe_prompt("", inst, ProbeSetting::A);
  EXPECT_NE(p.find("only the audio track"), std::string::npos);
  EXPECT_NE(p.find("What animal is heard?"), std::string::npos);
  EXPECT_NE(p.find("(A) dog\n(B) cat\n"), std::string::npos);
  EXPECT_EQ(render_probe_prompt("{modality}|{question}|{choices}", make_instance("q"), ProbeSetting::V),
            "only the video frames|What animal is heard?|");
  EXPECT_EQ(testing::slurp(testing::config_file("probe_prompt.txt")), std::string(default_probe_prompt()));
}

TEST(Endpoint, ParseCompletion) {
  EXPECT_EQ(parse_completion("<think>it barks</think><answer>dog</answer>"), (CotSample{"dog", "it barks"}));
  EXPECT_EQ(parse_completion("It barks, so <answer>dog</answer>"), (CotSample{"dog", "It barks, so "}));
  EXPECT_THROW(parse_completion("dog"), SamplingError);
}

class StubServer {
 public:
  StubServer() {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      std::lock_guard<std::mutex> lock(mu_);
      requests_.push_back(nlohmann::json::parse(req.body));
      auth_ = req.get_header_value("Authorization");
      if (fail_first_ && requests_.size() == 1) {
        res.status = 503;
        return;
      }
      const std::string& content = replies_[(requests_.size() - 1) % replies_.size()];
      nlohmann::json body = {{"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}}}}};
      res.set_content(body.dump(), "application/json");
    });
    server_.Post("/v1/embeddings", [](const httplib::Request& req, httplib::Response& res) {
      auto in = nlohmann::json::parse(req.body);
      double len = static_cast<double>(in.at("input").get<std::string>().size());
      nlohmann::json body = {{"data", {{{"embedding", {len, 1.0}}}}}};
      res.set_content(body.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~StubServer() {
    server_.stop();
    thread_.join();
  }
  std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }

  std::vector<std::string> replies_;
  std::vector<nlohmann::json> requests_;
  std::string auth_;
  bool fail_first_ = false;

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
  std::mutex mu_;
};

TEST(Endpoint, SamplerAgainstRecordedResponses) {
  StubServer stub;
  stub.replies_ = {"<think>a dog barks twice</think><answer>dog</answer>",
                   "<think>barking</think>\n<answer>Dog</answer>"};
  stub.fail_first_ = true;
  EndpointConfig cfg;
  cfg.base_url = stub.base_url();
  cfg.model = "probe-model";
  cfg.api_key = "secret";
  cfg.timeout_seconds = 5;
  cfg.temperature = 0.7;
  HttpCotSampler sampler(cfg);
  SampleSet got = sampler.sample(make_instance("q"), ProbeSetting::A, 3);
  SampleSet expected{ProbeSetting::A, {{"Dog", "barking"}, {"dog", "a dog barks twice"}, {"Dog", "barking"}}};
  EXPECT_EQ(got, expected);
  ASSERT_EQ(stub.requests_.size(), 4u);  // one retried 503 plus three samples
  EXPECT_EQ(stub.auth_, "Bearer secret");
  const auto& req = stub.requests_.back();
  EXPECT_EQ(req.at("model"), "probe-model");
  EXPECT_EQ(req.at("temperature"), 0.7);
  const auto& content = req.at("messages").at(0).at("content");
  ASSERT_EQ(content.size(), 2u);
  EXPECT_EQ(content.at(1).at("type"), "audio_url");
  EXPECT_EQ(content.at(1).at("audio_url").at("url"), "a.wav");

  sampler.sample(make_instance("q"), ProbeSetting::AV, 1);
  EXPECT_EQ(stub.requests_.back().at("messages").at(0).at("content").size(), 3u);
}

TEST(Endpoint, Embedder) {
  StubServer stub;
  EndpointConfig cfg;
  cfg.base_url = stub.base_url();
  cfg.model = "m";
  HttpEmbedder embedder(cfg);
  EXPECT_EQ(embedder.embed("abcd"), (std::vector<double>{4.0, 1.0}));
}

TEST(Endpoint, ErrorsAreTyped) {
  StubServer stub;
  stub.replies_ = {"no answer tags here"};
  EndpointConfig cfg;
  cfg.base_url = stub.base_url();
  cfg.timeout_seconds = 5;
  HttpCotSampler sampler(cfg);
  EXPECT_THROW(sampler.sample(make_instance("q"), ProbeSetting::V, 1), SamplingError);

  EndpointConfig dead;
  dead.base_url = "http://127.0.0.1:1/v1";
  dead.timeout_seconds = 1;
  dead.retries = 0;
  EXPECT_THROW(HttpCotSampler(dead).sample(make_instance("q"), ProbeSetting::V, 1), SamplingError);
  EXPECT_THROW(HttpEmbedder(dead).embed("x"), EmbeddingError);
  EndpointConfig unset;
  EXPECT_THROW(HttpCotSampler(unset).sample(make_instance("q"), ProbeSetting::V, 1), SamplingError);
}

}  // namespace
}  // namespace avsep
