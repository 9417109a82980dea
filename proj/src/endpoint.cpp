// Copyright 2026 The avsep Authors
// SPDX-License-Identifier: Apache-2.0

#include "avsep/endpoint.hpp"

#include <httplib.h>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <utility>

namespace avsep {

namespace {

constexpr std::string_view kDefaultProbePrompt =
    "You are given {modality} of a clip together with a question about it.\n"
    "Question: {question}\n"
    "{choices}"
    "Think step by step about the evidence you can perceive, then give the final answer.\n"
    "Write your reasoning inside <think></think> and the final answer inside <answer></answer>.\n";

std::string_view modality_phrase(ProbeSetting setting) {
  switch (setting) {
    case ProbeSetting::A:
      return "only the audio track";
    case ProbeSetting::V:
      return "only the video frames";
    case ProbeSetting::AV:
      return "both the audio track and the video frames";
  }
  return "";
}

void replace_all(std::string& s, std::string_view from, std::string_view to) {
  for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
    s.replace(pos, from.size(), to);
  }
}

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string prefix;  // path without trailing slash
};

SplitUrl split_url(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw std::invalid_argument("endpoint url needs a scheme: " + url);
  auto path_begin = url.find('/', scheme_end + 3);
  SplitUrl out;
  out.origin = url.substr(0, path_begin);
  if (path_begin != std::string::npos) out.prefix = url.substr(path_begin);
  while (!out.prefix.empty() && out.prefix.back() == '/') out.prefix.pop_back();
  return out;
}

template <typename Error>
nlohmann::json post_json(const EndpointConfig& cfg, const std::string& route, const nlohmann::json& body) {
  if (cfg.base_url.empty()) throw Error("endpoint base_url is not configured");
  SplitUrl url = split_url(cfg.base_url);
  httplib::Client client(url.origin);
  const auto timeout = std::chrono::duration<double>(cfg.timeout_seconds);
  const auto micros = std::chrono::duration_cast<std::chrono::microseconds>(timeout);
  client.set_connection_timeout(micros);
  client.set_read_timeout(micros);
  client.set_write_timeout(micros);
  httplib::Headers headers;
  if (auto key = cfg.resolved_api_key(); !key.empty()) headers.emplace("Authorization", "Bearer " + key);

  std::string last_error;
  for (std::size_t attempt = 0; attempt <= cfg.retries; ++attempt) {
    auto res = client.Post(url.prefix + route, headers, body.dump(), "application/json");
    if (!res) {
      last_error = "request failed: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 429 || res->status >= 500) {
      last_error = "server returned HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) throw Error("server returned HTTP " + std::to_string(res->status) + ": " + res->body);
    try {
      return nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(std::string("malformed response body: ") + e.what());
    }
  }
  throw Error(last_error + " after " + std::to_string(cfg.retries + 1) + " attempts");
}

}  // namespace

std::string EndpointConfig::resolved_api_key() const {
  if (!api_key.empty()) return api_key;
  if (api_key_env.empty()) return {};
  const char* v = std::getenv(api_key_env.c_str());
  return v ? std::string(v) : std::string();
}

std::string_view default_probe_prompt() { return kDefaultProbePrompt; }

std::string render_probe_prompt(std::string_view tmpl, const Instance& instance, ProbeSetting setting) {
  std::string out(tmpl.empty() ? kDefaultProbePrompt : tmpl);
  std::string choices;
  if (instance.choices && !instance.choices->empty()) {
    choices = "Choices:\n";
    for (std::size_t i = 0; i < instance.choices->size(); ++i) {
      choices += "(" + std::string(1, static_cast<char>('A' + i % 26)) + ") " + (*instance.choices)[i] + "\n";
    }
  }
  replace_all(out, "{modality}", modality_phrase(setting));
  replace_all(out, "{question}", instance.question);
  replace_all(out, "{choices}", choices);
  return out;
}

CotSample parse_completion(std::string_view completion) {
  auto body = [&](std::string_view open, std::string_view close) -> std::optional<std::pair<std::size_t, std::string_view>> {
    auto b = completion.find(open);
    if (b == std::string_view::npos) return std::nullopt;
    auto e = completion.find(close, b + open.size());
    if (e == std::string_view::npos) return std::nullopt;
    return std::make_pair(b, completion.substr(b + open.size(), e - b - open.size()));
  };
  auto answer = body("<answer>", "</answer>");
  if (!answer) throw SamplingError("completion has no <answer></answer> span");
  CotSample out;
  out.answer = std::string(answer->second);
  if (auto think = body("<think>", "</think>")) {
    out.cot_text = std::string(think->second);
  } else {
    out.cot_text = std::string(completion.substr(0, answer->first));
  }
  return out;
}

HttpCotSampler::HttpCotSampler(EndpointConfig cfg) : cfg_(std::move(cfg)) {}

SampleSet HttpCotSampler::sample(const Instance& instance, ProbeSetting setting, std::size_t n) {
  if (n == 0) throw std::invalid_argument("cannot draw zero samples");
  nlohmann::json content = nlohmann::json::array();
  content.push_back({{"type", "text"}, {"text", render_probe_prompt(cfg_.prompt_template, instance, setting)}});
  if (setting != ProbeSetting::V) {
    content.push_back({{"type", "audio_url"}, {"audio_url", {{"url", instance.media.audio_ref}}}});
  }
  if (setting != ProbeSetting::A) {
    content.push_back({{"type", "video_url"}, {"video_url", {{"url", instance.media.video_ref}}}});
  }
  nlohmann::json request = {
      {"model", cfg_.model},
      {"messages", nlohmann::json::array({{{"role", "user"}, {"content", content}}})},
      {"n", 1},
  };
  if (cfg_.temperature) request["temperature"] = *cfg_.temperature;
  if (cfg_.max_tokens) request["max_tokens"] = *cfg_.max_tokens;

  SampleSet out;
  out.setting = setting;
  for (std::size_t k = 0; k < n; ++k) {
    nlohmann::json response = post_json<SamplingError>(cfg_, "/chat/completions", request);
    std::string text;
    try {
      text = response.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw SamplingError(std::string("malformed completion: ") + e.what());
    }
    out.samples.push_back(parse_completion(text));
  }
  return out;
}

HttpEmbedder::HttpEmbedder(EndpointConfig cfg) : cfg_(std::move(cfg)) {}

std::vector<double> HttpEmbedder::embed(std::string_view text) {
  nlohmann::json request = {{"model", cfg_.embedding_model.empty() ? cfg_.model : cfg_.embedding_model},
                            {"input", std::string(text)}};
  nlohmann::json response = post_json<EmbeddingError>(cfg_, "/embeddings", request);
  try {
    return response.at("data").at(0).at("embedding").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw EmbeddingError(std::string("malformed embedding response: ") + e.what());
  }
}

}  // namespace avsep
