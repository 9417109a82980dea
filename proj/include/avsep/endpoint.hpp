// Copyright 2026 The avsep Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

#include "avsep/pem_pipeline.hpp"

namespace avsep {

/// Chat-completion style HTTP service settings.
struct EndpointConfig {
  /// e.g. "http://127.0.0.1:8000/v1"; "/chat/completions" and "/embeddings"
  /// are appended.
  std::string base_url;
  std::string model;
  std::string embedding_model;
  /// Bearer token; when empty the variable named by api_key_env is read.
  std::string api_key;
  std::string api_key_env = "AVSEP_API_KEY";
  double timeout_seconds = 60.0;
  std::size_t retries = 2;
  std::optional<double> temperature;
  std::optional<std::size_t> max_tokens;
  /// Probe prompt with {question}, {choices} and {modality} placeholders.
  std::string prompt_template;

  std::string resolved_api_key() const;
};

/// Default probe prompt; ships as an editable file in config/.
std::string_view default_probe_prompt();

/// Fills the probe prompt for one setting.
std::string render_probe_prompt(std::string_view tmpl, const Instance& instance, ProbeSetting setting);

/// Splits a completion into answer and reasoning. The answer is the body of
/// <answer>...</answer>; the reasoning is the body of <think>...</think> if
/// present, otherwise the text before the answer tag. Throws SamplingError
/// when no answer tag is found.
CotSample parse_completion(std::string_view completion);

/// Requests one completion per sample, sequentially, with the instance's
/// media references attached according to the setting.
class HttpCotSampler : public CotSampler {
 public:
  explicit HttpCotSampler(EndpointConfig cfg);
  SampleSet sample(const Instance& instance, ProbeSetting setting, std::size_t n) override;

 private:
  EndpointConfig cfg_;
};

class HttpEmbedder : public TextEmbedder {
 public:
  explicit HttpEmbedder(EndpointConfig cfg);
  std::vector<double> embed(std::string_view text) override;

 private:
  EndpointConfig cfg_;
};

}  // namespace avsep
