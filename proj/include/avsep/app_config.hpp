// Copyright 2026 The avsep Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string_view>

#include "avsep/attention_core.hpp"
#include "avsep/endpoint.hpp"
#include "avsep/pem_pipeline.hpp"
#include "avsep/rl_core.hpp"

namespace avsep {

/// Every tunable in one place. Defaults live in the member initializers of
/// the component configs and are mirrored by config/default.ini.
struct AppConfig {
  PipelineConfig pipeline;
  RewardConfig rewards;
  GrpoConfig grpo;
  std::size_t last_k = kDefaultAllocationWindow;
  LeakageSizes leakage;
  EndpointConfig endpoint;
  std::optional<std::filesystem::path> mock_script;
  std::size_t mock_embedding_dim = 256;
  std::uint64_t seed = 0;

  /// Checks value ranges and that referenced files exist.
  void validate() const;
};

/// Parses an INI document with [pipeline], [answer], [rewards], [grpo],
/// [attention], [leakage], [endpoint], [mock] and [run] sections. Relative
/// paths are resolved against base_dir. Unknown keys are errors.
AppConfig parse_app_config(std::string_view text, const std::filesystem::path& base_dir = {});
AppConfig load_app_config(const std::filesystem::path& path);

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace avsep
