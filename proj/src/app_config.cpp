// Copyright 2026 The avsep Authors
// SPDX-License-Identifier: Apache-2.0

#include "avsep/app_config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <fstream>
#include <type_traits>
#include <functional>
#include <map>
#include <sstream>

namespace avsep {

namespace pt = boost::property_tree;

namespace {

template <typename T>
T as(const std::string& section, const std::string& key, const std::string& raw) {
  if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
    if (raw.find('-') != std::string::npos) {
      throw ConfigError("[" + section + "] " + key + ": expected a nonnegative integer, got '" + raw + "'");
    }
  }
  try {
    return pt::ptree(raw).get_value<T>();
  } catch (const pt::ptree_error&) {
    throw ConfigError("[" + section + "] " + key + ": cannot parse '" + raw + "'");
  }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& raw) {
  std::filesystem::path p(raw);
  return p.is_relative() && !base.empty() ? base / p : p;
}

}  // namespace

void AppConfig::validate() const {
  try {
    pipeline.validate();
    rewards.validate();
    grpo.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (last_k == 0) throw ConfigError("[attention] last_k must be positive");
  if (leakage.dim == 0 || leakage.layers == 0) throw ConfigError("[leakage] dim and layers must be positive");
  if (mock_embedding_dim == 0) throw ConfigError("[mock] embedding_dim must be positive");
  if (!(endpoint.timeout_seconds > 0.0)) throw ConfigError("[endpoint] timeout_seconds must be positive");
  if (mock_script && !std::filesystem::exists(*mock_script)) {
    throw ConfigError("[mock] script not found: " + mock_script->string());
  }
}

AppConfig parse_app_config(std::string_view text, const std::filesystem::path& base_dir) {
  pt::ptree tree;
  std::istringstream in{std::string(text)};
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }

  AppConfig cfg;
  using Setter = std::function<void(const std::string&)>;
  const std::string* section_name = nullptr;
  const std::string* key_name = nullptr;
  auto num = [&]<typename T>(T& target) {
    return Setter([&target, &section_name, &key_name](const std::string& raw) {
      target = as<T>(*section_name, *key_name, raw);
    });
  };
  std::map<std::string, std::map<std::string, Setter>> setters = {
      {"pipeline",
       {{"n", num(cfg.pipeline.n)},
        {"tau_acc", num(cfg.pipeline.tau_acc)},
        {"tau_cons", num(cfg.pipeline.tau_cons)},
        {"parallelism", num(cfg.pipeline.parallelism)}}},
      {"answer",
       {{"case_fold", num(cfg.pipeline.normalizer.case_fold)},
        {"collapse_whitespace", num(cfg.pipeline.normalizer.collapse_whitespace)},
        {"strip_terminal_punctuation", num(cfg.pipeline.normalizer.strip_terminal_punctuation)}}},
      {"rewards", {{"lambda_acc", num(cfg.rewards.lambda_acc)}, {"lambda_mps", num(cfg.rewards.lambda_mps)}}},
      {"grpo",
       {{"clip_alpha", num(cfg.grpo.clip_alpha)},
        {"kl_beta", num(cfg.grpo.kl_beta)},
        {"eps_stab", num(cfg.grpo.eps_stab)},
        {"kl_estimator",
         [&](const std::string& raw) {
           if (raw == "k3") {
             cfg.grpo.kl_estimator = KlEstimator::K3;
           } else if (raw == "k2") {
             cfg.grpo.kl_estimator = KlEstimator::K2;
           } else {
             throw ConfigError("[grpo] kl_estimator must be k3 or k2");
           }
         }}}},
      {"attention", {{"last_k", num(cfg.last_k)}}},
      {"leakage",
       {{"prefix", num(cfg.leakage.prefix)},
        {"video", num(cfg.leakage.video)},
        {"audio", num(cfg.leakage.audio)},
        {"question", num(cfg.leakage.question)},
        {"mod", num(cfg.leakage.mod)},
        {"visual_reasoning", num(cfg.leakage.visual_reasoning)},
        {"audio_reasoning", num(cfg.leakage.audio_reasoning)},
        {"summary", num(cfg.leakage.summary)},
        {"dim", num(cfg.leakage.dim)},
        {"layers", num(cfg.leakage.layers)}}},
      {"endpoint",
       {{"base_url", [&](const std::string& raw) { cfg.endpoint.base_url = raw; }},
        {"model", [&](const std::string& raw) { cfg.endpoint.model = raw; }},
        {"embedding_model", [&](const std::string& raw) { cfg.endpoint.embedding_model = raw; }},
        {"api_key_env", [&](const std::string& raw) { cfg.endpoint.api_key_env = raw; }},
        {"timeout_seconds", num(cfg.endpoint.timeout_seconds)},
        {"retries", num(cfg.endpoint.retries)},
        {"temperature",
         [&](const std::string& raw) {
           if (!raw.empty()) cfg.endpoint.temperature = as<double>("endpoint", "temperature", raw);
         }},
        {"max_tokens",
         [&](const std::string& raw) {
           if (!raw.empty()) cfg.endpoint.max_tokens = as<std::size_t>("endpoint", "max_tokens", raw);
         }},
        {"prompt_template_file",
         [&](const std::string& raw) {
           if (raw.empty()) return;
           auto path = resolve(base_dir, raw);
           std::ifstream f(path);
           if (!f) throw ConfigError("[endpoint] prompt_template_file not found: " + path.string());
           std::ostringstream buf;
           buf << f.rdbuf();
           cfg.endpoint.prompt_template = buf.str();
         }}}},
      {"mock",
       {{"script",
         [&](const std::string& raw) {
           if (!raw.empty()) cfg.mock_script = resolve(base_dir, raw);
         }},
        {"embedding_dim", num(cfg.mock_embedding_dim)}}},
      {"run", {{"seed", num(cfg.seed)}}},
  };

  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      throw ConfigError("config: key '" + section + "' must be inside a section");
    }
    auto sec = setters.find(section);
    if (sec == setters.end()) throw ConfigError("config: unknown section [" + section + "]");
    for (const auto& [key, value] : body) {
      auto setter = sec->second.find(key);
      if (setter == sec->second.end()) throw ConfigError("config: unknown key [" + section + "] " + key);
      section_name = &section;
      key_name = &key;
      setter->second(value.data());
    }
  }
  cfg.validate();
  return cfg;
}

AppConfig load_app_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_app_config(buf.str(), path.parent_path());
}

}  // namespace avsep
