// Copyright 2026 The avsep Authors
// SPDX-License-Identifier: Apache-2.0

#include "avsep/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <charconv>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <sstream>

#include "avsep/app_config.hpp"
#include "avsep/attention_core.hpp"
#include "avsep/mask_engine.hpp"
#include "avsep/mask_io.hpp"
#include "avsep/pem_pipeline.hpp"
#include "avsep/rl_core.hpp"
#include "avsep/tag_grammar.hpp"

namespace avsep {

std::string format_double(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc()) return "nan";
  return std::string(buf, ptr);
}

namespace {

using ordered_json = nlohmann::ordered_json;

/// A failure that maps to a usage exit code with a message on stderr.
class CliError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::vector<nlohmann::json> read_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CliError("cannot open " + path);
  std::vector<nlohmann::json> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      rows.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::parse_error& e) {
      throw CliError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return rows;
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CliError("cannot write " + path);
  return out;
}

std::string join_doubles(const std::vector<double>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ' ';
    out += format_double(values[i]);
  }
  return out;
}

AppConfig load_config(const std::string& path) {
  if (path.empty()) {
    AppConfig cfg;
    cfg.validate();
    return cfg;
  }
  if (!std::filesystem::exists(path)) throw CliError("config file not found: " + path);
  return load_app_config(path);
}

// ------------------------------------------------------------------ annotate

struct AnnotateArgs {
  std::string in;
  std::string out;
  std::string labeled_out;
  std::string report;
  std::string mock_script;
  bool mock = false;
  std::size_t parallelism = 0;
};

int cmd_annotate(const AnnotateArgs& args, const AppConfig& base_cfg, bool json, std::ostream& out) {
  AppConfig cfg = base_cfg;
  if (args.parallelism > 0) cfg.pipeline.parallelism = args.parallelism;
  if (!std::filesystem::exists(args.in)) throw CliError("input file not found: " + args.in);
  std::vector<Instance> dataset = read_instances(args.in);

  std::unique_ptr<CotSampler> sampler;
  std::unique_ptr<TextEmbedder> embedder;
  if (args.mock) {
    std::filesystem::path script = args.mock_script.empty() ? cfg.mock_script.value_or(std::filesystem::path()) : std::filesystem::path(args.mock_script);
    if (script.empty()) throw CliError("--mock needs a sampler script (--mock-script or [mock] script)");
    sampler = std::make_unique<ScriptedSampler>(ScriptedSampler::from_jsonl(script));
    embedder = std::make_unique<HashingEmbedder>(cfg.mock_embedding_dim);
  } else {
    if (cfg.endpoint.base_url.empty()) {
      throw CliError("no sampling endpoint configured ([endpoint] base_url); pass --mock for offline runs");
    }
    sampler = std::make_unique<HttpCotSampler>(cfg.endpoint);
    embedder = std::make_unique<HttpEmbedder>(cfg.endpoint);
  }

  AnnotationResult result = annotate(dataset, *sampler, *embedder, cfg.pipeline);

  {
    auto f = open_output(args.out);
    for (const auto& r : result.records) f << to_json(r).dump() << '\n';
  }
  if (!args.labeled_out.empty()) {
    std::map<std::string, const Instance*> by_id;
    for (const auto& inst : dataset) by_id[inst.id] = &inst;
    auto f = open_output(args.labeled_out);
    for (const auto& r : result.records) {
      if (r.labeled()) f << labeled_row(r, *by_id.at(r.id)).dump() << '\n';
    }
  }
  const std::string report_text = format_stats_report(result.stats);
  {
    auto f = open_output(args.report.empty() ? args.out + ".report.txt" : args.report);
    f << report_text;
  }

  if (json) {
    ordered_json summary;
    summary["instances"] = result.stats.total;
    summary["labeled"] = result.stats.labeled;
    summary["failed"] = result.stats.failures.size();
    ordered_json labels = ordered_json::object();
    for (PemLabel l : {PemLabel::Audio, PemLabel::Visual, PemLabel::AudioVisual}) {
      auto it = result.stats.label_counts.find(l);
      labels[std::string(to_string(l))] = it == result.stats.label_counts.end() ? 0 : it->second;
    }
    ordered_json discards = ordered_json::object();
    for (DiscardReason d : {DiscardReason::TriviallyEasy, DiscardReason::Ambiguous, DiscardReason::Contradictory,
                            DiscardReason::Unsolvable}) {
      auto it = result.stats.discard_counts.find(d);
      discards[std::string(to_string(d))] = it == result.stats.discard_counts.end() ? 0 : it->second;
    }
    summary["labels"] = labels;
    summary["discards"] = discards;
    out << summary.dump() << '\n';
  } else {
    out << report_text;
  }
  if (result.records.empty()) return kExitRecordErrors;
  return result.stats.failures.empty() ? kExitOk : kExitRecordErrors;
}

// ------------------------------------------------------------------ validate

struct GoldLabel {
  PemLabel pem;
  std::string answer;
};

int cmd_validate(const std::string& traces_path, const std::string& labels_path, const std::string& out_path,
                 const AppConfig& cfg, bool json, std::ostream& out) {
  std::map<std::string, GoldLabel> labels;
  for (const auto& row : read_jsonl(labels_path)) {
    std::string id = row.at("id").get<std::string>();
    auto pem = parse_pem_label(row.at("pem").get<std::string>());
    if (!pem) throw CliError("labels: unknown pem '" + row.at("pem").get<std::string>() + "' for " + id);
    if (!labels.emplace(id, GoldLabel{*pem, row.at("answer").get<std::string>()}).second) {
      throw CliError("labels: duplicate id " + id);
    }
  }
  std::vector<std::pair<std::string, std::string>> traces;
  std::set<std::string> trace_ids;
  for (const auto& row : read_jsonl(traces_path)) {
    std::string id = row.at("id").get<std::string>();
    if (!trace_ids.insert(id).second) throw CliError("traces: duplicate id " + id);
    traces.emplace_back(id, row.at("text").get<std::string>());
  }
  for (const auto& [id, _] : traces) {
    if (!labels.count(id)) throw CliError("id mismatch: trace " + id + " has no label");
  }
  for (const auto& [id, _] : labels) {
    if (!trace_ids.count(id)) throw CliError("id mismatch: label " + id + " has no trace");
  }

  double sum_mps = 0.0, sum_acc = 0.0, sum_stage2 = 0.0;
  std::size_t malformed = 0;
  std::ofstream file;
  if (!out_path.empty()) file = open_output(out_path);
  for (const auto& [id, text] : traces) {
    const GoldLabel& gold = labels.at(id);
    StructureCheck check = validate_structure(text);
    const int mps = reward_mps(text, gold.pem);
    const int acc = reward_acc(text, gold.answer, cfg.rewards.normalizer);
    const double stage2 = reward_stage2(text, gold.pem, gold.answer, cfg.rewards);
    sum_mps += mps;
    sum_acc += acc;
    sum_stage2 += stage2;
    malformed += check.valid ? 0 : 1;
    ordered_json row;
    row["id"] = id;
    row["valid"] = check.valid;
    row["r_mps"] = mps;
    row["r_acc"] = acc;
    row["r_stage2"] = stage2;
    ordered_json diags = ordered_json::array();
    for (const auto& d : check.diagnostics) {
      diags.push_back({{"kind", to_string(d.kind)}, {"offset", d.offset}, {"message", d.message}});
    }
    row["diagnostics"] = diags;
    if (file.is_open()) file << row.dump() << '\n';
  }
  const double count = traces.empty() ? 1.0 : static_cast<double>(traces.size());
  if (json) {
    ordered_json summary;
    summary["traces"] = traces.size();
    summary["malformed"] = malformed;
    summary["mean_r_mps"] = sum_mps / count;
    summary["mean_r_acc"] = sum_acc / count;
    summary["mean_r_stage2"] = sum_stage2 / count;
    out << summary.dump() << '\n';
  } else {
    out << "traces " << traces.size() << '\n'
        << "malformed " << malformed << '\n'
        << "mean_r_mps " << format_double(sum_mps / count) << '\n'
        << "mean_r_acc " << format_double(sum_acc / count) << '\n'
        << "mean_r_stage2 " << format_double(sum_stage2 / count) << '\n';
  }
  return kExitOk;
}

// ------------------------------------------------------------------ mask

int cmd_mask(const std::string& spec_path, const std::string& out_path, const std::string& format,
             std::optional<std::size_t> row, std::ostream& out) {
  if (out_path.empty() && !row) throw CliError("mask: give --out, --row, or both");
  TokenLayout layout = load_layout_spec(spec_path).resolve();
  if (row) {
    std::string line;
    for (auto cell : incremental_row(layout, *row)) line += cell ? '1' : '0';
    out << line << '\n';
  }
  if (!out_path.empty()) {
    MaskMatrix mask = build_composite(layout);
    auto f = open_output(out_path);
    if (format == "rle") {
      auto bytes = mask_to_rle(mask);
      f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    } else {
      f << mask_to_text(mask);
    }
  }
  return kExitOk;
}

// ------------------------------------------------------------------ grpo-step

RolloutGroup group_from_json(const nlohmann::json& j) {
  RolloutGroup g;
  g.group_id = j.value("group_id", "");
  g.rewards = j.at("rewards").get<std::vector<double>>();
  g.logp_new = j.at("logp_new").get<std::vector<double>>();
  g.logp_old = j.at("logp_old").get<std::vector<double>>();
  g.logp_ref = j.at("logp_ref").get<std::vector<double>>();
  return g;
}

int cmd_grpo_step(const std::string& rollouts, const GrpoConfig& grpo, bool json, std::ostream& out) {
  int status = kExitOk;
  for (const auto& row : read_jsonl(rollouts)) {
    RolloutGroup group = group_from_json(row);
    ordered_json rec;
    rec["group_id"] = group.group_id;
    try {
      GrpoResult r = grpo_objective(group, grpo);
      if (json) {
        rec["advantages"] = r.advantages;
        rec["ratios"] = r.ratios;
        rec["terms"] = r.terms;
        rec["surrogate"] = r.surrogate;
        rec["kl"] = r.kl;
        rec["objective"] = r.objective;
        out << rec.dump() << '\n';
      } else {
        out << "group " << group.group_id << '\n'
            << "  advantages " << join_doubles(r.advantages) << '\n'
            << "  ratios " << join_doubles(r.ratios) << '\n'
            << "  terms " << join_doubles(r.terms) << '\n'
            << "  surrogate " << format_double(r.surrogate) << '\n'
            << "  kl " << format_double(r.kl) << '\n'
            << "  objective " << format_double(r.objective) << '\n';
      }
    } catch (const std::exception& e) {
      status = kExitRecordErrors;
      if (json) {
        rec["error"] = e.what();
        out << rec.dump() << '\n';
      } else {
        out << "group " << group.group_id << "\n  error " << e.what() << '\n';
      }
    }
  }
  return status;
}

// ------------------------------------------------------------------ attn-report

int cmd_attn_report(const std::string& weights_path, const std::string& spec_path, std::size_t last_k,
                    const std::string& query, bool json, std::ostream& out) {
  LayoutSpec spec = load_layout_spec(spec_path);
  TokenLayout layout = spec.resolve();
  IndexSet query_span = query.empty() ? spec.summary_set() : IndexSet{};
  if (!query.empty()) {
    for (const auto& r : parse_ranges(query)) query_span = query_span.united(IndexSet::range(r.first, r.last));
  }
  if (query_span.empty()) throw CliError("attn-report: no query span (set 'summary' in the spec or pass --query)");
  if (!std::filesystem::exists(weights_path)) throw CliError("weights file not found: " + weights_path);
  std::vector<Matrix> layers = read_weight_dump(weights_path);
  AllocationReport report = attention_allocation(layers, layout, query_span, last_k);
  if (json) {
    ordered_json j;
    j["last_k"] = report.last_k;
    ordered_json per_layer = ordered_json::array();
    for (const auto& l : report.layers) {
      per_layer.push_back({{"layer", l.layer},
                           {"audio_mass", l.audio_mass},
                           {"visual_mass", l.visual_mass},
                           {"audio_fraction", l.audio_fraction},
                           {"visual_fraction", l.visual_fraction}});
    }
    j["layers"] = per_layer;
    j["audio_fraction"] = report.audio_fraction;
    j["visual_fraction"] = report.visual_fraction;
    out << j.dump() << '\n';
  } else {
    for (const auto& l : report.layers) {
      out << "layer " << l.layer << " audio " << format_double(l.audio_fraction) << " visual "
          << format_double(l.visual_fraction) << '\n';
    }
    out << "last_k " << report.last_k << '\n'
        << "audio_fraction " << format_double(report.audio_fraction) << '\n'
        << "visual_fraction " << format_double(report.visual_fraction) << '\n';
  }
  return kExitOk;
}

// ------------------------------------------------------------------ leakage

LeakageSizes parse_sizes(const std::string& text, LeakageSizes sizes) {
  std::map<std::string, std::size_t*> fields = {
      {"prefix", &sizes.prefix},   {"video", &sizes.video},
      {"audio", &sizes.audio},     {"question", &sizes.question},
      {"mod", &sizes.mod},         {"visual_reasoning", &sizes.visual_reasoning},
      {"audio_reasoning", &sizes.audio_reasoning}, {"summary", &sizes.summary},
      {"dim", &sizes.dim},         {"layers", &sizes.layers},
  };
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    auto eq = item.find('=');
    if (eq == std::string::npos) throw CliError("--sizes expects role=count pairs");
    auto it = fields.find(item.substr(0, eq));
    if (it == fields.end()) throw CliError("--sizes: unknown role '" + item.substr(0, eq) + "'");
    const std::string value = item.substr(eq + 1);
    std::size_t parsed = 0;
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), parsed);
    if (ec != std::errc() || ptr != value.data() + value.size()) throw CliError("--sizes: bad count '" + value + "'");
    *it->second = parsed;
  }
  return sizes;
}

int cmd_leakage(std::uint64_t seed, bool use_maam, const LeakageSizes& sizes, bool json, std::ostream& out) {
  LeakageReport r = leakage_probe(seed, sizes, use_maam);
  if (json) {
    ordered_json j;
    j["seed"] = seed;
    j["maam"] = use_maam;
    j["direct_leakage"] = r.direct_leakage;
    j["blocked_pair_mass"] = r.blocked_pair_mass;
    j["blocked_pairs"] = r.blocked_pairs;
    j["length"] = r.length;
    out << j.dump() << '\n';
  } else {
    out << "seed " << seed << '\n'
        << "maam " << (use_maam ? "on" : "off") << '\n'
        << "direct_leakage " << format_double(r.direct_leakage) << '\n'
        << "blocked_pair_mass " << format_double(r.blocked_pair_mass) << '\n'
        << "blocked_pairs " << r.blocked_pairs << '\n'
        << "length " << r.length << '\n';
  }
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Separate-then-fuse audio-visual reasoning toolkit: traces, masks, rewards, annotation."};
  app.require_subcommand(1);
  std::string config_path;
  bool json = false;
  app.add_option("--config", config_path, "Key-value (INI) config file; defaults are built in");
  app.add_flag("--json", json, "Print a machine-readable summary");

  AnnotateArgs ann;
  auto* annotate_cmd = app.add_subcommand("annotate", "Label instances with their preferred evidence modality");
  annotate_cmd->add_option("--in", ann.in, "Instance JSONL")->required();
  annotate_cmd->add_option("--out", ann.out, "Output JSONL of per-instance records")->required();
  annotate_cmd->add_option("--labeled-out", ann.labeled_out, "Optional JSONL of labeled training rows");
  annotate_cmd->add_option("--report", ann.report, "Stats report path (default: <out>.report.txt)");
  annotate_cmd->add_flag("--mock", ann.mock, "Use the scripted offline sampler and hashing embedder");
  annotate_cmd->add_option("--mock-script", ann.mock_script, "Sampler script JSONL for --mock");
  annotate_cmd->add_option("--parallelism", ann.parallelism, "Concurrent instances (overrides config)");

  std::string traces_path, labels_path, scored_path;
  auto* validate_cmd = app.add_subcommand("validate", "Check trace structure and score rewards");
  validate_cmd->add_option("--traces", traces_path, "Trace JSONL {id, text}")->required();
  validate_cmd->add_option("--labels", labels_path, "Gold JSONL {id, pem, answer}")->required();
  validate_cmd->add_option("--out", scored_path, "Scored JSONL output");

  std::string spec_path, mask_out, mask_format = "text";
  std::optional<std::size_t> mask_row;
  auto* mask_cmd = app.add_subcommand("mask", "Build the composite attention mask for a layout spec");
  mask_cmd->add_option("--spec", spec_path, "Layout spec file")->required();
  mask_cmd->add_option("--out", mask_out, "Write the full mask here");
  mask_cmd->add_option("--format", mask_format, "Mask file format")->check(CLI::IsMember({"text", "rle"}));
  mask_cmd->add_option("--row", mask_row, "Print one decoding row (0 = blocked, 1 = visible)");

  std::string rollouts_path;
  std::optional<double> alpha, beta, eps;
  auto* grpo_cmd = app.add_subcommand("grpo-step", "Group advantages and clipped objective per rollout group");
  grpo_cmd->add_option("--rollouts", rollouts_path, "Rollout JSONL")->required();
  grpo_cmd->add_option("--alpha", alpha, "Clip range");
  grpo_cmd->add_option("--beta", beta, "KL coefficient");
  grpo_cmd->add_option("--eps", eps, "Advantage stabilizer");

  std::string weights_path, report_spec, query;
  std::optional<std::size_t> last_k;
  auto* attn_cmd = app.add_subcommand("attn-report", "Audio vs visual attention allocation over the last layers");
  attn_cmd->add_option("--weights", weights_path, "Weights JSONL, one layer per line")->required();
  attn_cmd->add_option("--spec", report_spec, "Layout spec file")->required();
  attn_cmd->add_option("--last-k", last_k, "Layer window (default from config: 16)");
  attn_cmd->add_option("--query", query, "Query rows, e.g. '20-23' (default: spec 'summary')");

  std::optional<std::uint64_t> seed;
  bool no_maam = false;
  std::string sizes_text;
  auto* leak_cmd = app.add_subcommand("leakage", "Measure attention mass on modality-blocked pairs");
  leak_cmd->add_option("--seed", seed, "Random seed (default from config)");
  leak_cmd->add_flag("--no-maam", no_maam, "Use plain causal attention");
  leak_cmd->add_option("--sizes", sizes_text, "Role counts, e.g. 'audio=0,audio_reasoning=0'");

  std::vector<char*> argv;
  std::vector<std::string> storage(args.begin(), args.end());
  if (storage.empty()) storage.push_back("avsep");
  for (auto& s : storage) argv.push_back(s.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    AppConfig cfg = load_config(config_path);
    if (*annotate_cmd) return cmd_annotate(ann, cfg, json, out);
    if (*validate_cmd) return cmd_validate(traces_path, labels_path, scored_path, cfg, json, out);
    if (*mask_cmd) return cmd_mask(spec_path, mask_out, mask_format, mask_row, out);
    if (*grpo_cmd) {
      GrpoConfig grpo = cfg.grpo;
      if (alpha) grpo.clip_alpha = *alpha;
      if (beta) grpo.kl_beta = *beta;
      if (eps) grpo.eps_stab = *eps;
      grpo.validate();
      return cmd_grpo_step(rollouts_path, grpo, json, out);
    }
    if (*attn_cmd) return cmd_attn_report(weights_path, report_spec, last_k.value_or(cfg.last_k), query, json, out);
    if (*leak_cmd) {
      return cmd_leakage(seed.value_or(cfg.seed), !no_maam, parse_sizes(sizes_text, cfg.leakage), json, out);
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace avsep
