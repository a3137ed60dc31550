#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "divek/confusion_world.hpp"
#include "divek/orchestrator.hpp"
#include "divek/records.hpp"
#include "divek/sampling.hpp"
#include "divek/sim_trainer.hpp"

namespace divek {

/// Reads the TOML subset used by pipeline configs into a JSON tree:
/// [section] and [a.b] headers, `key = value` with strings, integers,
/// floats, booleans and flat arrays, and # comments. Throws ConfigError
/// with the line number on anything else.
Json parse_toml_subset(std::string_view text);

enum class JudgeKind { Exact, SubstringStrict, SubstringBidirectional, Llm };

std::string_view to_string(JudgeKind k);
JudgeKind judge_kind_from_string(std::string_view s);

struct JudgeConfig {
  JudgeKind kind = JudgeKind::Exact;
  BackendDescriptor backend;  // used when kind == Llm
  std::filesystem::path cache_path;
  int concurrency = 4;
};

struct PipelineConfig {
  std::filesystem::path config_path;
  std::filesystem::path output_dir;
  std::uint64_t seed = 0;

  std::string domain_noun = "object";
  // Canonical category order, one per line. Not needed for world backends.
  std::filesystem::path categories_path;
  // JSONL {image_id, category, uri?, source?}. Not needed for world backends.
  std::filesystem::path labels_path;
  // Prior rollout log to mine instead of sampling.
  std::filesystem::path rollouts_path;

  BackendDescriptor backend;
  JudgeConfig judge;
  SamplingParams sampling;
  int m = 5;
  TrainConfig train;

  WorldConfig world;
  int world_images = 200;

  std::vector<int> k_list{20};
  std::vector<InferenceMode> modes{InferenceMode::TwoStep};

  // Parsed file, kept for the manifest.
  Json raw;

  bool uses_world() const { return backend.kind == BackendKind::ConfusionWorld; }

  // Ranges plus existence of every referenced input path.
  void validate() const;
};

// Relative paths are resolved against the config file's directory.
PipelineConfig load_config(const std::filesystem::path& path);
PipelineConfig config_from_json(const Json& tree, const std::filesystem::path& base_dir);

Json to_json(const PipelineConfig& c);

std::vector<int> parse_k_list(std::string_view text);

}  // namespace divek
