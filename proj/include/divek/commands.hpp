#pragma once

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "divek/backend.hpp"
#include "divek/config.hpp"
#include "divek/evaluator.hpp"
#include "divek/judge.hpp"
#include "divek/orchestrator.hpp"

namespace divek {

struct CommandOptions {
  std::optional<std::uint64_t> seed;
  std::optional<std::vector<int>> k_list;
  std::optional<std::vector<InferenceMode>> modes;
  std::filesystem::path predictions;
  std::filesystem::path baseline;
  std::filesystem::path summary;
  // Trained policy checkpoint answering step-2 questions (world backends).
  std::filesystem::path policy;
  // Stop after this many new images per stage, leaving the run incomplete.
  std::optional<int> limit;
};

/// Images, labels and backend for one run.
struct Workspace {
  std::shared_ptr<InferenceBackend> backend;
  std::shared_ptr<const ConfusionWorld> world;  // world backends only
  std::vector<CategoryName> categories;         // canonical order
  CategorySplit split;
  std::vector<ImageRef> images;                 // sorted by id
  std::unordered_map<std::string, ImageRef> by_id;
  std::unordered_map<std::string, CategoryName> labels;
  std::unordered_map<std::string, Split> split_map;
};

Workspace open_workspace(const PipelineConfig& cfg, std::uint64_t seed);

// Labels JSONL {image_id, category, uri?, source?}; relative uris resolve
// against the file's directory.
std::vector<std::pair<ImageRef, CategoryName>> read_labels(const std::filesystem::path& path);
std::vector<CategoryName> read_categories(const std::filesystem::path& path);

std::unique_ptr<Adjudicator> make_adjudicator(const PipelineConfig& cfg);

std::string predictions_file_name(InferenceMode mode, int K);

// Each returns the process exit code; configuration problems throw
// ConfigError and transport failures TransportError.
int cmd_mine(const PipelineConfig& cfg, const CommandOptions& opts, std::ostream& out);
int cmd_train_sim(const PipelineConfig& cfg, const CommandOptions& opts, std::ostream& out);
int cmd_infer(const PipelineConfig& cfg, const CommandOptions& opts, std::ostream& out);
int cmd_judge(const PipelineConfig& cfg, const CommandOptions& opts, std::ostream& out);
int cmd_report(const PipelineConfig& cfg, const CommandOptions& opts, std::ostream& out);
int cmd_replay(const PipelineConfig& cfg, const CommandOptions& opts, std::ostream& out);

// Dispatch by name; maps exceptions to exit codes 2 (config) and 3
// (transport) and prints the message to `err`.
int run_command(const std::string& name, const PipelineConfig& cfg, const CommandOptions& opts,
                std::ostream& out, std::ostream& err);

}  // namespace divek
