#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "divek/category.hpp"

namespace divek {

using Json = nlohmann::ordered_json;

// Rollouts file schema:
//   {image_id, rollout_index, raw_text, reasoning, predicted_category, format_ok}
// Only image_id is persisted for the image; source/split/uri are re-attached
// from the labels file when a log is loaded for mining or inference.
Json rollout_to_json(const RolloutRecord& r);
RolloutRecord rollout_from_json(const Json& j);

struct JsonlContents {
  std::vector<Json> rows;
  // Set when the last line was cut off (no trailing newline or invalid JSON),
  // which is what an interrupted writer leaves behind.
  bool truncated_tail = false;
};

JsonlContents read_jsonl(const std::filesystem::path& path);
void write_jsonl(const std::filesystem::path& path, const std::vector<Json>& rows);
std::string to_jsonl(const std::vector<Json>& rows);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& contents);

}  // namespace divek
