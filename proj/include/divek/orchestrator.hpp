#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "divek/backend.hpp"
#include "divek/category.hpp"
#include "divek/records.hpp"

namespace divek {

enum class InferenceMode { TwoStep, SingleStep, Consistency };

std::string_view to_string(InferenceMode m);
InferenceMode inference_mode_from_string(std::string_view s);

struct PredictionRecord {
  ImageRef image;
  InferenceMode mode = InferenceMode::TwoStep;
  std::optional<std::vector<CategoryName>> step1_options;
  std::optional<bool> step1_contains_gt;
  std::optional<CategoryName> final_category;
  std::optional<char> final_letter;
  int K_used = 0;
  std::optional<std::string> step2_raw;
};

// Predictions file schema:
//   {image_id, mode, step1_options, step1_contains_gt, final_category, final_letter, K_used}
Json prediction_to_json(const PredictionRecord& p);
PredictionRecord prediction_from_json(const Json& j);

struct InferenceOptions {
  std::string domain_noun = "object";
  // Shown in the step-1 prompt (all dataset categories at test time).
  std::vector<CategoryName> category_list;
  int K = 20;
  int m = 5;
  SamplingParams params;  // step-1 sampling; step 2 always uses greedy()
  std::uint64_t seed = 0;
};

/// Step 1 (K rollouts, top-k, no ground-truth injection) then step 2 (MCQ
/// over the mined options, greedy). A single mined category is returned
/// without a step-2 call. `gt`, when given, only fills step1_contains_gt.
PredictionRecord two_step_infer(InferenceBackend& backend, const ImageRef& image,
                                const InferenceOptions& opts,
                                const std::optional<CategoryName>& gt = std::nullopt);

// Same pipeline with step 1 already sampled; K_used = rollouts.size().
PredictionRecord two_step_from_rollouts(InferenceBackend& backend, const ImageRef& image,
                                        std::span<const RolloutRecord> rollouts,
                                        const InferenceOptions& opts,
                                        const std::optional<CategoryName>& gt = std::nullopt);

// One greedy open-ended answer.
PredictionRecord single_step_infer(InferenceBackend& backend, const ImageRef& image,
                                   const InferenceOptions& opts);

// Plurality category with the miner's tie rule; none when nothing parses.
std::optional<CategoryName> consistency_predict(std::span<const RolloutRecord> rollouts);

PredictionRecord consistency_record(const ImageRef& image, std::span<const RolloutRecord> rollouts,
                                    const std::optional<CategoryName>& gt = std::nullopt);

// gt among the predictions of the first k rollouts. Requires k <= size.
bool pass_at_k(std::span<const RolloutRecord> rollouts, const CategoryName& gt, int k);

}  // namespace divek
