#pragma once

#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "divek/category.hpp"
#include "divek/confusion_world.hpp"
#include "divek/sampling.hpp"

namespace divek {

struct SimPolicy;

/// Anything that can answer a prompt about an image with K completions.
/// Implementations must be safe to call concurrently from several threads.
class InferenceBackend {
 public:
  virtual ~InferenceBackend() = default;

  // Exactly params.K raw completions, in request order.
  virtual std::vector<std::string> generate(const ImageRef& image, const QueryPrompt& query,
                                            const SamplingParams& params) = 0;

  virtual Json describe() const = 0;
};

/// K parsed rollouts ordered by rollout_index 0..K-1.
std::vector<RolloutRecord> sample_rollouts(InferenceBackend& backend, const ImageRef& image,
                                           const QueryPrompt& query, const SamplingParams& params);

/// Replays canned responses from a JSONL fixture:
///   {"image_id": ..., "responses": [text, ...], "mcq_response": text?}
/// Open-ended prompts get the first K responses; MCQ prompts get mcq_response.
class ScriptedMockBackend : public InferenceBackend {
 public:
  struct Entry {
    std::vector<std::string> responses;
    std::optional<std::string> mcq_response;
  };

  explicit ScriptedMockBackend(std::unordered_map<std::string, Entry> fixture);
  static ScriptedMockBackend from_file(const std::string& path);

  std::vector<std::string> generate(const ImageRef& image, const QueryPrompt& query,
                                    const SamplingParams& params) override;
  Json describe() const override;

 private:
  std::unordered_map<std::string, Entry> fixture_;
};

/// Samples completions from a ConfusionWorld. Open-ended prompts draw K
/// predicted categories from the true category's confusion row and render
/// them in the think/answer format, corrupting the format with probability
/// format_error_rate. MCQ prompts are answered by a SimPolicy over the
/// image's observation (uniform when no policy is attached).
///
/// Randomness is derived from (seed, image id, prompt), so results do not
/// depend on call order or concurrency.
class ConfusionWorldBackend : public InferenceBackend {
 public:
  ConfusionWorldBackend(std::shared_ptr<const ConfusionWorld> world, std::uint64_t seed);

  void register_image(const SyntheticImage& image);
  void register_images(const std::vector<SyntheticImage>& images);
  void set_policy(std::shared_ptr<const SimPolicy> policy);

  std::vector<std::string> generate(const ImageRef& image, const QueryPrompt& query,
                                    const SamplingParams& params) override;
  Json describe() const override;

  const ConfusionWorld& world() const { return *world_; }
  // Throws ConfigError for unknown ids.
  const SyntheticImage& image(const std::string& id) const;

 private:
  std::vector<std::string> answer_open_ended(const SyntheticImage& img, const QueryPrompt& query,
                                             const SamplingParams& params);
  std::vector<std::string> answer_mcq(const SyntheticImage& img, const QueryPrompt& query,
                                      const SamplingParams& params);

  std::shared_ptr<const ConfusionWorld> world_;
  std::uint64_t seed_;
  mutable std::mutex mu_;
  std::unordered_map<std::string, SyntheticImage> images_;
  std::shared_ptr<const SimPolicy> policy_;
};

// Renders one world prediction as model text.
std::string render_world_prediction(const std::string& surface_form, bool corrupt_format);

}  // namespace divek
