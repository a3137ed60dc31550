#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "divek/records.hpp"

namespace divek {

/// Decoding parameters for one request. Defaults are the step-1 rollout
/// settings: nucleus sampling, K = 20 responses.
struct SamplingParams {
  int K = 20;
  double temperature = 1.0;
  double top_p = 0.95;
  int max_new_tokens = 1024;
  double repetition_penalty = 1.1;
  std::optional<std::uint64_t> seed;

  // Throws ConfigError when a field is out of range.
  void validate() const;

  // One deterministic completion (temperature 0), other fields kept.
  SamplingParams greedy() const;
};

Json to_json(const SamplingParams& p);
SamplingParams sampling_params_from_json(const Json& j);

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{500};
  double backoff_multiplier = 2.0;
};

enum class BackendKind { HttpChat, ScriptedMock, ConfusionWorld };

std::string_view to_string(BackendKind k);
BackendKind backend_kind_from_string(std::string_view s);

struct BackendDescriptor {
  BackendKind kind = BackendKind::ConfusionWorld;
  // http-chat: base URL up to and including the API version, e.g.
  // "https://openrouter.ai/api/v1"; "/chat/completions" is appended.
  std::string endpoint;
  std::string model;
  // scripted-mock fixture (JSONL) or confusion-world spec (JSON).
  std::string fixture_path;
  std::string world_path;
  int concurrency = 4;
  RetryPolicy retry;
  // Only sent when the endpoint is known to accept it.
  bool supports_repetition_penalty = false;
  // Ask for all K completions in one request with n=K. Falls back to K
  // single requests when the endpoint refuses or under-delivers.
  bool batch_n = true;
  std::string api_key_env = "DIVEK_API_KEY";
  std::chrono::seconds timeout{120};

  void validate() const;
};

Json to_json(const BackendDescriptor& d);

}  // namespace divek
