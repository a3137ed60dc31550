#include "divek/sampling.hpp"

#include "divek/errors.hpp"

namespace divek {

void SamplingParams::validate() const {
  if (K < 1) throw ConfigError("K must be >= 1");
  if (temperature < 0.0) throw ConfigError("temperature must be >= 0");
  if (!(top_p > 0.0 && top_p <= 1.0)) throw ConfigError("top_p must be in (0, 1]");
  if (max_new_tokens < 1) throw ConfigError("max_new_tokens must be >= 1");
  if (!(repetition_penalty > 0.0)) throw ConfigError("repetition_penalty must be > 0");
}

SamplingParams SamplingParams::greedy() const {
  SamplingParams p = *this;
  p.K = 1;
  p.temperature = 0.0;
  return p;
}

Json to_json(const SamplingParams& p) {
  Json j;
  j["K"] = p.K;
  j["temperature"] = p.temperature;
  j["top_p"] = p.top_p;
  j["max_new_tokens"] = p.max_new_tokens;
  j["repetition_penalty"] = p.repetition_penalty;
  j["seed"] = p.seed ? Json(*p.seed) : Json(nullptr);
  return j;
}

SamplingParams sampling_params_from_json(const Json& j) {
  SamplingParams p;
  p.K = j.value("K", p.K);
  p.temperature = j.value("temperature", p.temperature);
  p.top_p = j.value("top_p", p.top_p);
  p.max_new_tokens = j.value("max_new_tokens", p.max_new_tokens);
  p.repetition_penalty = j.value("repetition_penalty", p.repetition_penalty);
  if (j.contains("seed") && !j["seed"].is_null()) p.seed = j["seed"].get<std::uint64_t>();
  return p;
}

std::string_view to_string(BackendKind k) {
  switch (k) {
    case BackendKind::HttpChat: return "http-chat";
    case BackendKind::ScriptedMock: return "scripted-mock";
    case BackendKind::ConfusionWorld: return "confusion-world";
  }
  return "confusion-world";
}

BackendKind backend_kind_from_string(std::string_view s) {
  if (s == "http-chat") return BackendKind::HttpChat;
  if (s == "scripted-mock") return BackendKind::ScriptedMock;
  if (s == "confusion-world") return BackendKind::ConfusionWorld;
  throw ConfigError("unknown backend kind '" + std::string(s) + "'");
}

void BackendDescriptor::validate() const {
  if (concurrency < 1) throw ConfigError("backend concurrency must be >= 1");
  if (retry.max_attempts < 1) throw ConfigError("retry max_attempts must be >= 1");
  switch (kind) {
    case BackendKind::HttpChat:
      if (endpoint.empty()) throw ConfigError("http-chat backend needs an endpoint");
      if (model.empty()) throw ConfigError("http-chat backend needs a model id");
      break;
    case BackendKind::ScriptedMock:
      if (fixture_path.empty()) throw ConfigError("scripted-mock backend needs a fixture path");
      break;
    case BackendKind::ConfusionWorld:
      break;
  }
}

Json to_json(const BackendDescriptor& d) {
  Json j;
  j["kind"] = std::string(to_string(d.kind));
  j["endpoint"] = d.endpoint;
  j["model"] = d.model;
  j["fixture_path"] = d.fixture_path;
  j["world_path"] = d.world_path;
  j["concurrency"] = d.concurrency;
  j["retry"] = {{"max_attempts", d.retry.max_attempts},
                {"initial_backoff_ms", d.retry.initial_backoff.count()},
                {"backoff_multiplier", d.retry.backoff_multiplier}};
  j["supports_repetition_penalty"] = d.supports_repetition_penalty;
  j["batch_n"] = d.batch_n;
  return j;
}

}  // namespace divek
