#include "divek/orchestrator.hpp"

#include <stdexcept>

#include "divek/errors.hpp"
#include "divek/hashing.hpp"
#include "divek/option_miner.hpp"
#include "divek/prompts.hpp"
#include "divek/response_parser.hpp"

namespace divek {

std::string_view to_string(InferenceMode m) {
  switch (m) {
    case InferenceMode::TwoStep: return "two-step";
    case InferenceMode::SingleStep: return "single-step";
    case InferenceMode::Consistency: return "consistency";
  }
  return "two-step";
}

InferenceMode inference_mode_from_string(std::string_view s) {
  if (s == "two-step") return InferenceMode::TwoStep;
  if (s == "single-step") return InferenceMode::SingleStep;
  if (s == "consistency") return InferenceMode::Consistency;
  throw ConfigError("unknown inference mode: " + std::string(s));
}

Json prediction_to_json(const PredictionRecord& p) {
  Json j;
  j["image_id"] = p.image.id;
  j["mode"] = std::string(to_string(p.mode));
  if (p.step1_options) {
    Json opts = Json::array();
    for (const auto& c : *p.step1_options) opts.push_back(c.raw);
    j["step1_options"] = std::move(opts);
  } else {
    j["step1_options"] = nullptr;
  }
  j["step1_contains_gt"] = p.step1_contains_gt ? Json(*p.step1_contains_gt) : Json(nullptr);
  j["final_category"] = p.final_category ? Json(p.final_category->raw) : Json(nullptr);
  j["final_letter"] = p.final_letter ? Json(std::string(1, *p.final_letter)) : Json(nullptr);
  j["K_used"] = p.K_used;
  return j;
}

PredictionRecord prediction_from_json(const Json& j) {
  PredictionRecord p;
  try {
    p.image.id = j.at("image_id").get<std::string>();
    p.mode = inference_mode_from_string(j.at("mode").get<std::string>());
    if (j.contains("step1_options") && !j["step1_options"].is_null()) {
      std::vector<CategoryName> opts;
      for (const auto& o : j["step1_options"]) opts.push_back(normalize_category(o.get<std::string>()));
      p.step1_options = std::move(opts);
    }
    if (j.contains("step1_contains_gt") && !j["step1_contains_gt"].is_null()) {
      p.step1_contains_gt = j["step1_contains_gt"].get<bool>();
    }
    if (j.contains("final_category") && !j["final_category"].is_null()) {
      p.final_category = normalize_category(j["final_category"].get<std::string>());
    }
    if (j.contains("final_letter") && !j["final_letter"].is_null()) {
      const auto s = j["final_letter"].get<std::string>();
      if (s.size() != 1) throw ConfigError("final_letter must be one character");
      p.final_letter = s[0];
    }
    p.K_used = j.at("K_used").get<int>();
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("malformed prediction record: ") + e.what());
  }
  return p;
}

namespace {

bool contains_category(const std::vector<CategoryName>& options, const CategoryName& c) {
  for (const auto& o : options) {
    if (same_category(o, c)) return true;
  }
  return false;
}

std::optional<char> resolve_letter(const std::string& raw, const std::vector<LetteredOption>& options) {
  const ParsedResponse parsed = parse_tagged_response(raw);
  const std::string payload = parsed.answer_payload ? *parsed.answer_payload : raw;
  if (auto letter = extract_option_letter(payload, options)) return letter;
  return unique_name_in_text(payload, options);
}

}  // namespace

PredictionRecord two_step_from_rollouts(InferenceBackend& backend, const ImageRef& image,
                                        std::span<const RolloutRecord> rollouts,
                                        const InferenceOptions& opts,
                                        const std::optional<CategoryName>& gt) {
  if (opts.m < 2) throw PreconditionError("m must be >= 2");
  if (rollouts.empty()) throw PreconditionError("two-step inference needs at least one rollout");
  PredictionRecord rec;
  rec.image = image;
  rec.mode = InferenceMode::TwoStep;
  rec.K_used = static_cast<int>(rollouts.size());

  const HypothesisSet hyp = mine_hypotheses(rollouts);
  if (hyp.empty()) {
    rec.step1_options = std::vector<CategoryName>{};
    if (gt) rec.step1_contains_gt = false;
    return rec;
  }
  std::vector<CategoryName> options = select_topk(hyp, opts.m);
  rec.step1_options = options;
  if (gt) rec.step1_contains_gt = contains_category(options, *gt);

  if (options.size() == 1) {
    rec.final_category = options.front();
    return rec;
  }

  const std::uint64_t shuffle_seed =
      derive_seed(derive_seed(opts.seed, image.id), "K" + std::to_string(rec.K_used));
  const auto lettered = shuffle_options(std::move(options), shuffle_seed);
  const QueryPrompt query = render_mcq_prompt(lettered, opts.domain_noun);
  SamplingParams step2 = opts.params.greedy();
  auto replies = backend.generate(image, query, step2);
  if (replies.size() != 1) throw TransportError("backend returned the wrong number of step-2 replies");
  rec.step2_raw = replies.front();
  if (auto letter = resolve_letter(*rec.step2_raw, lettered)) {
    rec.final_letter = *letter;
    rec.final_category = lettered[position_of(*letter)].second;
  }
  return rec;
}

PredictionRecord two_step_infer(InferenceBackend& backend, const ImageRef& image,
                                const InferenceOptions& opts, const std::optional<CategoryName>& gt) {
  if (opts.K < 1) throw PreconditionError("K must be >= 1");
  if (opts.m < 2) throw PreconditionError("m must be >= 2");
  SamplingParams params = opts.params;
  params.K = opts.K;
  const QueryPrompt query = render_step1_prompt(opts.category_list, opts.domain_noun);
  const auto rollouts = sample_rollouts(backend, image, query, params);
  return two_step_from_rollouts(backend, image, rollouts, opts, gt);
}

PredictionRecord single_step_infer(InferenceBackend& backend, const ImageRef& image,
                                   const InferenceOptions& opts) {
  const QueryPrompt query = render_step1_prompt(opts.category_list, opts.domain_noun);
  const auto rollouts = sample_rollouts(backend, image, query, opts.params.greedy());
  PredictionRecord rec;
  rec.image = image;
  rec.mode = InferenceMode::SingleStep;
  rec.K_used = 1;
  const auto& r = rollouts.front();
  if (r.format_ok && r.predicted_category) rec.final_category = r.predicted_category;
  return rec;
}

std::optional<CategoryName> consistency_predict(std::span<const RolloutRecord> rollouts) {
  if (rollouts.empty()) return std::nullopt;
  const HypothesisSet hyp = mine_hypotheses(rollouts);
  if (hyp.empty()) return std::nullopt;
  return hyp.entries.front().category;
}

PredictionRecord consistency_record(const ImageRef& image, std::span<const RolloutRecord> rollouts,
                                    const std::optional<CategoryName>& gt) {
  PredictionRecord rec;
  rec.image = image;
  rec.mode = InferenceMode::Consistency;
  rec.K_used = static_cast<int>(rollouts.size());
  rec.final_category = consistency_predict(rollouts);
  if (gt && !rollouts.empty()) rec.step1_contains_gt = pass_at_k(rollouts, *gt, rec.K_used);
  return rec;
}

bool pass_at_k(std::span<const RolloutRecord> rollouts, const CategoryName& gt, int k) {
  if (k < 0 || static_cast<std::size_t>(k) > rollouts.size()) {
    throw PreconditionError("pass_at_k: k exceeds the number of rollouts");
  }
  for (int i = 0; i < k; ++i) {
    const auto& r = rollouts[i];
    if (r.format_ok && r.predicted_category && same_category(*r.predicted_category, gt)) return true;
  }
  return false;
}

}  // namespace divek
