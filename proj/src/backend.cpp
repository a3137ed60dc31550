#include "divek/backend.hpp"

#include <algorithm>

#include "divek/errors.hpp"
#include "divek/hashing.hpp"
#include "divek/http_chat.hpp"
#include "divek/option_miner.hpp"
#include "divek/sim_trainer.hpp"

namespace divek {

std::vector<RolloutRecord> sample_rollouts(InferenceBackend& backend, const ImageRef& image,
                                           const QueryPrompt& query, const SamplingParams& params) {
  params.validate();
  std::vector<std::string> texts = backend.generate(image, query, params);
  if (static_cast<int>(texts.size()) != params.K) {
    throw TransportError("backend returned " + std::to_string(texts.size()) + " completions, expected " +
                         std::to_string(params.K));
  }
  std::vector<RolloutRecord> out;
  out.reserve(texts.size());
  for (int i = 0; i < params.K; ++i) out.push_back(make_rollout(image, i, std::move(texts[i])));
  return out;
}

// ---------------------------------------------------------------------------
// Scripted mock

ScriptedMockBackend::ScriptedMockBackend(std::unordered_map<std::string, Entry> fixture)
    : fixture_(std::move(fixture)) {}

ScriptedMockBackend ScriptedMockBackend::from_file(const std::string& path) {
  std::unordered_map<std::string, Entry> fixture;
  for (const auto& row : read_jsonl(path).rows) {
    try {
      Entry e;
      e.responses = row.at("responses").get<std::vector<std::string>>();
      if (row.contains("mcq_response") && !row["mcq_response"].is_null()) {
        e.mcq_response = row["mcq_response"].get<std::string>();
      }
      fixture[row.at("image_id").get<std::string>()] = std::move(e);
    } catch (const Json::exception& ex) {
      throw ConfigError("malformed fixture line in " + path + ": " + ex.what());
    }
  }
  return ScriptedMockBackend(std::move(fixture));
}

std::vector<std::string> ScriptedMockBackend::generate(const ImageRef& image,
                                                       const QueryPrompt& query,
                                                       const SamplingParams& params) {
  const auto it = fixture_.find(image.id);
  if (it == fixture_.end()) throw ConfigError("fixture has no entry for image " + image.id);
  if (query.template_id == templates::kMcq) {
    if (!it->second.mcq_response) throw ConfigError("fixture has no mcq_response for " + image.id);
    return std::vector<std::string>(params.K, *it->second.mcq_response);
  }
  const auto& responses = it->second.responses;
  if (static_cast<int>(responses.size()) < params.K) {
    throw ConfigError("fixture exhausted for image " + image.id + ": " +
                      std::to_string(responses.size()) + " responses, K=" + std::to_string(params.K));
  }
  return {responses.begin(), responses.begin() + params.K};
}

Json ScriptedMockBackend::describe() const {
  return Json{{"kind", "scripted-mock"}, {"images", fixture_.size()}};
}

// ---------------------------------------------------------------------------
// Confusion world

std::string render_world_prediction(const std::string& surface_form, bool corrupt_format) {
  if (corrupt_format) return "I think this is a " + surface_form;
  return "<think>The visible features best match " + surface_form + ".</think> <answer>" +
         surface_form + "</answer>";
}

ConfusionWorldBackend::ConfusionWorldBackend(std::shared_ptr<const ConfusionWorld> world,
                                             std::uint64_t seed)
    : world_(std::move(world)), seed_(seed) {
  if (!world_) throw ConfigError("confusion-world backend needs a world");
}

void ConfusionWorldBackend::register_image(const SyntheticImage& image) {
  if (image.category < 0 || image.category >= world_->num_categories) {
    throw PreconditionError("synthetic image category out of range");
  }
  std::lock_guard lock(mu_);
  images_[image.image.id] = image;
}

void ConfusionWorldBackend::register_images(const std::vector<SyntheticImage>& images) {
  for (const auto& img : images) register_image(img);
}

void ConfusionWorldBackend::set_policy(std::shared_ptr<const SimPolicy> policy) {
  std::lock_guard lock(mu_);
  policy_ = std::move(policy);
}

const SyntheticImage& ConfusionWorldBackend::image(const std::string& id) const {
  std::lock_guard lock(mu_);
  const auto it = images_.find(id);
  if (it == images_.end()) throw ConfigError("confusion world has no image " + id);
  return it->second;
}

std::vector<std::string> ConfusionWorldBackend::generate(const ImageRef& image,
                                                         const QueryPrompt& query,
                                                         const SamplingParams& params) {
  const SyntheticImage& img = this->image(image.id);
  if (query.template_id == templates::kMcq) return answer_mcq(img, query, params);
  return answer_open_ended(img, query, params);
}

std::vector<std::string> ConfusionWorldBackend::answer_open_ended(const SyntheticImage& img,
                                                                  const QueryPrompt& query,
                                                                  const SamplingParams& params) {
  const auto& row = world_->confusion[img.category];
  std::vector<std::string> out;
  out.reserve(params.K);
  if (params.temperature == 0.0) {
    const int mode = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    out.assign(params.K, render_world_prediction(world_->canonical_name(mode), false));
    return out;
  }
  std::uint64_t s = derive_seed(derive_seed(seed_, img.image.id), query.template_id + "\n" + query.rendered);
  if (params.seed) s = mix_seed(s, *params.seed);
  std::mt19937_64 rng(s);
  std::discrete_distribution<int> predict(row.begin(), row.end());
  std::bernoulli_distribution corrupt(world_->format_error_rate);
  for (int i = 0; i < params.K; ++i) {
    const int c = predict(rng);
    const auto& forms = world_->aliases[c];
    std::uniform_int_distribution<std::size_t> pick(0, forms.size() - 1);
    const std::string& surface = forms[pick(rng)];
    out.push_back(render_world_prediction(surface, corrupt(rng)));
  }
  return out;
}

std::vector<std::string> ConfusionWorldBackend::answer_mcq(const SyntheticImage& img,
                                                           const QueryPrompt& query,
                                                           const SamplingParams& params) {
  if (!query.category_list || query.category_list->empty()) {
    throw PreconditionError("MCQ prompt carries no options");
  }
  const auto& options = *query.category_list;
  std::vector<int> indices;
  indices.reserve(options.size());
  for (const auto& name : options) {
    const int idx = world_->index_of(name);
    if (idx < 0) throw ConfigError("option '" + name.raw + "' is not a world category");
    indices.push_back(idx);
  }
  std::shared_ptr<const SimPolicy> policy;
  {
    std::lock_guard lock(mu_);
    policy = policy_;
  }
  std::vector<double> probs = policy ? policy_distribution(*policy, img.observation, indices)
                                     : std::vector<double>(indices.size(), 1.0 / indices.size());

  const auto render = [](int position) {
    return "<think>Comparing the listed options against the observed features.</think> <answer>" +
           std::string(1, letter_for(position)) + "</answer>";
  };
  std::vector<std::string> out;
  out.reserve(params.K);
  if (params.temperature == 0.0) {
    const int best = static_cast<int>(std::max_element(probs.begin(), probs.end()) - probs.begin());
    out.assign(params.K, render(best));
    return out;
  }
  std::uint64_t s = derive_seed(derive_seed(seed_, img.image.id), query.template_id + "\n" + query.rendered);
  if (params.seed) s = mix_seed(s, *params.seed);
  std::mt19937_64 rng(s);
  std::discrete_distribution<int> choose(probs.begin(), probs.end());
  for (int i = 0; i < params.K; ++i) out.push_back(render(choose(rng)));
  return out;
}

Json ConfusionWorldBackend::describe() const {
  return Json{{"kind", "confusion-world"},
              {"num_categories", world_->num_categories},
              {"observation_dim", world_->observation_dim},
              {"seed", seed_}};
}

// ---------------------------------------------------------------------------

std::shared_ptr<InferenceBackend> make_backend(const BackendDescriptor& descriptor,
                                               std::uint64_t seed) {
  descriptor.validate();
  switch (descriptor.kind) {
    case BackendKind::ScriptedMock:
      return std::make_shared<ScriptedMockBackend>(ScriptedMockBackend::from_file(descriptor.fixture_path));
    case BackendKind::HttpChat:
      return std::make_shared<HttpChatBackend>(
          std::make_shared<ChatClient>(descriptor, api_key_from_env(descriptor)));
    case BackendKind::ConfusionWorld: {
      if (descriptor.world_path.empty()) throw ConfigError("confusion-world backend needs a world file");
      Json spec;
      try {
        spec = Json::parse(read_text_file(descriptor.world_path));
      } catch (const Json::parse_error& e) {
        throw ConfigError("world file " + descriptor.world_path + " is not valid JSON: " + e.what());
      }
      auto world = std::make_shared<ConfusionWorld>(world_from_json(spec));
      return std::make_shared<ConfusionWorldBackend>(std::move(world), seed);
    }
  }
  throw ConfigError("unsupported backend kind");
}

}  // namespace divek
