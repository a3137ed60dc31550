#include "divek/sim_trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "divek/backend.hpp"
#include "divek/errors.hpp"
#include "divek/hashing.hpp"
#include "divek/orchestrator.hpp"
#include "divek/prompts.hpp"

namespace divek {
namespace {

constexpr const char* kSimNoun = "species";

double dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

}  // namespace

SimPolicy SimPolicy::zeros(int num_categories, int dim, double temperature) {
  SimPolicy p;
  p.num_categories = num_categories;
  p.dim = dim;
  p.temperature = temperature;
  p.weights.assign(static_cast<std::size_t>(num_categories) * dim, 0.0);
  return p;
}

std::vector<double> policy_distribution(const SimPolicy& policy, std::span<const double> observation,
                                        std::span<const int> options) {
  if (options.empty()) throw PreconditionError("policy_distribution needs at least one option");
  if (static_cast<int>(observation.size()) != policy.dim) {
    throw PreconditionError("observation dimension does not match the policy");
  }
  std::vector<double> logits(options.size());
  for (std::size_t j = 0; j < options.size(); ++j) {
    if (options[j] < 0 || options[j] >= policy.num_categories) {
      throw PreconditionError("option index out of range");
    }
    logits[j] = dot(policy.row(options[j]), observation) / policy.temperature;
  }
  const double top = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (auto& l : logits) {
    l = std::exp(l - top);
    z += l;
  }
  for (auto& l : logits) l /= z;
  return logits;
}

Json policy_to_json(const SimPolicy& p) {
  Json j;
  j["num_categories"] = p.num_categories;
  j["dim"] = p.dim;
  j["temperature"] = p.temperature;
  j["weights"] = p.weights;
  return j;
}

SimPolicy policy_from_json(const Json& j) {
  SimPolicy p;
  try {
    p.num_categories = j.at("num_categories").get<int>();
    p.dim = j.at("dim").get<int>();
    p.temperature = j.at("temperature").get<double>();
    p.weights = j.at("weights").get<std::vector<double>>();
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("malformed policy checkpoint: ") + e.what());
  }
  if (p.weights.size() != static_cast<std::size_t>(p.num_categories) * p.dim) {
    throw ConfigError("policy checkpoint has the wrong number of weights");
  }
  return p;
}

void TrainConfig::validate() const {
  if (steps < 0) throw ConfigError("steps must be >= 0");
  if (batch_images < 1) throw ConfigError("batch_images must be >= 1");
  if (group_size < 2) throw ConfigError("group size N must be >= 2");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (inner_epochs < 1) throw ConfigError("inner_epochs must be >= 1");
  if (eval_every < 1) throw ConfigError("eval_every must be >= 1");
  if (m < 2 || m > 26) throw ConfigError("m must be in [2, 26]");
  if (K < 1) throw ConfigError("K must be >= 1");
  if (!(clip.epsilon > 0.0 && clip.epsilon < 1.0)) throw ConfigError("epsilon must be in (0, 1)");
  if (clip.beta < 0.0) throw ConfigError("beta must be >= 0");
  if (!(advantage.delta > 0.0)) throw ConfigError("delta must be > 0");
  if (reward.lambda_format < 0.0 || reward.lambda_mcq < 0.0) throw ConfigError("reward weights must be >= 0");
  if (!(policy_temperature > 0.0)) throw ConfigError("policy temperature must be > 0");
}

Json to_json(const TrainConfig& c) {
  Json j;
  j["steps"] = c.steps;
  j["batch_images"] = c.batch_images;
  j["group_size"] = c.group_size;
  j["learning_rate"] = c.learning_rate;
  j["reference_learning_rate_7b"] = 1e-6;
  j["lambda_format"] = c.reward.lambda_format;
  j["lambda_mcq"] = c.reward.lambda_mcq;
  j["delta"] = c.advantage.delta;
  j["epsilon"] = c.clip.epsilon;
  j["beta"] = c.clip.beta;
  j["inner_epochs"] = c.inner_epochs;
  j["eval_every"] = c.eval_every;
  j["eval_images"] = c.eval_images;
  j["pool_images"] = c.pool_images;
  j["m"] = c.m;
  j["K"] = c.K;
  j["policy_temperature"] = c.policy_temperature;
  j["seed"] = c.seed;
  return j;
}

std::vector<TrainSample> build_training_pool(std::shared_ptr<const ConfusionWorld> world,
                                             int n_images, int m, int K, std::uint64_t seed,
                                             MiningReport* report) {
  const auto images = draw_images(*world, n_images, derive_seed(seed, "images"), "train");
  ConfusionWorldBackend backend(world, derive_seed(seed, "rollouts"));
  backend.register_images(images);
  const QueryPrompt prompt = render_step1_prompt(world->category_names(), kSimNoun);
  SamplingParams params;
  params.K = K;

  MiningReport local;
  MiningReport& rep = report ? *report : local;
  MiningOptions opts{m, derive_seed(seed, "shuffle"), kSimNoun};
  std::vector<TrainSample> pool;
  for (const auto& img : images) {
    ++rep.images;
    const auto rollouts = sample_rollouts(backend, img.image, prompt, params);
    const CategoryName gt = normalize_category(world->canonical_name(img.category));
    auto mcq = mine_one(rollouts, gt, opts, rep);
    if (!mcq) continue;
    TrainSample s;
    for (const auto& [letter, name] : mcq->options) {
      const int idx = world->index_of(name);
      if (idx < 0) throw ConfigError("mined option is not a world category: " + name.raw);
      s.option_categories.push_back(idx);
    }
    s.answer_position = position_of(mcq->answer_letter);
    s.observation = img.observation;
    s.mcq = std::move(*mcq);
    pool.push_back(std::move(s));
  }
  return pool;
}

GroupDraw draw_group(const SimPolicy& old_policy, const TrainSample& sample,
                     const TrainConfig& cfg, std::mt19937_64& rng) {
  const auto probs = policy_distribution(old_policy, sample.observation, sample.option_categories);
  std::discrete_distribution<int> choose(probs.begin(), probs.end());
  GroupDraw g;
  for (int i = 0; i < cfg.group_size; ++i) {
    const int a = choose(rng);
    g.choices.push_back(a);
    g.old_probs.push_back(probs[a]);
    // The toy policy always emits a well-formed choice.
    const double r_mcq = grpo::mcq_reward(letter_for(a), sample.mcq.answer_letter);
    g.rewards.push_back(grpo::combined_reward(grpo::format_reward(true), r_mcq, cfg.reward));
  }
  g.advantages = grpo::group_advantages(g.rewards, cfg.advantage);
  return g;
}

double surrogate_objective(const SimPolicy& policy, const SimPolicy& reference,
                           std::span<const TrainSample> batch, std::span<const GroupDraw> draws,
                           const TrainConfig& cfg) {
  if (batch.size() != draws.size() || batch.empty()) {
    throw PreconditionError("surrogate needs one draw per sample");
  }
  double total = 0.0;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& s = batch[b];
    const auto pi = policy_distribution(policy, s.observation, s.option_categories);
    const auto ref = policy_distribution(reference, s.observation, s.option_categories);
    const double kl = grpo::categorical_kl(pi, ref);
    std::vector<grpo::PolicyEval> evals;
    for (std::size_t i = 0; i < draws[b].choices.size(); ++i) {
      evals.push_back({pi[draws[b].choices[i]] / draws[b].old_probs[i], kl});
    }
    total += grpo::grpo_objective(evals, draws[b].advantages, cfg.clip);
  }
  return total / static_cast<double>(batch.size());
}

std::vector<double> surrogate_gradient(const SimPolicy& policy, const SimPolicy& reference,
                                       std::span<const TrainSample> batch,
                                       std::span<const GroupDraw> draws, const TrainConfig& cfg) {
  if (batch.size() != draws.size() || batch.empty()) {
    throw PreconditionError("surrogate needs one draw per sample");
  }
  std::vector<double> grad(policy.weights.size(), 0.0);
  const double batch_scale = 1.0 / static_cast<double>(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& s = batch[b];
    const auto& g = draws[b];
    const std::size_t k = s.option_categories.size();
    const auto pi = policy_distribution(policy, s.observation, s.option_categories);
    const auto ref = policy_distribution(reference, s.observation, s.option_categories);
    const double kl = grpo::categorical_kl(pi, ref);

    // d objective / d logit_j
    std::vector<double> dz(k, 0.0);
    const double n = static_cast<double>(g.choices.size());
    for (std::size_t i = 0; i < g.choices.size(); ++i) {
      const int a = g.choices[i];
      const double ratio = pi[a] / g.old_probs[i];
      const double coeff = grpo::clipped_term_ratio_grad(ratio, g.advantages[i], cfg.clip.epsilon);
      if (coeff == 0.0) continue;
      for (std::size_t j = 0; j < k; ++j) {
        const double dlog = (static_cast<int>(j) == a ? 1.0 : 0.0) - pi[j];
        dz[j] += coeff * ratio * dlog / n;
      }
    }
    if (cfg.clip.beta > 0.0) {
      for (std::size_t j = 0; j < k; ++j) {
        if (pi[j] == 0.0) continue;
        dz[j] -= cfg.clip.beta * pi[j] * (std::log(pi[j] / ref[j]) - kl);
      }
    }
    for (std::size_t j = 0; j < k; ++j) {
      const double scale = dz[j] * batch_scale / policy.temperature;
      if (scale == 0.0) continue;
      double* row = grad.data() + static_cast<std::size_t>(s.option_categories[j]) * policy.dim;
      for (int t = 0; t < policy.dim; ++t) row[t] += scale * s.observation[t];
    }
  }
  return grad;
}

StepStats grpo_step(SimPolicy& policy, const SimPolicy& reference,
                    std::span<const TrainSample> batch, const TrainConfig& cfg,
                    std::mt19937_64& rng) {
  StepStats stats;
  if (batch.empty()) return stats;
  const SimPolicy old_policy = policy;
  std::vector<GroupDraw> draws;
  draws.reserve(batch.size());
  double reward_sum = 0.0;
  std::size_t reward_count = 0;
  for (const auto& s : batch) {
    draws.push_back(draw_group(old_policy, s, cfg, rng));
    const auto& g = draws.back();
    reward_sum += std::accumulate(g.rewards.begin(), g.rewards.end(), 0.0);
    reward_count += g.rewards.size();
    if (std::all_of(g.advantages.begin(), g.advantages.end(), [](double a) { return a == 0.0; })) {
      ++stats.degenerate_groups;
    }
  }
  stats.mean_reward = reward_sum / static_cast<double>(reward_count);
  stats.objective = surrogate_objective(policy, reference, batch, draws, cfg);
  double kl_sum = 0.0;
  for (const auto& s : batch) {
    kl_sum += grpo::categorical_kl(policy_distribution(policy, s.observation, s.option_categories),
                                   policy_distribution(reference, s.observation, s.option_categories));
  }
  stats.mean_kl = kl_sum / static_cast<double>(batch.size());

  for (int epoch = 0; epoch < cfg.inner_epochs; ++epoch) {
    const auto grad = surrogate_gradient(policy, reference, batch, draws, cfg);
    for (std::size_t i = 0; i < grad.size(); ++i) policy.weights[i] += cfg.learning_rate * grad[i];
  }
  return stats;
}

PolicyEvalResult evaluate_policy(std::shared_ptr<const ConfusionWorld> world,
                                 const SimPolicy& policy, int n_images, int m, int K,
                                 std::uint64_t seed) {
  const auto images = draw_images(*world, n_images, derive_seed(seed, "images"), "eval");
  ConfusionWorldBackend backend(world, derive_seed(seed, "rollouts"));
  backend.register_images(images);
  backend.set_policy(std::make_shared<const SimPolicy>(policy));

  InferenceOptions opts;
  opts.domain_noun = kSimNoun;
  opts.category_list = world->category_names();
  opts.K = K;
  opts.m = m;
  opts.params.K = K;
  opts.seed = derive_seed(seed, "shuffle");

  PolicyEvalResult result;
  for (const auto& img : images) {
    const CategoryName gt = normalize_category(world->canonical_name(img.category));
    const PredictionRecord rec = two_step_infer(backend, img.image, opts, gt);
    ++result.images;
    if (rec.step1_contains_gt.value_or(false)) ++result.step1_contains;
    if (rec.final_category && world->index_of(*rec.final_category) == img.category) ++result.correct;
  }
  return result;
}

double exact_match_reward(const CategoryName& pred, const CategoryName& gt) {
  if (!gt.valid()) return 0.0;
  return pred.normalized.find(gt.normalized) != std::string::npos ? 1.0 : 0.0;
}

VerifierComparison compare_reward_verifiers(std::shared_ptr<const ConfusionWorld> world,
                                            int n_images, int K, int m, std::uint64_t seed) {
  const auto images = draw_images(*world, n_images, derive_seed(seed, "images"), "cmp");
  ConfusionWorldBackend backend(world, derive_seed(seed, "rollouts"));
  backend.register_images(images);
  const QueryPrompt prompt = render_step1_prompt(world->category_names(), kSimNoun);
  SamplingParams params;
  params.K = K;

  VerifierComparison out;
  for (const auto& img : images) {
    const CategoryName gt = normalize_category(world->canonical_name(img.category));
    auto rollouts = sample_rollouts(backend, img.image, prompt, params);
    out.rollouts += static_cast<int>(rollouts.size());

    // Open-ended answers scored by string containment.
    for (const auto& r : rollouts) {
      if (r.format_ok && r.predicted_category) {
        out.exact_rewarded += static_cast<int>(exact_match_reward(*r.predicted_category, gt));
      }
    }

    // The same decisions expressed as letters of the mined MCQ. Options use
    // canonical names; a decision scores when its letter is the answer.
    std::vector<RolloutRecord> canonical = rollouts;
    for (auto& r : canonical) {
      if (!r.predicted_category) continue;
      const int idx = world->index_of(*r.predicted_category);
      if (idx < 0) {
        r.format_ok = false;
        r.predicted_category.reset();
      } else {
        r.predicted_category = normalize_category(world->canonical_name(idx));
      }
    }
    const HypothesisSet hyp = mine_hypotheses(canonical);
    if (hyp.empty()) continue;
    std::vector<CategoryName> options = select_topk(hyp, m);
    if (options.size() == 1 && !same_category(options.front(), gt)) {
      options.push_back(gt);
    } else {
      options = inject_ground_truth(std::move(options), gt).options;
    }
    const auto lettered = shuffle_options(options, derive_seed(seed, img.image.id));
    char answer = 'A';
    for (const auto& [letter, name] : lettered) {
      if (same_category(name, gt)) answer = letter;
    }
    for (const auto& r : canonical) {
      if (!r.format_ok || !r.predicted_category) continue;
      std::optional<char> chosen;
      for (const auto& [letter, name] : lettered) {
        if (same_category(name, *r.predicted_category)) chosen = letter;
      }
      out.mcq_rewarded += static_cast<int>(grpo::mcq_reward(chosen, answer));
    }
  }
  return out;
}

TrainReport train_sim(std::shared_ptr<const ConfusionWorld> world, const TrainConfig& cfg) {
  cfg.validate();
  TrainReport report;
  const auto pool = build_training_pool(world, cfg.pool_images, cfg.m, cfg.K,
                                        derive_seed(cfg.seed, "pool"), &report.pool_report);

  SimPolicy policy = SimPolicy::zeros(world->num_categories, world->observation_dim,
                                      cfg.policy_temperature);
  const SimPolicy reference = policy;
  const std::uint64_t eval_seed = derive_seed(cfg.seed, "eval");

  const auto evaluate = [&](int step) {
    const auto r = evaluate_policy(world, policy, cfg.eval_images, cfg.m, cfg.K, eval_seed);
    report.eval_curve.emplace_back(step, r.accuracy());
    report.step1_ceiling = r.step1_containment();
  };
  evaluate(0);

  std::mt19937_64 rng(derive_seed(cfg.seed, "train"));
  std::vector<TrainSample> batch;
  for (int step = 1; step <= cfg.steps; ++step) {
    if (!pool.empty()) {
      std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
      batch.clear();
      for (int b = 0; b < cfg.batch_images; ++b) batch.push_back(pool[pick(rng)]);
      const StepStats stats = grpo_step(policy, reference, batch, cfg, rng);
      report.reward_curve.emplace_back(step, stats.mean_reward);
    }
    if (step % cfg.eval_every == 0 || step == cfg.steps) evaluate(step);
  }
  report.final_policy = std::move(policy);
  return report;
}

Json to_json(const TrainReport& r) {
  Json j;
  Json rewards = Json::array();
  for (const auto& [step, v] : r.reward_curve) rewards.push_back(Json::array({step, v}));
  Json evals = Json::array();
  for (const auto& [step, v] : r.eval_curve) evals.push_back(Json::array({step, v}));
  j["reward_curve"] = std::move(rewards);
  j["eval_curve"] = std::move(evals);
  j["step1_ceiling"] = r.step1_ceiling;
  j["pool_report"] = to_json(r.pool_report);
  return j;
}

std::string curves_csv(const TrainReport& r) {
  std::ostringstream out;
  out.precision(17);
  out << "curve,step,value\n";
  for (const auto& [step, v] : r.reward_curve) out << "reward," << step << ',' << v << '\n';
  for (const auto& [step, v] : r.eval_curve) out << "eval_accuracy," << step << ',' << v << '\n';
  return out.str();
}

std::vector<double> moving_average(std::span<const double> values, int window) {
  if (window < 1) throw PreconditionError("window must be >= 1");
  std::vector<double> out;
  if (values.size() < static_cast<std::size_t>(window)) return out;
  double sum = std::accumulate(values.begin(), values.begin() + window, 0.0);
  out.push_back(sum / window);
  for (std::size_t i = window; i < values.size(); ++i) {
    sum += values[i] - values[i - window];
    out.push_back(sum / window);
  }
  return out;
}

}  // namespace divek
