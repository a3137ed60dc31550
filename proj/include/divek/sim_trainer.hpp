#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "divek/confusion_world.hpp"
#include "divek/grpo.hpp"
#include "divek/option_miner.hpp"
#include "divek/records.hpp"

namespace divek {

/// Linear-softmax option selector: logit(c | x) = <w_c, x> / temperature,
/// normalized over the presented options only.
struct SimPolicy {
  int num_categories = 0;
  int dim = 0;
  std::vector<double> weights;  // row-major [num_categories][dim]
  double temperature = 1.0;

  static SimPolicy zeros(int num_categories, int dim, double temperature = 1.0);

  std::span<const double> row(int c) const {
    return {weights.data() + static_cast<std::size_t>(c) * dim, static_cast<std::size_t>(dim)};
  }
  std::span<double> row(int c) {
    return {weights.data() + static_cast<std::size_t>(c) * dim, static_cast<std::size_t>(dim)};
  }
  bool operator==(const SimPolicy&) const = default;
};

std::vector<double> policy_distribution(const SimPolicy& policy, std::span<const double> observation,
                                        std::span<const int> options);

Json policy_to_json(const SimPolicy& p);
SimPolicy policy_from_json(const Json& j);

struct TrainConfig {
  int steps = 2000;
  int batch_images = 16;
  int group_size = 4;
  double learning_rate = 0.05;
  grpo::RewardWeights reward;
  grpo::AdvantageParams advantage;
  grpo::ClipParams clip;
  int inner_epochs = 1;
  int eval_every = 100;
  int eval_images = 1000;
  // Size of the offline-mined MCQ pool the trainer samples batches from.
  int pool_images = 4000;
  int m = 5;
  int K = 20;
  double policy_temperature = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

Json to_json(const TrainConfig& c);

/// An MCQ training sample bound to its synthetic observation and the world
/// indices of its options.
struct TrainSample {
  MCQSample mcq;
  std::vector<int> option_categories;  // in letter order
  int answer_position = 0;
  std::vector<double> observation;
};

// Runs step-1 rollouts through a confusion-world backend for n fresh images
// and mines them into MCQ samples (hard-negative filter and gt injection
// applied).
std::vector<TrainSample> build_training_pool(std::shared_ptr<const ConfusionWorld> world,
                                             int n_images, int m, int K, std::uint64_t seed,
                                             MiningReport* report = nullptr);

/// N option choices drawn from pi_old for one sample, their rewards and
/// group advantages.
struct GroupDraw {
  std::vector<int> choices;  // option positions
  std::vector<double> rewards;
  std::vector<double> advantages;
  std::vector<double> old_probs;  // pi_old(choice)
};

GroupDraw draw_group(const SimPolicy& old_policy, const TrainSample& sample,
                     const TrainConfig& cfg, std::mt19937_64& rng);

// Batch mean of the clipped GRPO objective for fixed draws.
double surrogate_objective(const SimPolicy& policy, const SimPolicy& reference,
                           std::span<const TrainSample> batch, std::span<const GroupDraw> draws,
                           const TrainConfig& cfg);

// Exact gradient of surrogate_objective with respect to policy.weights.
std::vector<double> surrogate_gradient(const SimPolicy& policy, const SimPolicy& reference,
                                       std::span<const TrainSample> batch,
                                       std::span<const GroupDraw> draws, const TrainConfig& cfg);

struct StepStats {
  double mean_reward = 0.0;
  double mean_kl = 0.0;
  double objective = 0.0;
  int degenerate_groups = 0;  // groups with all-equal rewards
};

/// One GRPO update: pi_old is the policy as passed in, draws come from it,
/// and cfg.inner_epochs gradient-ascent passes are taken on the surrogate.
StepStats grpo_step(SimPolicy& policy, const SimPolicy& reference,
                    std::span<const TrainSample> batch, const TrainConfig& cfg,
                    std::mt19937_64& rng);

struct PolicyEvalResult {
  int images = 0;
  int correct = 0;
  int step1_contains = 0;

  double accuracy() const { return images ? static_cast<double>(correct) / images : 0.0; }
  double step1_containment() const {
    return images ? static_cast<double>(step1_contains) / images : 0.0;
  }
};

/// Full two-step pipeline on fresh synthetic images, with no ground-truth
/// injection: step-1 rollouts from the world, step-2 greedy choice by the
/// policy.
PolicyEvalResult evaluate_policy(std::shared_ptr<const ConfusionWorld> world,
                                 const SimPolicy& policy, int n_images, int m, int K,
                                 std::uint64_t seed);

// 1 iff normalized gt is a substring of the normalized prediction.
double exact_match_reward(const CategoryName& pred, const CategoryName& gt);

struct VerifierComparison {
  int rollouts = 0;
  int exact_rewarded = 0;
  int mcq_rewarded = 0;

  double exact_fraction() const { return rollouts ? double(exact_rewarded) / rollouts : 0.0; }
  double mcq_fraction() const { return rollouts ? double(mcq_rewarded) / rollouts : 0.0; }
};

/// Scores the same world decisions under two verifiers: the open-ended
/// answer text against the canonical name (exact_match_reward), and the
/// letter of the chosen category in the mined MCQ (mcq_reward).
VerifierComparison compare_reward_verifiers(std::shared_ptr<const ConfusionWorld> world,
                                            int n_images, int K, int m, std::uint64_t seed);

struct TrainReport {
  std::vector<std::pair<int, double>> reward_curve;  // (step, mean group reward)
  std::vector<std::pair<int, double>> eval_curve;    // (step, two-step accuracy)
  double step1_ceiling = 0.0;
  MiningReport pool_report;
  SimPolicy final_policy;
};

TrainReport train_sim(std::shared_ptr<const ConfusionWorld> world, const TrainConfig& cfg);

Json to_json(const TrainReport& r);
std::string curves_csv(const TrainReport& r);

std::vector<double> moving_average(std::span<const double> values, int window);

}  // namespace divek
