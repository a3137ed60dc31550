#pragma once

#include <optional>
#include <span>
#include <vector>

namespace divek::grpo {

struct RewardWeights {
  double lambda_format = 1.0;
  double lambda_mcq = 1.0;
};

struct AdvantageParams {
  double delta = 1e-4;
};

struct ClipParams {
  double epsilon = 0.2;
  double beta = 0.04;
};

/// Per-response policy quantities: the importance ratio
/// pi_theta(o|q) / pi_theta_old(o|q) and the KL of the current policy to the
/// reference policy on this sample.
struct PolicyEval {
  double ratio = 1.0;
  double kl_to_ref = 0.0;
};

// 1 when the chosen letter equals the answer letter, otherwise 0 (including
// no parsable letter).
double mcq_reward(std::optional<char> predicted_letter, char answer_letter);

double format_reward(bool format_ok);

double combined_reward(double r_format, double r_mcq, const RewardWeights& w = {});

/// Group-normalized advantages (r_i - mean) / (std + delta) with the
/// population standard deviation. A group whose rewards are all equal gets
/// exact zeros. Requires at least two rewards.
std::vector<double> group_advantages(std::span<const double> rewards,
                                     const AdvantageParams& p = {});

/// sum_j p_j ln(p_j / q_j), with 0 ln 0 = 0. Throws std::invalid_argument on
/// mismatched lengths, unnormalized inputs (1e-9), or p_j > 0 where q_j = 0.
double categorical_kl(std::span<const double> p, std::span<const double> q);

// min(s*A, clip(s, 1-eps, 1+eps)*A)
double clipped_term(double ratio, double advantage, double epsilon);

// d clipped_term / d ratio: A on the unclipped branch, 0 when the clip binds.
double clipped_term_ratio_grad(double ratio, double advantage, double epsilon);

/// (1/N) sum_i [ clipped_term(s_i, A_i) - beta * kl_i ]
double grpo_objective(std::span<const PolicyEval> evals, std::span<const double> advantages,
                      const ClipParams& c = {});

}  // namespace divek::grpo
