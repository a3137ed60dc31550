#include "divek/grpo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace divek::grpo {

double mcq_reward(std::optional<char> predicted_letter, char answer_letter) {
  return predicted_letter && *predicted_letter == answer_letter ? 1.0 : 0.0;
}

double format_reward(bool format_ok) { return format_ok ? 1.0 : 0.0; }

double combined_reward(double r_format, double r_mcq, const RewardWeights& w) {
  return w.lambda_format * r_format + w.lambda_mcq * r_mcq;
}

std::vector<double> group_advantages(std::span<const double> rewards, const AdvantageParams& p) {
  if (rewards.size() < 2) throw std::invalid_argument("group_advantages needs at least two rewards");
  std::vector<double> out(rewards.size(), 0.0);
  const auto [lo, hi] = std::minmax_element(rewards.begin(), rewards.end());
  if (*lo == *hi) return out;
  const double n = static_cast<double>(rewards.size());
  const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / n;
  double ss = 0.0;
  for (double r : rewards) ss += (r - mean) * (r - mean);
  const double denom = std::sqrt(ss / n) + p.delta;
  for (std::size_t i = 0; i < rewards.size(); ++i) out[i] = (rewards[i] - mean) / denom;
  return out;
}

double categorical_kl(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size() || p.empty()) throw std::invalid_argument("KL support mismatch");
  const double sp = std::accumulate(p.begin(), p.end(), 0.0);
  const double sq = std::accumulate(q.begin(), q.end(), 0.0);
  if (std::abs(sp - 1.0) > 1e-9 || std::abs(sq - 1.0) > 1e-9) {
    throw std::invalid_argument("KL inputs must be normalized");
  }
  double kl = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) {
    if (p[j] < 0.0 || q[j] < 0.0) throw std::invalid_argument("negative probability");
    if (p[j] == 0.0) continue;
    if (q[j] == 0.0) throw std::invalid_argument("KL support mismatch: q has a zero where p does not");
    kl += p[j] * std::log(p[j] / q[j]);
  }
  return kl;
}

double clipped_term(double ratio, double advantage, double epsilon) {
  const double clipped = std::clamp(ratio, 1.0 - epsilon, 1.0 + epsilon);
  return std::min(ratio * advantage, clipped * advantage);
}

double clipped_term_ratio_grad(double ratio, double advantage, double epsilon) {
  if (advantage > 0.0) return ratio > 1.0 + epsilon ? 0.0 : advantage;
  if (advantage < 0.0) return ratio < 1.0 - epsilon ? 0.0 : advantage;
  return 0.0;
}

double grpo_objective(std::span<const PolicyEval> evals, std::span<const double> advantages,
                      const ClipParams& c) {
  if (evals.size() != advantages.size() || evals.empty()) {
    throw std::invalid_argument("grpo_objective needs equal, non-empty inputs");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < evals.size(); ++i) {
    total += clipped_term(evals[i].ratio, advantages[i], c.epsilon) - c.beta * evals[i].kl_to_ref;
  }
  return total / static_cast<double>(evals.size());
}

}  // namespace divek::grpo
