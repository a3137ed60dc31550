#include <cmath>
#include <numeric>
#include <random>

#include "divek/grpo.hpp"
#include "divek/response_parser.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace divek;
using namespace divek::grpo;

TEST_CASE("rewards") {
  CHECK(mcq_reward('B', 'B') == 1.0);
  CHECK(mcq_reward('A', 'B') == 0.0);
  CHECK(mcq_reward(std::nullopt, 'B') == 0.0);
  CHECK(format_reward(true) == 1.0);
  CHECK(format_reward(false) == 0.0);
  CHECK(format_reward(parse_tagged_response(divek::testing::well_formed("Sooty Albatross")).format_ok) == 1.0);
  CHECK(combined_reward(1, 1) == 2.0);
  CHECK(combined_reward(1, 0) == 1.0);
  CHECK(combined_reward(0, 0) == 0.0);
  CHECK(combined_reward(1, 1, {0.5, 2.0}) == 2.5);
}

TEST_CASE("group advantages") {
  const auto a = group_advantages(std::vector<double>{2, 1, 1, 1});
  const double sd = std::sqrt(0.1875);
  CHECK(a[0] == doctest::Approx(0.75 / (sd + 1e-4)).epsilon(1e-12));
  CHECK(a[0] == doctest::Approx(1.7316).epsilon(1e-4));
  CHECK(a[1] == doctest::Approx(-0.5772).epsilon(1e-4));
  for (double c : {0.0, 1.0, 2.0, -3.5}) {
    for (double v : group_advantages(std::vector<double>(4, c))) CHECK(v == 0.0);
  }
  CHECK_THROWS_AS(group_advantages(std::vector<double>{1.0}), std::invalid_argument);
}

TEST_CASE("advantage properties on random groups") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(-5, 5);
  for (int t = 0; t < 2000; ++t) {
    const int n = 2 + static_cast<int>(rng() % 7);
    std::vector<double> r(n);
    for (auto& x : r) x = u(rng);
    const auto a = group_advantages(r);
    CHECK(std::abs(std::accumulate(a.begin(), a.end(), 0.0)) < 1e-9);

    // Invariance to positive affine transforms as delta -> 0.
    const double scale = 0.1 + std::abs(u(rng));
    const double shift = u(rng);
    std::vector<double> r2(n);
    for (int i = 0; i < n; ++i) r2[i] = scale * r[i] + shift;
    const auto a1 = group_advantages(r, {1e-12});
    const auto a2 = group_advantages(r2, {1e-12});
    for (int i = 0; i < n; ++i) CHECK(std::abs(a1[i] - a2[i]) < 1e-6);

    const auto best_r = std::max_element(r.begin(), r.end()) - r.begin();
    const auto best_a = std::max_element(a.begin(), a.end()) - a.begin();
    CHECK(best_r == best_a);
  }
}

TEST_CASE("categorical kl") {
  const std::vector<double> p{0.2, 0.3, 0.5};
  CHECK(categorical_kl(p, p) == 0.0);
  CHECK(categorical_kl(std::vector<double>{1, 0}, std::vector<double>{0.5, 0.5}) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK_THROWS_AS(categorical_kl(std::vector<double>{0.5, 0.5}, std::vector<double>{1, 0}), std::invalid_argument);
  CHECK_THROWS_AS(categorical_kl(std::vector<double>{0.5, 0.5}, std::vector<double>{0.2, 0.3, 0.5}), std::invalid_argument);
  CHECK_THROWS_AS(categorical_kl(std::vector<double>{0.5, 0.6}, std::vector<double>{0.5, 0.5}), std::invalid_argument);
}

TEST_CASE("clipped term") {
  CHECK(clipped_term(1.0, 1.0, 0.2) == 1.0);
  CHECK(clipped_term(1.5, 1.0, 0.2) == 1.2);
  CHECK(clipped_term(0.5, -1.0, 0.2) == -0.8);
  CHECK(clipped_term(0.5, 1.0, 0.2) == 0.5);
  CHECK(clipped_term(1.5, -1.0, 0.2) == -1.5);

  // Ratio derivative matches a central difference away from the kinks.
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> s(0.3, 1.7), a(-2, 2);
  for (int i = 0; i < 1000; ++i) {
    const double ratio = s(rng), adv = a(rng);
    if (std::abs(ratio - 0.8) < 1e-3 || std::abs(ratio - 1.2) < 1e-3) continue;
    const double h = 1e-6;
    const double fd = (clipped_term(ratio + h, adv, 0.2) - clipped_term(ratio - h, adv, 0.2)) / (2 * h);
    CHECK(clipped_term_ratio_grad(ratio, adv, 0.2) == doctest::Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("objective") {
  const std::vector<PolicyEval> ev{{1.0, 0.1}, {1.0, 0.3}};
  const std::vector<double> adv{1.0, -1.0};
  CHECK(grpo_objective(ev, adv, {0.2, 0.5}) == doctest::Approx(0.0 - 0.5 * 0.2));
  CHECK_THROWS_AS(grpo_objective(ev, std::vector<double>{1.0}), std::invalid_argument);

  // Non-decreasing in each advantage.
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> s(0.3, 1.7), a(-2, 2), k(0, 1);
  for (int t = 0; t < 500; ++t) {
    std::vector<PolicyEval> e(4);
    std::vector<double> A(4);
    for (int i = 0; i < 4; ++i) {
      e[i] = {s(rng), k(rng)};
      A[i] = a(rng);
    }
    const double base = grpo_objective(e, A);
    const int i = static_cast<int>(rng() % 4);
    A[i] += std::abs(a(rng));
    CHECK(grpo_objective(e, A) >= base - 1e-15);
  }
}
