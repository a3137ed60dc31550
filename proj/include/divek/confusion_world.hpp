#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "divek/category.hpp"
#include "divek/records.hpp"

namespace divek {

/// Synthetic stand-in for a base model's predictive distribution.
///
/// Row c of `confusion` is the distribution over predicted categories when
/// the true category is c. Each category has one or more surface forms; the
/// first one is its canonical name. Observations are noisy prototypes:
/// x = prototype[c] + noise_scale * N(0, I).
struct ConfusionWorld {
  int num_categories = 0;
  int observation_dim = 0;
  std::vector<std::vector<std::string>> aliases;   // [C][>=1]
  std::vector<std::vector<double>> confusion;      // [C][C], row-stochastic
  std::vector<std::vector<double>> prototypes;     // [C][d]
  double format_error_rate = 0.0;
  double noise_scale = 0.0;

  // Throws ConfigError on shape mismatch or rows not summing to 1 (1e-9).
  void validate() const;

  const std::string& canonical_name(int c) const { return aliases.at(c).front(); }
  std::vector<CategoryName> category_names() const;

  // Index of the category owning this surface form (any alias), or -1.
  int index_of(const CategoryName& name) const;

  void build_index();

 private:
  std::unordered_map<std::string, int> by_surface_;
};

struct WorldConfig {
  int num_categories = 50;
  int observation_dim = 16;
  // Prototypes are random directions of this length.
  double prototype_norm = 4.0;
  double noise_scale = 0.5;
  // Probability mass on the true category is drawn uniformly from this range.
  double self_prob_min = 0.15;
  double self_prob_max = 0.7;
  // The rest of each row is spread over this many nearest-prototype confusers.
  int num_confusers = 6;
  double format_error_rate = 0.05;
  // Surface forms per category; > 1 enables alias emission.
  int aliases_per_category = 1;
  std::uint64_t seed = 1234;
};

ConfusionWorld make_world(const WorldConfig& cfg);

// World whose every row is a point mass on the true category.
ConfusionWorld make_identity_world(int num_categories, int observation_dim, double noise_scale);

Json world_to_json(const ConfusionWorld& w);
ConfusionWorld world_from_json(const Json& j);

/// prototype[c] + noise_scale * gaussian. Throws PreconditionError when c is
/// out of range.
std::vector<double> sample_observation(const ConfusionWorld& world, int true_category,
                                       std::mt19937_64& rng);

/// One synthetic image: its id, true category and observation vector.
struct SyntheticImage {
  ImageRef image;
  int category = 0;
  std::vector<double> observation;
};

/// n images with uniformly drawn categories, ids "<prefix>-000000"...
std::vector<SyntheticImage> draw_images(const ConfusionWorld& world, int n, std::uint64_t seed,
                                        const std::string& prefix = "img");

}  // namespace divek
