#include "divek/confusion_world.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "divek/errors.hpp"

namespace divek {
namespace {

std::string canonical_label(int c) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "species %03d", c);
  return buf;
}

std::string alias_label(int c, int k) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "taxon %03d form %d", c, k);
  return buf;
}

}  // namespace

void ConfusionWorld::validate() const {
  const auto C = static_cast<std::size_t>(num_categories);
  if (num_categories < 1) throw ConfigError("world needs at least one category");
  if (observation_dim < 1) throw ConfigError("world observation_dim must be >= 1");
  if (aliases.size() != C || confusion.size() != C || prototypes.size() != C) {
    throw ConfigError("world tables must have one entry per category");
  }
  if (format_error_rate < 0.0 || format_error_rate > 1.0) {
    throw ConfigError("format_error_rate must be in [0, 1]");
  }
  if (noise_scale < 0.0) throw ConfigError("noise_scale must be >= 0");
  for (std::size_t c = 0; c < C; ++c) {
    if (aliases[c].empty()) throw ConfigError("every category needs a surface form");
    if (prototypes[c].size() != static_cast<std::size_t>(observation_dim)) {
      throw ConfigError("prototype dimension mismatch");
    }
    if (confusion[c].size() != C) throw ConfigError("confusion matrix must be C x C");
    double sum = 0.0;
    for (double p : confusion[c]) {
      if (!(p >= 0.0)) throw ConfigError("confusion entries must be non-negative");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
      throw ConfigError("confusion row " + std::to_string(c) + " does not sum to 1");
    }
  }
}

void ConfusionWorld::build_index() {
  by_surface_.clear();
  for (int c = 0; c < static_cast<int>(aliases.size()); ++c) {
    for (const auto& form : aliases[c]) {
      const auto key = normalize_category(form).normalized;
      auto [it, inserted] = by_surface_.emplace(key, c);
      if (!inserted && it->second != c) {
        throw ConfigError("surface form '" + form + "' belongs to two categories");
      }
    }
  }
}

int ConfusionWorld::index_of(const CategoryName& name) const {
  const auto it = by_surface_.find(name.normalized);
  return it == by_surface_.end() ? -1 : it->second;
}

std::vector<CategoryName> ConfusionWorld::category_names() const {
  std::vector<CategoryName> out;
  out.reserve(aliases.size());
  for (const auto& forms : aliases) out.push_back(normalize_category(forms.front()));
  return out;
}

ConfusionWorld make_world(const WorldConfig& cfg) {
  if (cfg.num_categories < 2) throw ConfigError("world needs at least two categories");
  if (cfg.aliases_per_category < 1) throw ConfigError("aliases_per_category must be >= 1");
  if (!(cfg.prototype_norm > 0.0)) throw ConfigError("prototype_norm must be > 0");
  if (cfg.self_prob_min < 0.0 || cfg.self_prob_max > 1.0 || cfg.self_prob_min > cfg.self_prob_max) {
    throw ConfigError("self-probability range must lie in [0, 1]");
  }
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::exponential_distribution<double> expo(1.0);

  const int C = cfg.num_categories;
  const int d = cfg.observation_dim;
  ConfusionWorld w;
  w.num_categories = C;
  w.observation_dim = d;
  w.format_error_rate = cfg.format_error_rate;
  w.noise_scale = cfg.noise_scale;

  w.prototypes.assign(C, std::vector<double>(d));
  for (auto& p : w.prototypes) {
    double norm = 0.0;
    for (auto& x : p) {
      x = gauss(rng);
      norm += x * x;
    }
    norm = std::sqrt(norm);
    for (auto& x : p) x *= cfg.prototype_norm / norm;
  }

  w.aliases.resize(C);
  for (int c = 0; c < C; ++c) {
    w.aliases[c].push_back(canonical_label(c));
    for (int k = 1; k < cfg.aliases_per_category; ++k) w.aliases[c].push_back(alias_label(c, k));
  }

  const int confusers = std::clamp(cfg.num_confusers, 0, C - 1);
  w.confusion.assign(C, std::vector<double>(C, 0.0));
  for (int c = 0; c < C; ++c) {
    std::vector<int> others;
    for (int j = 0; j < C; ++j) {
      if (j != c) others.push_back(j);
    }
    std::vector<double> sim(C, 0.0);
    for (int j : others) {
      sim[j] = std::inner_product(w.prototypes[c].begin(), w.prototypes[c].end(),
                                  w.prototypes[j].begin(), 0.0);
    }
    std::stable_sort(others.begin(), others.end(), [&](int a, int b) { return sim[a] > sim[b]; });

    const double self = confusers == 0
                            ? 1.0
                            : cfg.self_prob_min + (cfg.self_prob_max - cfg.self_prob_min) * unit(rng);
    auto& row = w.confusion[c];
    row[c] = self;
    std::vector<double> mass(confusers);
    double total = 0.0;
    for (auto& m : mass) {
      m = expo(rng);
      total += m;
    }
    for (int k = 0; k < confusers; ++k) row[others[k]] = (1.0 - self) * mass[k] / total;
    const double sum = std::accumulate(row.begin(), row.end(), 0.0);
    for (auto& p : row) p /= sum;
  }
  w.build_index();
  w.validate();
  return w;
}

ConfusionWorld make_identity_world(int num_categories, int observation_dim, double noise_scale) {
  ConfusionWorld w;
  w.num_categories = num_categories;
  w.observation_dim = observation_dim;
  w.noise_scale = noise_scale;
  w.aliases.resize(num_categories);
  w.confusion.assign(num_categories, std::vector<double>(num_categories, 0.0));
  w.prototypes.assign(num_categories, std::vector<double>(observation_dim, 0.0));
  for (int c = 0; c < num_categories; ++c) {
    w.aliases[c].push_back(canonical_label(c));
    w.confusion[c][c] = 1.0;
    w.prototypes[c][c % observation_dim] = 1.0;
  }
  w.build_index();
  w.validate();
  return w;
}

Json world_to_json(const ConfusionWorld& w) {
  Json j;
  j["num_categories"] = w.num_categories;
  j["observation_dim"] = w.observation_dim;
  j["format_error_rate"] = w.format_error_rate;
  j["noise_scale"] = w.noise_scale;
  j["aliases"] = w.aliases;
  j["confusion"] = w.confusion;
  j["prototypes"] = w.prototypes;
  return j;
}

ConfusionWorld world_from_json(const Json& j) {
  ConfusionWorld w;
  try {
    w.num_categories = j.at("num_categories").get<int>();
    w.observation_dim = j.at("observation_dim").get<int>();
    w.format_error_rate = j.value("format_error_rate", 0.0);
    w.noise_scale = j.value("noise_scale", 0.0);
    w.aliases = j.at("aliases").get<std::vector<std::vector<std::string>>>();
    w.confusion = j.at("confusion").get<std::vector<std::vector<double>>>();
    w.prototypes = j.at("prototypes").get<std::vector<std::vector<double>>>();
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("malformed world spec: ") + e.what());
  }
  w.validate();
  w.build_index();
  return w;
}

std::vector<double> sample_observation(const ConfusionWorld& world, int true_category,
                                       std::mt19937_64& rng) {
  if (true_category < 0 || true_category >= world.num_categories) {
    throw PreconditionError("category index out of range");
  }
  std::vector<double> x = world.prototypes[true_category];
  if (world.noise_scale > 0.0) {
    std::normal_distribution<double> gauss(0.0, world.noise_scale);
    for (auto& v : x) v += gauss(rng);
  }
  return x;
}

std::vector<SyntheticImage> draw_images(const ConfusionWorld& world, int n, std::uint64_t seed,
                                        const std::string& prefix) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick(0, world.num_categories - 1);
  std::vector<SyntheticImage> out;
  out.reserve(n);
  char buf[32];
  for (int i = 0; i < n; ++i) {
    std::snprintf(buf, sizeof buf, "-%06d", i);
    SyntheticImage img;
    img.image.id = prefix + buf;
    img.image.source = ImageSource::SyntheticWorldSample;
    img.category = pick(rng);
    img.observation = sample_observation(world, img.category, rng);
    out.push_back(std::move(img));
  }
  return out;
}

}  // namespace divek
