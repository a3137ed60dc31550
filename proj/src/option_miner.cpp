#include "divek/option_miner.hpp"

#include <algorithm>
#include <random>
#include <unordered_map>

#include "divek/errors.hpp"
#include "divek/hashing.hpp"
#include "divek/prompts.hpp"

namespace divek {

char letter_for(int position) {
  if (position < 0 || position >= 26) throw PreconditionError("option position out of range");
  return static_cast<char>('A' + position);
}

int position_of(char letter) { return letter - 'A'; }

HypothesisSet mine_hypotheses(std::span<const RolloutRecord> rollouts) {
  if (rollouts.empty()) throw PreconditionError("mine_hypotheses needs at least one rollout");
  const std::string& image_id = rollouts.front().image.id;
  HypothesisSet hyp;
  hyp.total_rollouts = static_cast<int>(rollouts.size());
  std::unordered_map<std::string, std::size_t> slot;
  for (const auto& r : rollouts) {
    if (r.image.id != image_id) throw PreconditionError("rollouts span more than one image");
    if (!r.format_ok || !r.predicted_category || !r.predicted_category->valid()) {
      ++hyp.parse_failures;
      continue;
    }
    const auto [it, inserted] = slot.emplace(r.predicted_category->normalized, hyp.entries.size());
    if (inserted) {
      hyp.entries.push_back(HypothesisEntry{*r.predicted_category, 1, r.rollout_index});
    } else {
      auto& e = hyp.entries[it->second];
      ++e.count;
      e.first_index = std::min(e.first_index, r.rollout_index);
    }
  }
  std::stable_sort(hyp.entries.begin(), hyp.entries.end(),
                   [](const HypothesisEntry& a, const HypothesisEntry& b) {
                     if (a.count != b.count) return a.count > b.count;
                     return a.first_index < b.first_index;
                   });
  return hyp;
}

std::vector<CategoryName> select_topk(const HypothesisSet& hyp, int m) {
  if (m < 2) throw PreconditionError("m must be >= 2");
  if (hyp.empty()) throw PreconditionError("select_topk on an empty hypothesis set");
  const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(m), hyp.entries.size());
  std::vector<CategoryName> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.push_back(hyp.entries[i].category);
  return out;
}

InjectionResult inject_ground_truth(std::vector<CategoryName> topk, const CategoryName& gt) {
  if (topk.empty()) throw PreconditionError("inject_ground_truth on an empty list");
  for (const auto& c : topk) {
    if (same_category(c, gt)) return {std::move(topk), false};
  }
  topk.back() = gt;
  return {std::move(topk), true};
}

bool filter_trivial(const HypothesisSet& hyp, const CategoryName& gt) {
  if (hyp.empty()) return false;
  return !(hyp.entries.size() == 1 && same_category(hyp.entries.front().category, gt));
}

const CategoryName& MCQSample::answer() const {
  for (const auto& [letter, name] : options) {
    if (letter == answer_letter) return name;
  }
  throw PreconditionError("answer letter not among options");
}

std::vector<LetteredOption> shuffle_options(std::vector<CategoryName> options, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::shuffle(options.begin(), options.end(), rng);
  std::vector<LetteredOption> out;
  out.reserve(options.size());
  for (std::size_t i = 0; i < options.size(); ++i) {
    out.emplace_back(letter_for(static_cast<int>(i)), std::move(options[i]));
  }
  return out;
}

MCQSample build_mcq_sample(const ImageRef& image, const CategoryName& gt,
                           std::vector<CategoryName> options, std::uint64_t shuffle_seed,
                           std::string_view domain_noun, int max_options) {
  if (options.size() < 2 || static_cast<int>(options.size()) > std::min(max_options, 26)) {
    throw PreconditionError("MCQ needs between 2 and m options");
  }
  int gt_hits = 0;
  for (std::size_t i = 0; i < options.size(); ++i) {
    if (same_category(options[i], gt)) ++gt_hits;
    for (std::size_t j = i + 1; j < options.size(); ++j) {
      if (same_category(options[i], options[j])) throw PreconditionError("duplicate MCQ options");
    }
  }
  if (gt_hits != 1) throw PreconditionError("ground truth must be among the options");

  MCQSample s;
  s.image = image;
  s.shuffle_seed = shuffle_seed;
  s.options = shuffle_options(std::move(options), shuffle_seed);
  for (const auto& [letter, name] : s.options) {
    if (same_category(name, gt)) s.answer_letter = letter;
  }
  s.query = render_mcq_prompt(s.options, domain_noun);
  return s;
}

Json mcq_to_json(const MCQSample& s) {
  Json options = Json::array();
  for (const auto& [letter, name] : s.options) {
    options.push_back(Json{{"letter", std::string(1, letter)}, {"category", name.raw}});
  }
  Json j;
  j["image_id"] = s.image.id;
  j["options"] = std::move(options);
  j["answer_letter"] = std::string(1, s.answer_letter);
  j["gt_injected"] = s.gt_injected;
  j["shuffle_seed"] = s.shuffle_seed;
  j["prompt_template_id"] = s.query.template_id;
  return j;
}

MCQSample mcq_from_json(const Json& j) {
  try {
    MCQSample s;
    s.image.id = j.at("image_id").get<std::string>();
    std::vector<CategoryName> ordered;
    for (const auto& o : j.at("options")) {
      const auto letter = o.at("letter").get<std::string>();
      if (letter.size() != 1) throw ConfigError("option letter must be one character");
      CategoryName name = normalize_category(o.at("category").get<std::string>());
      ordered.push_back(name);
      s.options.emplace_back(letter[0], std::move(name));
    }
    const auto answer = j.at("answer_letter").get<std::string>();
    if (answer.size() != 1) throw ConfigError("answer_letter must be one character");
    s.answer_letter = answer[0];
    s.gt_injected = j.at("gt_injected").get<bool>();
    s.shuffle_seed = j.at("shuffle_seed").get<std::uint64_t>();
    s.query.template_id = j.value("prompt_template_id", std::string(templates::kMcq));
    s.query.category_list = std::move(ordered);
    return s;
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("malformed MCQ record: ") + e.what());
  }
}

Json to_json(const MiningReport& r) {
  Json j;
  j["images"] = r.images;
  j["kept"] = r.kept;
  j["filtered_trivial"] = r.filtered_trivial;
  j["dropped_unparsable"] = r.dropped_unparsable;
  j["missing_label"] = r.missing_label;
  j["injected"] = r.injected;
  j["two_option_fallback"] = r.two_option_fallback;
  return j;
}

std::optional<MCQSample> mine_one(std::span<const RolloutRecord> rollouts, const CategoryName& gt,
                                  const MiningOptions& opts, MiningReport& report,
                                  const OptionSource& source) {
  const HypothesisSet hyp = mine_hypotheses(rollouts);
  if (hyp.empty()) {
    ++report.dropped_unparsable;
    return std::nullopt;
  }
  if (!filter_trivial(hyp, gt)) {
    ++report.filtered_trivial;
    return std::nullopt;
  }
  std::vector<CategoryName> candidates = source.candidates(hyp, opts.m);
  InjectionResult inj;
  if (candidates.size() == 1) {
    // A single wrong category: pair it with the ground truth instead of
    // replacing it, so the question keeps two options.
    inj.options = {candidates.front(), gt};
    inj.injected = true;
    ++report.two_option_fallback;
  } else {
    inj = inject_ground_truth(std::move(candidates), gt);
  }
  const ImageRef& image = rollouts.front().image;
  MCQSample s = build_mcq_sample(image, gt, std::move(inj.options), derive_seed(opts.seed, image.id),
                                 opts.domain_noun, opts.m);
  s.gt_injected = inj.injected;
  if (inj.injected) ++report.injected;
  ++report.kept;
  return s;
}

std::map<std::string, std::vector<RolloutRecord>> group_by_image(
    const std::vector<RolloutRecord>& rollout_log) {
  std::map<std::string, std::vector<RolloutRecord>> grouped;
  for (const auto& r : rollout_log) grouped[r.image.id].push_back(r);
  for (auto& [id, rs] : grouped) {
    std::stable_sort(rs.begin(), rs.end(), [](const RolloutRecord& a, const RolloutRecord& b) {
      return a.rollout_index < b.rollout_index;
    });
  }
  return grouped;
}

MiningResult build_training_dataset(const std::vector<RolloutRecord>& rollout_log,
                                    const std::unordered_map<std::string, CategoryName>& labels,
                                    const MiningOptions& opts) {
  MiningResult result;
  for (const auto& [id, rollouts] : group_by_image(rollout_log)) {
    ++result.report.images;
    const auto label = labels.find(id);
    if (label == labels.end()) {
      ++result.report.missing_label;
      continue;
    }
    if (auto s = mine_one(rollouts, label->second, opts, result.report)) {
      result.samples.push_back(std::move(*s));
    }
  }
  return result;
}

}  // namespace divek
