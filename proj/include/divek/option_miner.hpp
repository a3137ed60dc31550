#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "divek/category.hpp"
#include "divek/records.hpp"
#include "divek/response_parser.hpp"

namespace divek {

struct HypothesisEntry {
  CategoryName category;  // first surface form seen
  int count = 0;
  int first_index = 0;    // rollout_index of first occurrence
};

/// Distinct predicted categories of one image's rollouts, ranked by count
/// (descending) and then by first occurrence (ascending).
struct HypothesisSet {
  std::vector<HypothesisEntry> entries;
  int total_rollouts = 0;
  int parse_failures = 0;

  bool empty() const { return entries.empty(); }
};

// Only format_ok rollouts are counted. Throws PreconditionError on an empty
// input or on rollouts from more than one image.
HypothesisSet mine_hypotheses(std::span<const RolloutRecord> rollouts);

// First min(m, |entries|) categories in rank order. Requires m >= 2 and a
// non-empty set.
std::vector<CategoryName> select_topk(const HypothesisSet& hyp, int m);

struct InjectionResult {
  std::vector<CategoryName> options;
  bool injected = false;
};

// Replaces the lowest-ranked candidate with gt unless gt is already present.
InjectionResult inject_ground_truth(std::vector<CategoryName> topk, const CategoryName& gt);

// Keep unless the model produced exactly one category and it was correct,
// or produced nothing parsable.
bool filter_trivial(const HypothesisSet& hyp, const CategoryName& gt);

/// One multiple-choice training sample (image, query, lettered options,
/// answer letter).
struct MCQSample {
  ImageRef image;
  QueryPrompt query;
  std::vector<LetteredOption> options;
  char answer_letter = 'A';
  bool gt_injected = false;
  std::uint64_t shuffle_seed = 0;

  const CategoryName& answer() const;
};

// Seeded uniform permutation of the options, lettered A, B, ...
std::vector<LetteredOption> shuffle_options(std::vector<CategoryName> options, std::uint64_t seed);

// Requires 2 <= |options| <= max_options and gt among the options.
MCQSample build_mcq_sample(const ImageRef& image, const CategoryName& gt,
                           std::vector<CategoryName> options, std::uint64_t shuffle_seed,
                           std::string_view domain_noun, int max_options = 26);

Json mcq_to_json(const MCQSample& s);
MCQSample mcq_from_json(const Json& j);

/// Where MCQ options come from. Only the top-k source is implemented.
class OptionSource {
 public:
  virtual ~OptionSource() = default;
  virtual std::vector<CategoryName> candidates(const HypothesisSet& hyp, int m) const = 0;
  virtual std::string name() const = 0;
};

class TopKOptionSource : public OptionSource {
 public:
  std::vector<CategoryName> candidates(const HypothesisSet& hyp, int m) const override {
    return select_topk(hyp, m);
  }
  std::string name() const override { return "top-k"; }
};

struct MiningOptions {
  int m = 5;
  std::uint64_t seed = 0;
  std::string domain_noun = "object";
};

struct MiningReport {
  int images = 0;
  int kept = 0;
  int filtered_trivial = 0;
  int dropped_unparsable = 0;
  int missing_label = 0;
  int injected = 0;
  int two_option_fallback = 0;
};

Json to_json(const MiningReport& r);

struct MiningResult {
  std::vector<MCQSample> samples;  // sorted by image id
  MiningReport report;
};

enum class MineOutcome { Kept, FilteredTrivial, DroppedUnparsable };

// mine -> filter -> top-k -> inject -> shuffle for one image. `report` is
// updated for everything except `images` and `missing_label`.
std::optional<MCQSample> mine_one(std::span<const RolloutRecord> rollouts, const CategoryName& gt,
                                  const MiningOptions& opts, MiningReport& report,
                                  const OptionSource& source = TopKOptionSource{});

// Groups a rollout log by image id and mines each image. Images without a
// label are skipped and counted.
MiningResult build_training_dataset(const std::vector<RolloutRecord>& rollout_log,
                                    const std::unordered_map<std::string, CategoryName>& labels,
                                    const MiningOptions& opts);

// Rollouts grouped by image id (ordered map, so iteration is by id).
std::map<std::string, std::vector<RolloutRecord>> group_by_image(
    const std::vector<RolloutRecord>& rollout_log);

char letter_for(int position);
int position_of(char letter);

}  // namespace divek
