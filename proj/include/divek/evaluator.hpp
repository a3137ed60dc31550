#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "divek/category.hpp"
#include "divek/orchestrator.hpp"
#include "divek/records.hpp"

namespace divek {

struct CategorySplit {
  std::vector<CategoryName> base;
  std::vector<CategoryName> novel;

  // Unsplit for names in neither half.
  Split split_of(const CategoryName& c) const;
};

// First ceil(n/2) categories are base, the rest novel. Requires n >= 1.
CategorySplit split_categories(const std::vector<CategoryName>& all_categories);

bool substring_match_strict(const CategoryName& gt, const CategoryName& pred);
bool substring_match_bidirectional(const CategoryName& gt, const CategoryName& pred);

// 2bn/(b+n), or 0 when b+n = 0.
double harmonic_mean(double b, double n);

enum class VerdictSource { LlmJudge, Cache, SubstringStrict, SubstringBidirectional, ExactNormalized };

std::string_view to_string(VerdictSource s);

struct JudgeVerdict {
  CategoryName gt;
  CategoryName pred;
  bool verdict = false;
  std::string explanation;
  VerdictSource source = VerdictSource::ExactNormalized;
};

/// Decides whether a prediction names the ground-truth category. A missing
/// or empty prediction is always wrong.
class Adjudicator {
 public:
  virtual ~Adjudicator() = default;
  virtual JudgeVerdict adjudicate(const CategoryName& gt, const std::optional<CategoryName>& pred) = 0;
  virtual std::string name() const = 0;
  // True when a correct answer must equal gt after normalization.
  virtual bool is_exact() const { return false; }
};

class ExactAdjudicator : public Adjudicator {
 public:
  JudgeVerdict adjudicate(const CategoryName& gt, const std::optional<CategoryName>& pred) override;
  std::string name() const override { return "exact-normalized"; }
  bool is_exact() const override { return true; }
};

class SubstringAdjudicator : public Adjudicator {
 public:
  explicit SubstringAdjudicator(bool strict) : strict_(strict) {}
  JudgeVerdict adjudicate(const CategoryName& gt, const std::optional<CategoryName>& pred) override;
  std::string name() const override {
    return strict_ ? "substring-strict" : "substring-bidirectional";
  }

 private:
  bool strict_;
};

struct SplitStats {
  int count = 0;
  int correct = 0;
  int two_step = 0;        // records carrying step-1 options
  int step1_contains = 0;  // of those, gt among the options
  int step2_correct = 0;   // correct among step1_contains

  double accuracy() const { return count ? double(correct) / count : 0.0; }
  double step1_topk_accuracy() const { return two_step ? double(step1_contains) / two_step : 0.0; }
  double step2_mcq_accuracy() const {
    return step1_contains ? double(step2_correct) / step1_contains : 0.0;
  }
};

struct EvalReport {
  SplitStats base;
  SplitStats novel;
  SplitStats overall;  // every labeled record, including unsplit ones
  double harmonic_mean = 0.0;
  bool hm_degenerate = false;  // base or novel split empty
  int missing_labels = 0;
  std::string adjudicator;
  std::vector<std::pair<int, double>> pass_at_k_curve;
};

/// Accuracy per split, step-1 containment and conditional step-2 accuracy.
/// Records whose image has no label are excluded and counted. When a split
/// is empty, the harmonic mean reports the other split's accuracy and is
/// flagged degenerate.
EvalReport accuracy_report(const std::vector<PredictionRecord>& predictions,
                           const std::unordered_map<std::string, CategoryName>& labels,
                           const std::unordered_map<std::string, Split>& split_map,
                           Adjudicator& adjudicator);

/// Fraction of labeled images whose first-k rollouts contain gt, for each k.
std::vector<std::pair<int, double>> pass_at_k_curve(
    const std::map<std::string, std::vector<RolloutRecord>>& rollouts_by_image,
    const std::unordered_map<std::string, CategoryName>& labels, const std::vector<int>& k_list);

Json to_json(const EvalReport& r);
std::string format_eval_report(const EvalReport& r, const std::string& title,
                               const EvalReport* baseline = nullptr);

// Published-style score tables: per-dataset base/novel accuracy for methods,
// averaged, with H computed from the averages.
struct DatasetScore {
  std::string dataset;
  double base = 0.0;
  double novel = 0.0;
};

struct MethodScores {
  std::string method;
  std::vector<DatasetScore> datasets;
};

struct ScoreRow {
  std::string method;
  std::vector<std::array<double, 3>> cells;  // per dataset: B, N, H
  std::array<double, 3> average{};           // mean B, mean N, H(mean B, mean N)
};

ScoreRow score_row(const MethodScores& m);

// One-decimal display rounding (half away from zero).
double round1(double v);

// Aligned B/N/H columns per dataset plus Avg; one signed delta row per
// (method, baseline) pair in `deltas`.
std::string format_score_table(const std::vector<ScoreRow>& rows,
                               const std::vector<std::pair<std::string, std::string>>& deltas);

}  // namespace divek
