#include "divek/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "divek/errors.hpp"

namespace divek {

Split CategorySplit::split_of(const CategoryName& c) const {
  for (const auto& b : base) {
    if (same_category(b, c)) return Split::Base;
  }
  for (const auto& n : novel) {
    if (same_category(n, c)) return Split::Novel;
  }
  return Split::Unsplit;
}

CategorySplit split_categories(const std::vector<CategoryName>& all_categories) {
  if (all_categories.empty()) throw PreconditionError("cannot split an empty category list");
  const std::size_t n_base = (all_categories.size() + 1) / 2;
  CategorySplit s;
  s.base.assign(all_categories.begin(), all_categories.begin() + n_base);
  s.novel.assign(all_categories.begin() + n_base, all_categories.end());
  return s;
}

bool substring_match_strict(const CategoryName& gt, const CategoryName& pred) {
  if (!gt.valid() || !pred.valid()) return false;
  return pred.normalized.find(gt.normalized) != std::string::npos;
}

bool substring_match_bidirectional(const CategoryName& gt, const CategoryName& pred) {
  if (!gt.valid() || !pred.valid()) return false;
  return pred.normalized.find(gt.normalized) != std::string::npos ||
         gt.normalized.find(pred.normalized) != std::string::npos;
}

double harmonic_mean(double b, double n) {
  if (b + n == 0.0) return 0.0;
  return 2.0 * b * n / (b + n);
}

std::string_view to_string(VerdictSource s) {
  switch (s) {
    case VerdictSource::LlmJudge: return "llm-judge";
    case VerdictSource::Cache: return "cache";
    case VerdictSource::SubstringStrict: return "substring-strict";
    case VerdictSource::SubstringBidirectional: return "substring-bidirectional";
    case VerdictSource::ExactNormalized: return "exact-normalized";
  }
  return "exact-normalized";
}

JudgeVerdict ExactAdjudicator::adjudicate(const CategoryName& gt, const std::optional<CategoryName>& pred) {
  JudgeVerdict v;
  v.gt = gt;
  v.source = VerdictSource::ExactNormalized;
  if (pred) v.pred = *pred;
  v.verdict = pred && pred->valid() && same_category(gt, *pred);
  return v;
}

JudgeVerdict SubstringAdjudicator::adjudicate(const CategoryName& gt,
                                              const std::optional<CategoryName>& pred) {
  JudgeVerdict v;
  v.gt = gt;
  v.source = strict_ ? VerdictSource::SubstringStrict : VerdictSource::SubstringBidirectional;
  if (!pred) return v;
  v.pred = *pred;
  v.verdict = strict_ ? substring_match_strict(gt, *pred) : substring_match_bidirectional(gt, *pred);
  return v;
}

namespace {

void tally(SplitStats& s, const PredictionRecord& p, const CategoryName& gt, bool correct) {
  ++s.count;
  if (correct) ++s.correct;
  if (!p.step1_options) return;
  ++s.two_step;
  bool contains = false;
  if (p.step1_contains_gt) {
    contains = *p.step1_contains_gt;
  } else {
    contains = std::any_of(p.step1_options->begin(), p.step1_options->end(),
                           [&](const CategoryName& c) { return same_category(c, gt); });
  }
  if (contains) {
    ++s.step1_contains;
    if (correct) ++s.step2_correct;
  }
}

}  // namespace

EvalReport accuracy_report(const std::vector<PredictionRecord>& predictions,
                           const std::unordered_map<std::string, CategoryName>& labels,
                           const std::unordered_map<std::string, Split>& split_map,
                           Adjudicator& adjudicator) {
  EvalReport r;
  r.adjudicator = adjudicator.name();
  for (const auto& p : predictions) {
    const auto label = labels.find(p.image.id);
    if (label == labels.end()) {
      ++r.missing_labels;
      continue;
    }
    const bool correct = adjudicator.adjudicate(label->second, p.final_category).verdict;
    tally(r.overall, p, label->second, correct);
    const auto split = split_map.find(p.image.id);
    if (split == split_map.end()) continue;
    if (split->second == Split::Base) tally(r.base, p, label->second, correct);
    if (split->second == Split::Novel) tally(r.novel, p, label->second, correct);
  }
  if (r.base.count > 0 && r.novel.count > 0) {
    r.harmonic_mean = harmonic_mean(r.base.accuracy(), r.novel.accuracy());
  } else {
    r.hm_degenerate = true;
    r.harmonic_mean = r.base.count > 0 ? r.base.accuracy() : r.novel.accuracy();
  }
  return r;
}

std::vector<std::pair<int, double>> pass_at_k_curve(
    const std::map<std::string, std::vector<RolloutRecord>>& rollouts_by_image,
    const std::unordered_map<std::string, CategoryName>& labels, const std::vector<int>& k_list) {
  std::vector<std::pair<int, double>> curve;
  for (int k : k_list) {
    if (k < 1) throw PreconditionError("k must be >= 1");
    int images = 0;
    int hits = 0;
    for (const auto& [id, rollouts] : rollouts_by_image) {
      const auto label = labels.find(id);
      if (label == labels.end() || rollouts.empty()) continue;
      ++images;
      const int kk = std::min<int>(k, static_cast<int>(rollouts.size()));
      if (pass_at_k(rollouts, label->second, kk)) ++hits;
    }
    curve.emplace_back(k, images ? double(hits) / images : 0.0);
  }
  return curve;
}

namespace {

Json split_json(const SplitStats& s) {
  Json j;
  j["count"] = s.count;
  j["correct"] = s.correct;
  j["accuracy"] = s.accuracy();
  j["two_step_records"] = s.two_step;
  j["step1_contains_gt"] = s.step1_contains;
  j["step1_topk_accuracy"] = s.step1_topk_accuracy();
  j["step2_correct"] = s.step2_correct;
  j["step2_mcq_accuracy"] = s.step2_mcq_accuracy();
  return j;
}

std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", round1(100.0 * v));
  return buf;
}

std::string signed_pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%+.1f", round1(100.0 * v));
  return buf;
}

std::string pad(const std::string& s, std::size_t w) {
  return s.size() >= w ? s : std::string(w - s.size(), ' ') + s;
}

std::string pad_right(const std::string& s, std::size_t w) {
  return s.size() >= w ? s : s + std::string(w - s.size(), ' ');
}

}  // namespace

Json to_json(const EvalReport& r) {
  Json j;
  j["adjudicator"] = r.adjudicator;
  j["base"] = split_json(r.base);
  j["novel"] = split_json(r.novel);
  j["overall"] = split_json(r.overall);
  j["harmonic_mean"] = r.harmonic_mean;
  j["hm_degenerate"] = r.hm_degenerate;
  j["missing_labels"] = r.missing_labels;
  Json curve = Json::array();
  for (const auto& [k, acc] : r.pass_at_k_curve) curve.push_back(Json{{"k", k}, {"accuracy", acc}});
  j["pass_at_k_curve"] = std::move(curve);
  return j;
}

std::string format_eval_report(const EvalReport& r, const std::string& title, const EvalReport* baseline) {
  std::ostringstream out;
  out << title << "  (adjudicator: " << r.adjudicator << ")\n";
  out << pad_right("split", 10) << pad("count", 8) << pad("acc", 8) << pad("top-k", 8) << pad("step2", 8);
  if (baseline) out << pad("d.acc", 8);
  out << '\n';
  const auto line = [&](const char* name, const SplitStats& s, const SplitStats* b) {
    out << pad_right(name, 10) << pad(std::to_string(s.count), 8) << pad(pct(s.accuracy()), 8)
        << pad(s.two_step ? pct(s.step1_topk_accuracy()) : "-", 8)
        << pad(s.step1_contains ? pct(s.step2_mcq_accuracy()) : "-", 8);
    if (b) out << pad(signed_pct(s.accuracy() - b->accuracy()), 8);
    out << '\n';
  };
  line("base", r.base, baseline ? &baseline->base : nullptr);
  line("novel", r.novel, baseline ? &baseline->novel : nullptr);
  line("overall", r.overall, baseline ? &baseline->overall : nullptr);
  out << pad_right("HM", 10) << pad("", 8) << pad(pct(r.harmonic_mean), 8);
  if (r.hm_degenerate) out << "  (one split empty)";
  if (baseline) out << pad("", 16) << pad(signed_pct(r.harmonic_mean - baseline->harmonic_mean), 8);
  out << '\n';
  if (r.missing_labels) out << "missing labels: " << r.missing_labels << '\n';
  if (!r.pass_at_k_curve.empty()) {
    out << "pass@k:";
    for (const auto& [k, acc] : r.pass_at_k_curve) out << "  k=" << k << ' ' << pct(acc);
    out << '\n';
  }
  return out.str();
}

ScoreRow score_row(const MethodScores& m) {
  if (m.datasets.empty()) throw PreconditionError("method has no dataset scores: " + m.method);
  ScoreRow row;
  row.method = m.method;
  double sum_b = 0.0;
  double sum_n = 0.0;
  for (const auto& d : m.datasets) {
    row.cells.push_back({d.base, d.novel, harmonic_mean(d.base, d.novel)});
    sum_b += d.base;
    sum_n += d.novel;
  }
  const double k = static_cast<double>(m.datasets.size());
  row.average = {sum_b / k, sum_n / k, harmonic_mean(sum_b / k, sum_n / k)};
  return row;
}

double round1(double v) { return std::round(v * 10.0) / 10.0; }

std::string format_score_table(const std::vector<ScoreRow>& rows,
                               const std::vector<std::pair<std::string, std::string>>& deltas) {
  std::size_t name_w = 6;
  for (const auto& r : rows) name_w = std::max(name_w, r.method.size() + 2);
  for (const auto& [a, b] : deltas) name_w = std::max(name_w, a.size() + b.size() + 6);
  constexpr std::size_t kCell = 7;

  const auto num = [](double v, bool sign) {
    char buf[32];
    std::snprintf(buf, sizeof buf, sign ? "%+.1f" : "%.1f", round1(v));
    return std::string(buf);
  };
  const auto cells_of = [](const ScoreRow& r) {
    std::vector<double> c;
    for (const auto& cell : r.cells) c.insert(c.end(), cell.begin(), cell.end());
    c.insert(c.end(), r.average.begin(), r.average.end());
    return c;
  };

  std::ostringstream out;
  const std::size_t n_datasets = rows.empty() ? 0 : rows.front().cells.size();
  out << pad_right("method", name_w);
  for (std::size_t d = 0; d < n_datasets; ++d) {
    out << pad("B" + std::to_string(d + 1), kCell) << pad("N" + std::to_string(d + 1), kCell)
        << pad("H" + std::to_string(d + 1), kCell);
  }
  out << pad("AvgB", kCell) << pad("AvgN", kCell) << pad("AvgH", kCell) << '\n';
  for (const auto& r : rows) {
    out << pad_right(r.method, name_w);
    for (double v : cells_of(r)) out << pad(num(v, false), kCell);
    out << '\n';
  }
  for (const auto& [method, base] : deltas) {
    const auto a = std::find_if(rows.begin(), rows.end(), [&](const ScoreRow& r) { return r.method == method; });
    const auto b = std::find_if(rows.begin(), rows.end(), [&](const ScoreRow& r) { return r.method == base; });
    if (a == rows.end() || b == rows.end()) throw ConfigError("delta row names an unknown method");
    const auto ca = cells_of(*a);
    const auto cb = cells_of(*b);
    if (ca.size() != cb.size()) throw ConfigError("delta rows cover different datasets");
    out << pad_right("d " + method + " - " + base, name_w);
    for (std::size_t i = 0; i < ca.size(); ++i) out << pad(num(ca[i] - cb[i], true), kCell);
    out << '\n';
  }
  return out.str();
}

}  // namespace divek
