#pragma once

#include <atomic>
#include <filesystem>
#include <future>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <tuple>
#include <vector>

#include "divek/evaluator.hpp"
#include "divek/http_chat.hpp"

namespace divek {

struct ParsedJudgeReply {
  std::optional<bool> verdict;
  std::string explanation;
};

// <answer>True|False</answer> (case-insensitive) and <explanation>...</explanation>.
ParsedJudgeReply parse_judge_reply(std::string_view reply);

/// Persistent verdict store keyed by (normalized gt, normalized pred, model).
/// File format, one JSON object per line:
///   {gt, pred, judge_model, verdict, explanation}
class VerdictCache {
 public:
  struct Entry {
    bool verdict = false;
    std::string explanation;
  };
  using Key = std::tuple<std::string, std::string, std::string>;

  static Key key(const CategoryName& gt, const CategoryName& pred, const std::string& model);

  std::optional<Entry> find(const Key& k) const;
  void insert(const Key& k, Entry e);
  std::size_t size() const;

  void load(const std::filesystem::path& path);
  // Rewrites the file sorted by key.
  void save(const std::filesystem::path& path) const;

 private:
  mutable std::shared_mutex mu_;
  std::map<Key, Entry> entries_;
};

/// Language-model judge. Normalized-equal pairs short-circuit to true and
/// empty predictions to false without a call; other pairs are served from
/// the cache or sent to the model. Concurrent requests for the same pair are
/// coalesced into one call. A reply without a parsable answer is retried
/// twice, then scored false (not cached) and counted in failures().
class LlmJudge : public Adjudicator {
 public:
  LlmJudge(TextCompleter completer, std::string model_id, std::shared_ptr<VerdictCache> cache);

  JudgeVerdict adjudicate(const CategoryName& gt, const std::optional<CategoryName>& pred) override;
  std::string name() const override { return "llm-judge:" + model_id_; }

  // Adjudicates all pairs with at most `concurrency` calls in flight.
  std::vector<JudgeVerdict> adjudicate_all(
      const std::vector<std::pair<CategoryName, std::optional<CategoryName>>>& pairs,
      int concurrency);

  int calls() const { return calls_.load(); }
  int failures() const { return failures_.load(); }
  VerdictCache& cache() { return *cache_; }

 private:
  JudgeVerdict ask_model(const CategoryName& gt, const CategoryName& pred);

  TextCompleter completer_;
  std::string model_id_;
  std::shared_ptr<VerdictCache> cache_;
  std::mutex inflight_mu_;
  std::map<VerdictCache::Key, std::shared_future<JudgeVerdict>> inflight_;
  std::atomic<int> calls_{0};
  std::atomic<int> failures_{0};
};

}  // namespace divek
