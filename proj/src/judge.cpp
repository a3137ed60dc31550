#include "divek/judge.hpp"

#include <algorithm>
#include <cctype>
#include <iostream>

#include "divek/errors.hpp"
#include "divek/parallel.hpp"
#include "divek/prompts.hpp"
#include "divek/records.hpp"
#include "divek/response_parser.hpp"

namespace divek {

ParsedJudgeReply parse_judge_reply(std::string_view reply) {
  ParsedJudgeReply out;
  if (auto answer = extract_tag(reply, "answer")) {
    std::string a = *answer;
    std::transform(a.begin(), a.end(), a.begin(), [](unsigned char c) { return std::tolower(c); });
    if (a == "true") out.verdict = true;
    if (a == "false") out.verdict = false;
  }
  if (auto expl = extract_tag(reply, "explanation")) out.explanation = *expl;
  return out;
}

VerdictCache::Key VerdictCache::key(const CategoryName& gt, const CategoryName& pred, const std::string& model) {
  return {gt.normalized, pred.normalized, model};
}

std::optional<VerdictCache::Entry> VerdictCache::find(const Key& k) const {
  std::shared_lock lock(mu_);
  const auto it = entries_.find(k);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void VerdictCache::insert(const Key& k, Entry e) {
  std::unique_lock lock(mu_);
  entries_[k] = std::move(e);
}

std::size_t VerdictCache::size() const {
  std::shared_lock lock(mu_);
  return entries_.size();
}

void VerdictCache::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) return;
  const auto contents = read_jsonl(path);
  std::unique_lock lock(mu_);
  for (const auto& row : contents.rows) {
    try {
      const auto gt = normalize_category(row.at("gt").get<std::string>());
      const auto pred = normalize_category(row.at("pred").get<std::string>());
      entries_[key(gt, pred, row.at("judge_model").get<std::string>())] =
          Entry{row.at("verdict").get<bool>(), row.value("explanation", std::string())};
    } catch (const Json::exception& e) {
      throw ConfigError("malformed verdict cache row in " + path.string() + ": " + e.what());
    }
  }
}

void VerdictCache::save(const std::filesystem::path& path) const {
  std::vector<Json> rows;
  {
    std::shared_lock lock(mu_);
    for (const auto& [k, e] : entries_) {
      Json j;
      j["gt"] = std::get<0>(k);
      j["pred"] = std::get<1>(k);
      j["judge_model"] = std::get<2>(k);
      j["verdict"] = e.verdict;
      j["explanation"] = e.explanation;
      rows.push_back(std::move(j));
    }
  }
  write_jsonl(path, rows);
}

LlmJudge::LlmJudge(TextCompleter completer, std::string model_id, std::shared_ptr<VerdictCache> cache)
    : completer_(std::move(completer)),
      model_id_(std::move(model_id)),
      cache_(cache ? std::move(cache) : std::make_shared<VerdictCache>()) {}

JudgeVerdict LlmJudge::ask_model(const CategoryName& gt, const CategoryName& pred) {
  JudgeVerdict v;
  v.gt = gt;
  v.pred = pred;
  v.source = VerdictSource::LlmJudge;
  const std::string prompt = render_judge_prompt(gt.raw, pred.raw);
  constexpr int kAttempts = 3;
  for (int attempt = 0; attempt < kAttempts; ++attempt) {
    ++calls_;
    const ParsedJudgeReply reply = parse_judge_reply(completer_(prompt));
    if (reply.verdict) {
      v.verdict = *reply.verdict;
      v.explanation = reply.explanation;
      cache_->insert(VerdictCache::key(gt, pred, model_id_), {v.verdict, v.explanation});
      return v;
    }
  }
  ++failures_;
  std::cerr << "warning: judge gave no verdict for (" << gt.raw << ", " << pred.raw
            << "); scoring it false\n";
  v.verdict = false;
  v.explanation = "judge reply had no parsable answer";
  return v;
}

JudgeVerdict LlmJudge::adjudicate(const CategoryName& gt, const std::optional<CategoryName>& pred) {
  JudgeVerdict v;
  v.gt = gt;
  v.source = VerdictSource::ExactNormalized;
  if (!pred || !pred->valid()) {
    v.explanation = "empty prediction";
    return v;
  }
  v.pred = *pred;
  if (same_category(gt, *pred)) {
    v.verdict = true;
    return v;
  }

  const auto k = VerdictCache::key(gt, *pred, model_id_);
  std::shared_future<JudgeVerdict> pending;
  std::promise<JudgeVerdict> owner;
  bool owns = false;
  {
    std::lock_guard lock(inflight_mu_);
    if (auto hit = cache_->find(k)) {
      v.verdict = hit->verdict;
      v.explanation = hit->explanation;
      v.source = VerdictSource::Cache;
      return v;
    }
    const auto it = inflight_.find(k);
    if (it != inflight_.end()) {
      pending = it->second;
    } else {
      pending = owner.get_future().share();
      inflight_.emplace(k, pending);
      owns = true;
    }
  }
  if (!owns) return pending.get();

  try {
    JudgeVerdict result = ask_model(gt, *pred);
    owner.set_value(result);
  } catch (...) {
    owner.set_exception(std::current_exception());
  }
  {
    std::lock_guard lock(inflight_mu_);
    inflight_.erase(k);
  }
  return pending.get();
}

std::vector<JudgeVerdict> LlmJudge::adjudicate_all(
    const std::vector<std::pair<CategoryName, std::optional<CategoryName>>>& pairs, int concurrency) {
  std::vector<JudgeVerdict> out(pairs.size());
  parallel_for(pairs.size(), concurrency,
               [&](std::size_t i) { out[i] = adjudicate(pairs[i].first, pairs[i].second); });
  return out;
}

}  // namespace divek
