#include <atomic>
#include <chrono>
#include <thread>

#include "divek/judge.hpp"
#include "divek/prompts.hpp"
#include "divek/records.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace divek;

namespace {

struct CountingCompleter {
  std::shared_ptr<std::atomic<int>> calls = std::make_shared<std::atomic<int>>(0);
  std::string reply = "<answer>False</answer><explanation>different species</explanation>";
  std::chrono::milliseconds delay{0};

  TextCompleter fn() const {
    return [calls = calls, reply = reply, delay = delay](const std::string&) {
      ++*calls;
      if (delay.count()) std::this_thread::sleep_for(delay);
      return reply;
    };
  }
};

CategoryName n(const char* s) { return normalize_category(s); }

}  // namespace

TEST_CASE("judge reply parsing") {
  auto r = parse_judge_reply("<answer>TRUE</answer> <explanation>same bird</explanation>");
  CHECK(r.verdict == true);
  CHECK(r.explanation == "same bird");
  CHECK(parse_judge_reply("<answer> false </answer>").verdict == false);
  CHECK_FALSE(parse_judge_reply("I think they match").verdict);
  CHECK_FALSE(parse_judge_reply("<answer>maybe</answer>").verdict);
}

TEST_CASE("judge short-circuits without calls") {
  CountingCompleter cc;
  LlmJudge judge(cc.fn(), "m", std::make_shared<VerdictCache>());
  const auto same = judge.adjudicate(n("Sooty Albatross"), n("sooty albatross"));
  CHECK(same.verdict);
  CHECK(same.source == VerdictSource::ExactNormalized);
  CHECK_FALSE(judge.adjudicate(n("Sooty Albatross"), std::nullopt).verdict);
  CHECK_FALSE(judge.adjudicate(n("Sooty Albatross"), n("  ")).verdict);
  CHECK(*cc.calls == 0);
}

TEST_CASE("judge caches verdicts") {
  CountingCompleter cc;
  auto cache = std::make_shared<VerdictCache>();
  LlmJudge judge(cc.fn(), "m", cache);
  const auto first = judge.adjudicate(n("California Gull"), n("gull"));
  CHECK_FALSE(first.verdict);
  CHECK(first.source == VerdictSource::LlmJudge);
  CHECK(first.explanation == "different species");
  const auto second = judge.adjudicate(n("california gull"), n("Gull"));
  CHECK(second.source == VerdictSource::Cache);
  CHECK(*cc.calls == 1);
  CHECK(judge.calls() == 1);

  // A different judge model is a different key.
  LlmJudge other(cc.fn(), "m2", cache);
  other.adjudicate(n("California Gull"), n("gull"));
  CHECK(*cc.calls == 2);
}

TEST_CASE("judge prompt carries both names") {
  std::string seen;
  LlmJudge judge([&](const std::string& p) { seen = p; return std::string("<answer>True</answer>"); },
                 "m", std::make_shared<VerdictCache>());
  CHECK(judge.adjudicate(n("Laysan Albatross"), n("laysan albatros")).verdict);
  CHECK(seen == render_judge_prompt("Laysan Albatross", "laysan albatros"));
}

TEST_CASE("concurrent duplicates are coalesced") {
  CountingCompleter cc;
  cc.delay = std::chrono::milliseconds(50);
  LlmJudge judge(cc.fn(), "m", std::make_shared<VerdictCache>());
  std::vector<std::thread> threads;
  std::atomic<int> false_count{0};
  for (int i = 0; i < 8; ++i) {
    threads.emplace_back([&] {
      if (!judge.adjudicate(n("California Gull"), n("gull")).verdict) ++false_count;
    });
  }
  for (auto& t : threads) t.join();
  CHECK(*cc.calls == 1);
  CHECK(false_count == 8);

  std::vector<std::pair<CategoryName, std::optional<CategoryName>>> pairs;
  for (int i = 0; i < 40; ++i) pairs.emplace_back(n("gt"), n(("p" + std::to_string(i % 5)).c_str()));
  const auto verdicts = judge.adjudicate_all(pairs, 4);
  CHECK(verdicts.size() == 40);
  CHECK(*cc.calls == 6);
  CHECK(verdicts[7].pred.normalized == "p2");
}

TEST_CASE("unparsable judge replies retry then score false") {
  CountingCompleter cc;
  cc.reply = "no tags at all";
  auto cache = std::make_shared<VerdictCache>();
  LlmJudge judge(cc.fn(), "m", cache);
  const auto v = judge.adjudicate(n("California Gull"), n("gull"));
  CHECK_FALSE(v.verdict);
  CHECK(*cc.calls == 3);
  CHECK(judge.failures() == 1);
  CHECK(cache->size() == 0);

  // Transport failures are not verdicts; they propagate to the caller.
  LlmJudge throwing([](const std::string&) -> std::string { throw std::runtime_error("down"); }, "m",
                    std::make_shared<VerdictCache>());
  CHECK_THROWS_AS(throwing.adjudicate(n("a"), n("b")), std::runtime_error);
  CHECK(throwing.failures() == 0);
}

TEST_CASE("verdict cache persists") {
  divek::testing::TempDir tmp;
  VerdictCache c;
  c.insert(VerdictCache::key(n("Zebra Finch"), n("finch"), "m"), {false, "too generic"});
  c.insert(VerdictCache::key(n("Aa"), n("aa bird"), "m"), {true, "ok"});
  c.save(tmp / "cache.jsonl");
  const auto rows = read_jsonl(tmp / "cache.jsonl").rows;
  REQUIRE(rows.size() == 2);
  CHECK(rows[0]["gt"] == "aa");
  CHECK(rows[1]["explanation"] == "too generic");

  VerdictCache d;
  d.load(tmp / "cache.jsonl");
  CHECK(d.size() == 2);
  const auto hit = d.find(VerdictCache::key(n("ZEBRA finch"), n("Finch"), "m"));
  REQUIRE(hit);
  CHECK_FALSE(hit->verdict);
  CHECK_FALSE(d.find(VerdictCache::key(n("Zebra Finch"), n("finch"), "other")));

  // Loading a missing file leaves the cache empty.
  VerdictCache e;
  e.load(tmp / "absent.jsonl");
  CHECK(e.size() == 0);
}

TEST_CASE("warm cache replay issues no calls and gives identical verdicts") {
  divek::testing::TempDir tmp;
  std::vector<std::pair<CategoryName, std::optional<CategoryName>>> pairs{
      {n("California Gull"), n("gull")}, {n("Sooty Albatross"), n("sooty albatross")},
      {n("Laysan Albatross"), std::nullopt}, {n("Least Auklet"), n("auklet")}};
  CountingCompleter cc;
  auto cold = std::make_shared<VerdictCache>();
  LlmJudge a(cc.fn(), "m", cold);
  const auto v1 = a.adjudicate_all(pairs, 2);
  cold->save(tmp / "c.jsonl");
  const int cold_calls = *cc.calls;
  CHECK(cold_calls == 2);

  auto warm = std::make_shared<VerdictCache>();
  warm->load(tmp / "c.jsonl");
  LlmJudge b(cc.fn(), "m", warm);
  const auto v2 = b.adjudicate_all(pairs, 2);
  CHECK(*cc.calls == cold_calls);
  for (std::size_t i = 0; i < pairs.size(); ++i) CHECK(v1[i].verdict == v2[i].verdict);
}
