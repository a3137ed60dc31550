#include <fstream>
#include <sstream>

#include "divek/commands.hpp"
#include "divek/errors.hpp"
#include "divek/manifest.hpp"
#include "divek/records.hpp"
#include "divek/sim_trainer.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace divek;
namespace fs = std::filesystem;
using divek::testing::TempDir;

namespace {

// Mock pipeline config pointing at a private output directory.
PipelineConfig mock_config(const fs::path& out) {
  PipelineConfig c = load_config(divek::testing::fixture_dir() / "mock" / "mock.toml");
  c.output_dir = out;
  c.judge.cache_path = out / "judge_cache.jsonl";
  return c;
}

PipelineConfig small_world_config(const fs::path& out) {
  PipelineConfig c = config_from_json(parse_toml_subset(R"(
seed = 3
[backend]
kind = "confusion-world"
concurrency = 2
[sampling]
K = 10
[world]
num_categories = 12
images = 40
[train]
steps = 20
eval_every = 10
eval_images = 50
pool_images = 60
batch_images = 4
[infer]
k_list = [1, 5, 10]
modes = ["two-step", "consistency", "single-step"]
)"),
                                      out);
  c.output_dir = out;
  return c;
}

std::string slurp(const fs::path& p) { return read_text_file(p); }

int run(const std::string& cmd, const PipelineConfig& cfg, const CommandOptions& opts = {}) {
  std::ostringstream out, err;
  return run_command(cmd, cfg, opts, out, err);
}

}  // namespace

TEST_CASE("mock mining matches the hand-counted fixture") {
  TempDir tmp;
  const auto cfg = mock_config(tmp / "run");
  REQUIRE(run("mine", cfg) == 0);
  const Json rep = Json::parse(slurp(tmp / "run" / "mining_report.json"));
  CHECK(rep["images"] == 5);
  CHECK(rep["kept"] == 3);
  CHECK(rep["filtered_trivial"] == 1);
  CHECK(rep["dropped_unparsable"] == 1);
  CHECK(rep["injected"] == 2);
  CHECK(rep["two_option_fallback"] == 1);
  CHECK(rep["skipped_novel"] == 0);
  CHECK(read_jsonl(tmp / "run" / "rollouts.jsonl").rows.size() == 5 * 6);
  CHECK(read_jsonl(tmp / "run" / "mcq_train.jsonl").rows.size() == 3);

  Manifest m(tmp / "run");
  CHECK(m.status("mine") == "complete");
  CHECK_FALSE(m.recorded_hash(tmp / "run" / "mcq_train.jsonl").empty());
  CHECK(run("replay", cfg) == 0);
}

TEST_CASE("mining is byte-identical across runs and after an interrupted run") {
  TempDir tmp;
  REQUIRE(run("mine", mock_config(tmp / "a")) == 0);
  REQUIRE(run("mine", mock_config(tmp / "b")) == 0);
  CommandOptions lim;
  lim.limit = 2;
  REQUIRE(run("mine", mock_config(tmp / "c"), lim) == 0);
  CHECK(Manifest(tmp / "c").status("mine") == "incomplete");
  CHECK(read_jsonl(tmp / "c" / "rollouts.jsonl").rows.size() == 2 * 6);
  REQUIRE(run("mine", mock_config(tmp / "c")) == 0);
  CHECK(Manifest(tmp / "c").status("mine") == "complete");
  for (const char* f : {"rollouts.jsonl", "mcq_train.jsonl", "mining_report.json"}) {
    CHECK(slurp(tmp / "a" / f) == slurp(tmp / "b" / f));
    CHECK(slurp(tmp / "a" / f) == slurp(tmp / "c" / f));
  }
}

TEST_CASE("tampered outputs are refused") {
  TempDir tmp;
  const auto cfg = mock_config(tmp / "run");
  REQUIRE(run("mine", cfg) == 0);
  {
    std::ofstream f(tmp / "run" / "rollouts.jsonl", std::ios::app);
    f << "{\"image_id\": \"b1\", \"rollout_index\": 99, \"raw_text\": \"x\"}\n";
  }
  CHECK(run("mine", cfg) == 2);
  std::ostringstream out;
  CHECK(cmd_replay(cfg, {}, out) == 1);
  CHECK(out.str().find("hash mismatch: rollouts.jsonl") != std::string::npos);
}

TEST_CASE("inference writes every mode and K and resumes identically") {
  TempDir tmp;
  REQUIRE(run("infer", mock_config(tmp / "a")) == 0);
  CommandOptions lim;
  lim.limit = 3;
  REQUIRE(run("infer", mock_config(tmp / "b"), lim) == 0);
  CHECK(Manifest(tmp / "b").status("infer") == "incomplete");
  REQUIRE(run("infer", mock_config(tmp / "b")) == 0);
  CHECK(Manifest(tmp / "b").status("infer") == "complete");

  std::vector<std::string> files{"infer_rollouts.jsonl", predictions_file_name(InferenceMode::SingleStep, 1)};
  for (int k : {1, 3, 6}) {
    files.push_back(predictions_file_name(InferenceMode::TwoStep, k));
    files.push_back(predictions_file_name(InferenceMode::Consistency, k));
  }
  for (const auto& f : files) {
    INFO(f);
    REQUIRE(fs::exists(tmp / "a" / f));
    CHECK(slurp(tmp / "a" / f) == slurp(tmp / "b" / f));
    CHECK(read_jsonl(tmp / "a" / f).rows.size() == (f == "infer_rollouts.jsonl" ? 8u * 6 : 8u));
  }
  CHECK_FALSE(fs::exists(tmp / "a" / predictions_file_name(InferenceMode::SingleStep, 3)));

  // Rerunning a complete stage leaves every file as it was.
  const auto before = slurp(tmp / "a" / predictions_file_name(InferenceMode::TwoStep, 6));
  REQUIRE(run("infer", mock_config(tmp / "a")) == 0);
  CHECK(slurp(tmp / "a" / predictions_file_name(InferenceMode::TwoStep, 6)) == before);
}

TEST_CASE("judge and report over mock predictions") {
  TempDir tmp;
  auto cfg = mock_config(tmp / "run");
  REQUIRE(run("infer", cfg) == 0);
  cfg.judge.kind = JudgeKind::SubstringStrict;
  REQUIRE(run("judge", cfg) == 0);
  const auto verdicts = read_jsonl(tmp / "run" / "verdicts_predictions_two-step_K6.jsonl").rows;
  CHECK(verdicts.size() == 8);

  std::ostringstream out;
  REQUIRE(cmd_report(cfg, {}, out) == 0);
  const Json rep = Json::parse(slurp(tmp / "run" / "report_predictions_two-step_K6.json"));
  CHECK(rep["overall"]["count"] == 8);
  CHECK(rep["base"]["count"] == 5);
  CHECK(rep["novel"]["count"] == 3);
  CHECK(rep["pass_at_k_curve"].size() == 3);
  CHECK(rep["overall"]["correct"].get<int>() <= rep["overall"]["step1_contains_gt"].get<int>());

  CommandOptions cmp;
  cmp.predictions = tmp / "run" / predictions_file_name(InferenceMode::TwoStep, 6);
  cmp.baseline = tmp / "run" / predictions_file_name(InferenceMode::SingleStep, 1);
  std::ostringstream out2;
  REQUIRE(cmd_report(cfg, cmp, out2) == 0);
  CHECK(out2.str().find("d.acc") != std::string::npos);
}

TEST_CASE("summary tables") {
  TempDir tmp;
  const auto cfg = mock_config(tmp / "run");
  const fs::path summary = tmp / "summary.json";
  write_text_file(summary, R"({"methods": [
    {"name": "X", "datasets": [{"name": "d1", "base": 80, "novel": 60}, {"name": "d2", "base": 70, "novel": 50}]},
    {"name": "Y", "datasets": [{"name": "d1", "base": 70, "novel": 60}, {"name": "d2", "base": 60, "novel": 50}]}],
    "deltas": [["X", "Y"]]})");
  CommandOptions o;
  o.summary = summary;
  std::ostringstream out;
  REQUIRE(cmd_report(cfg, o, out) == 0);
  const Json j = Json::parse(slurp(tmp / "run" / "score_table.json"));
  CHECK(j["methods"][0]["avg_base"] == 75.0);
  CHECK(j["methods"][0]["avg_hm"].get<double>() == doctest::Approx(2 * 75.0 * 55.0 / 130.0));
  CHECK(out.str().find("+10.0") != std::string::npos);

  write_text_file(summary, "{\"methods\": [{\"name\": 1}]}");
  CHECK(run("report", cfg, o) == 2);
}

TEST_CASE("world commands") {
  TempDir tmp;
  auto cfg = small_world_config(tmp / "w");
  REQUIRE(run("mine", cfg) == 0);
  REQUIRE(run("train-sim", cfg) == 0);
  const SimPolicy trained = policy_from_json(Json::parse(slurp(tmp / "w" / "policy.json")));
  CHECK(trained.num_categories == 12);
  CHECK(slurp(tmp / "w" / "curves.csv").rfind("curve,step,value\n", 0) == 0);

  // Same seed, same bytes.
  auto again = small_world_config(tmp / "w2");
  REQUIRE(run("train-sim", again) == 0);
  CHECK(slurp(tmp / "w" / "policy.json") == slurp(tmp / "w2" / "policy.json"));
  CHECK(slurp(tmp / "w" / "train_report.json") == slurp(tmp / "w2" / "train_report.json"));

  // No steps: the checkpoint is the zero-initialized reference.
  auto none = small_world_config(tmp / "w3");
  none.train.steps = 0;
  REQUIRE(run("train-sim", none) == 0);
  const SimPolicy zero = policy_from_json(Json::parse(slurp(tmp / "w3" / "policy.json")));
  CHECK(zero == SimPolicy::zeros(12, cfg.world.observation_dim));

  CommandOptions with_policy;
  with_policy.policy = tmp / "w" / "policy.json";
  REQUIRE(run("infer", cfg, with_policy) == 0);
  CHECK(read_jsonl(tmp / "w" / predictions_file_name(InferenceMode::TwoStep, 10)).rows.size() == 40);
  CHECK(run("report", cfg) == 0);
  CHECK(run("replay", cfg) == 0);
}

TEST_CASE("configuration failures map to exit code 2") {
  TempDir tmp;
  auto cfg = mock_config(tmp / "run");
  cfg.sampling.K = 0;
  CHECK(run("mine", cfg) == 2);
  CHECK(run("no-such-command", mock_config(tmp / "run")) == 2);
  CHECK(run("replay", mock_config(tmp / "empty")) == 2);
  CommandOptions missing;
  missing.predictions = tmp / "nope.jsonl";
  CHECK(run("report", mock_config(tmp / "run"), missing) == 2);
}

TEST_CASE("labels and categories") {
  TempDir tmp;
  write_text_file(tmp / "cats.txt", "Alpha Bird\n\n  Beta Bird  \nGamma Bird\n");
  const auto cats = read_categories(tmp / "cats.txt");
  REQUIRE(cats.size() == 3);
  CHECK(cats[1].raw == "Beta Bird");

  write_text_file(tmp / "labels.jsonl",
                  "{\"image_id\": \"x\", \"category\": \"Alpha Bird\", \"uri\": \"imgs/x.jpg\"}\n"
                  "{\"image_id\": \"y\", \"category\": \"Beta Bird\", \"uri\": \"https://e.org/y.jpg\"}\n"
                  "{\"image_id\": \"z\", \"category\": \"Gamma Bird\"}\n");
  const auto labels = read_labels(tmp / "labels.jsonl");
  REQUIRE(labels.size() == 3);
  CHECK(labels[0].first.source == ImageSource::FilePath);
  CHECK(labels[0].first.uri == (tmp / "imgs" / "x.jpg").string());
  CHECK(labels[1].first.source == ImageSource::Url);
  CHECK(labels[2].second.raw == "Gamma Bird");
}
