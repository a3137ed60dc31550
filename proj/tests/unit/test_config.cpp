#include "divek/config.hpp"
#include "divek/errors.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace divek;
namespace fs = std::filesystem;

namespace {

PipelineConfig from_text(const std::string& text, const fs::path& base = "/base") {
  return config_from_json(parse_toml_subset(text), base);
}

}  // namespace

TEST_CASE("toml subset values") {
  const auto j = parse_toml_subset(R"(
# leading comment
seed = 42
name = "a \"quoted\" #not-a-comment"  # trailing comment
big = 18446744073709551615
neg = -3
ratio = 0.25
sci = 1e-6
flag = true
list = [1, 2, 3,]
empty = []
words = ["x", "y"]
sep = 1_000

[outer.inner]
k = false
)");
  CHECK(j["seed"] == 42);
  CHECK(j["name"] == "a \"quoted\" #not-a-comment");
  CHECK(j["big"].get<std::uint64_t>() == 18446744073709551615ull);
  CHECK(j["neg"] == -3);
  CHECK(j["ratio"] == 0.25);
  CHECK(j["sci"] == 1e-6);
  CHECK(j["flag"] == true);
  CHECK(j["list"] == Json::array({1, 2, 3}));
  CHECK(j["empty"].empty());
  CHECK(j["words"][1] == "y");
  CHECK(j["sep"] == 1000);
  CHECK(j["outer"]["inner"]["k"] == false);
}

TEST_CASE("toml subset errors carry line numbers") {
  const auto fails_on_line = [](const std::string& text, int line) {
    try {
      parse_toml_subset(text);
    } catch (const ConfigError& e) {
      return std::string(e.what()).find("line " + std::to_string(line)) != std::string::npos;
    }
    return false;
  };
  CHECK(fails_on_line("a = 1\na = 2\n", 2));
  CHECK(fails_on_line("a = \"open\n", 1));
  CHECK(fails_on_line("\n\njust words\n", 3));
  CHECK(fails_on_line("x = [[1]]\n", 1));
  CHECK(fails_on_line("x = 1 2\n", 1));
  CHECK(fails_on_line("[bad\n", 1));
  CHECK(fails_on_line("x = nope\n", 1));
  CHECK(fails_on_line("x = \"\\q\"\n", 1));
  CHECK(fails_on_line("a = 1\n[a]\n", 2));
}

TEST_CASE("defaults") {
  const auto c = from_text("");
  CHECK(c.sampling.K == 20);
  CHECK(c.sampling.temperature == 1.0);
  CHECK(c.sampling.top_p == 0.95);
  CHECK(c.sampling.max_new_tokens == 1024);
  CHECK(c.sampling.repetition_penalty == 1.1);
  CHECK(c.m == 5);
  CHECK(c.train.group_size == 4);
  CHECK(c.train.reward.lambda_format == 1.0);
  CHECK(c.train.reward.lambda_mcq == 1.0);
  CHECK(c.train.clip.epsilon == 0.2);
  CHECK(c.train.clip.beta == 0.04);
  CHECK(c.train.advantage.delta == 1e-4);
  CHECK(c.k_list == std::vector<int>{20});
  CHECK(c.modes == std::vector<InferenceMode>{InferenceMode::TwoStep});
  CHECK(c.judge.kind == JudgeKind::Exact);
  CHECK(c.output_dir == fs::path("/base/out"));
  CHECK(c.judge.cache_path == fs::path("/base/out/judge_cache.jsonl"));
}

TEST_CASE("values flow into the pipeline config") {
  const auto c = from_text(R"(
seed = 9
output_dir = "/abs/out"
[dataset]
categories = "cats.txt"
[mining]
m = 4
[sampling]
K = 8
[grpo]
beta = 0.0
[train]
steps = 12
[world]
num_categories = 7
images = 33
[infer]
k_list = [1, 8]
modes = ["consistency", "single-step"]
[judge]
kind = "substring-strict"
cache = "/tmp/c.jsonl"
)");
  CHECK(c.seed == 9);
  CHECK(c.output_dir == fs::path("/abs/out"));
  CHECK(c.categories_path == fs::path("/base/cats.txt"));
  CHECK(c.labels_path.empty());
  CHECK(c.m == 4);
  CHECK(c.train.m == 4);
  CHECK(c.train.K == 8);
  CHECK(c.train.seed == 9);
  CHECK(c.train.clip.beta == 0.0);
  CHECK(c.train.steps == 12);
  CHECK(c.world.num_categories == 7);
  CHECK(c.world_images == 33);
  CHECK(c.k_list == std::vector<int>{1, 8});
  CHECK(c.modes[0] == InferenceMode::Consistency);
  CHECK(c.judge.kind == JudgeKind::SubstringStrict);
  CHECK(c.judge.cache_path == fs::path("/tmp/c.jsonl"));
  CHECK(to_json(c)["k_list"] == Json::array({1, 8}));
}

TEST_CASE("unknown keys, sections and wrong types are rejected") {
  CHECK_THROWS_AS(from_text("sead = 1\n"), ConfigError);
  CHECK_THROWS_AS(from_text("[sampling]\nk = 3\n"), ConfigError);
  CHECK_THROWS_AS(from_text("[samplng]\nK = 3\n"), ConfigError);
  CHECK_THROWS_AS(from_text("[sampling]\nK = \"three\"\n"), ConfigError);
  CHECK_THROWS_AS(from_text("[sampling]\nK = 2.5\n"), ConfigError);
  CHECK_THROWS_AS(from_text("seed = -1\n"), ConfigError);
  CHECK_THROWS_AS(from_text("[infer]\nmodes = [\"three-step\"]\n"), ConfigError);
  CHECK_THROWS_AS(from_text("[judge]\nkind = \"vibes\"\n"), ConfigError);
  CHECK_THROWS_AS(from_text("dataset = 3\n"), ConfigError);
}

TEST_CASE("validation") {
  auto world = from_text("[backend]\nkind = \"confusion-world\"\n");
  CHECK_NOTHROW(world.validate());

  auto c = world;
  c.k_list = {21};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = world;
  c.sampling.K = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = world;
  c.m = 1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = world;
  c.judge.kind = JudgeKind::Llm;
  CHECK_THROWS_AS(c.validate(), ConfigError);

  // Dataset files must exist for non-world backends.
  auto mock = from_text("[backend]\nkind = \"scripted-mock\"\nfixture = \"missing.jsonl\"\n");
  CHECK_THROWS_AS(mock.validate(), ConfigError);

  const auto good = load_config(divek::testing::fixture_dir() / "mock" / "mock.toml");
  CHECK_NOTHROW(good.validate());
  CHECK(good.sampling.K == 6);
  CHECK(good.domain_noun == "bird");
  CHECK(good.labels_path == divek::testing::fixture_dir() / "mock" / "labels.jsonl");
  CHECK_THROWS_AS(load_config("/nonexistent/x.toml"), ConfigError);
}

TEST_CASE("k list parsing") {
  CHECK(parse_k_list("1,2, 5") == std::vector<int>{1, 2, 5});
  CHECK(parse_k_list("20") == std::vector<int>{20});
  CHECK_THROWS_AS(parse_k_list("1,,2"), ConfigError);
  CHECK_THROWS_AS(parse_k_list("0"), ConfigError);
  CHECK_THROWS_AS(parse_k_list("a"), ConfigError);
}
