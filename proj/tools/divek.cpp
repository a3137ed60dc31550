#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "divek/commands.hpp"
#include "divek/config.hpp"
#include "divek/errors.hpp"

int main(int argc, char** argv) {
  CLI::App app{"divek: option mining, GRPO simulation, two-step inference and evaluation"};
  app.require_subcommand(1, 1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string k_list;
  std::string mode;
  std::string predictions;
  std::string baseline;
  std::string summary;
  std::string policy;
  std::optional<int> limit;

  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "pipeline config (TOML)")->required();
    sub->add_option("--seed", seed, "override the config seed");
  };

  auto* mine = app.add_subcommand("mine", "sample rollouts and build the MCQ training set");
  add_common(mine);
  mine->add_option("--limit", limit, "sample at most this many images, then stop");

  auto* train = app.add_subcommand("train-sim", "GRPO training on the synthetic confusion world");
  add_common(train);

  auto* infer = app.add_subcommand("infer", "run inference and write predictions (resumable)");
  add_common(infer);
  infer->add_option("--k-list", k_list, "comma-separated K values, e.g. 1,2,5,10,15,20");
  infer->add_option("--mode", mode, "two-step | single-step | consistency")
      ->check(CLI::IsMember({"two-step", "single-step", "consistency"}));
  infer->add_option("--policy", policy, "trained policy checkpoint for the world backend");
  infer->add_option("--limit", limit, "process at most this many images per stage, then stop");

  auto* judge = app.add_subcommand("judge", "adjudicate predictions with the configured judge");
  add_common(judge);
  judge->add_option("--predictions", predictions, "predictions JSONL (default: all in the output dir)");

  auto* report = app.add_subcommand("report", "accuracy report or published-style score table");
  add_common(report);
  report->add_option("--predictions", predictions, "predictions JSONL");
  report->add_option("--baseline", baseline, "baseline predictions JSONL for delta columns");
  report->add_option("--summary", summary, "score table JSON {methods:[{name, datasets:[{name, base, novel}]}]}");
  report->add_option("--k-list", k_list, "K values for the pass@k curve");

  auto* replay = app.add_subcommand("replay", "verify output hashes and re-mine from the rollout log");
  add_common(replay);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  divek::CommandOptions opts;
  opts.seed = seed;
  opts.limit = limit;
  opts.predictions = predictions;
  opts.baseline = baseline;
  opts.summary = summary;
  opts.policy = policy;
  try {
    if (!k_list.empty()) opts.k_list = divek::parse_k_list(k_list);
    if (!mode.empty()) opts.modes = std::vector{divek::inference_mode_from_string(mode)};
    const divek::PipelineConfig cfg = divek::load_config(config_path);
    return divek::run_command(command, cfg, opts, std::cout, std::cerr);
  } catch (const divek::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }
}
