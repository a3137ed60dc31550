#include "divek/commands.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <mutex>
#include <set>

#include "divek/errors.hpp"
#include "divek/hashing.hpp"
#include "divek/http_chat.hpp"
#include "divek/manifest.hpp"
#include "divek/option_miner.hpp"
#include "divek/parallel.hpp"
#include "divek/prompts.hpp"
#include "divek/sim_trainer.hpp"

namespace divek {

namespace fs = std::filesystem;

namespace {

std::uint64_t run_seed(const PipelineConfig& cfg, const CommandOptions& opts) {
  return opts.seed.value_or(cfg.seed);
}

std::shared_ptr<const ConfusionWorld> load_world(const PipelineConfig& cfg) {
  if (cfg.backend.world_path.empty()) return std::make_shared<const ConfusionWorld>(make_world(cfg.world));
  Json spec;
  try {
    spec = Json::parse(read_text_file(cfg.backend.world_path));
  } catch (const Json::parse_error& e) {
    throw ConfigError("world file " + cfg.backend.world_path + " is not valid JSON: " + e.what());
  }
  auto world = std::make_shared<ConfusionWorld>(world_from_json(spec));
  world->validate();
  return world;
}

ImageSource source_for_uri(const std::string& uri) {
  if (uri.empty()) return ImageSource::SyntheticWorldSample;
  if (uri.rfind("http://", 0) == 0 || uri.rfind("https://", 0) == 0 || uri.rfind("data:", 0) == 0) {
    return ImageSource::Url;
  }
  return ImageSource::FilePath;
}

/// JSONL output that survives interruption: finished rows are appended as
/// they complete and the file is rewritten in sorted order at the end.
class ResumableJsonl {
 public:
  using Key = std::pair<std::string, int>;  // image id, row index within the image

  // Rows for an image are kept only when all `rows_per_image` are present.
  ResumableJsonl(fs::path path, int rows_per_image, const char* index_field = nullptr)
      : path_(std::move(path)), rows_per_image_(rows_per_image), index_field_(index_field) {
    if (!fs::exists(path_)) return;
    std::map<std::string, std::vector<Json>> groups;
    for (auto& row : read_jsonl(path_).rows) {
      if (!row.is_object() || !row.contains("image_id")) continue;
      groups[row["image_id"].get<std::string>()].push_back(std::move(row));
    }
    for (auto& [id, rows] : groups) {
      if (static_cast<int>(rows.size()) != rows_per_image_) continue;
      for (auto& r : rows) rows_.push_back(std::move(r));
      done_.insert(id);
    }
    rewrite();
  }

  bool has(const std::string& image_id) const { return done_.count(image_id) > 0; }

  void append(const std::vector<Json>& rows) {
    std::lock_guard lock(mu_);
    std::ofstream f(path_, std::ios::app | std::ios::binary);
    if (!f) throw ConfigError("cannot append to " + path_.string());
    for (const auto& r : rows) f << r.dump() << '\n';
    f.flush();
    for (const auto& r : rows) rows_.push_back(r);
    if (!rows.empty()) done_.insert(rows.front()["image_id"].get<std::string>());
  }

  // Sorted rewrite via a temporary file.
  void finalize() {
    std::lock_guard lock(mu_);
    rewrite();
  }

  std::vector<Json> rows() const {
    std::lock_guard lock(mu_);
    return rows_;
  }

  const fs::path& path() const { return path_; }

 private:
  void rewrite() {
    std::stable_sort(rows_.begin(), rows_.end(), [&](const Json& a, const Json& b) {
      const auto& ia = a["image_id"].get_ref<const std::string&>();
      const auto& ib = b["image_id"].get_ref<const std::string&>();
      if (ia != ib) return ia < ib;
      if (!index_field_) return false;
      return a[index_field_].get<int>() < b[index_field_].get<int>();
    });
    const fs::path tmp = path_.string() + ".tmp";
    write_jsonl(tmp, rows_);
    fs::rename(tmp, path_);
  }

  fs::path path_;
  int rows_per_image_;
  const char* index_field_;
  mutable std::mutex mu_;
  std::vector<Json> rows_;
  std::set<std::string> done_;
};

std::vector<RolloutRecord> rollouts_from_rows(const std::vector<Json>& rows, const Workspace& ws) {
  std::vector<RolloutRecord> out;
  out.reserve(rows.size());
  for (const auto& row : rows) {
    RolloutRecord r = rollout_from_json(row);
    const auto it = ws.by_id.find(r.image.id);
    if (it != ws.by_id.end()) r.image = it->second;
    out.push_back(std::move(r));
  }
  return out;
}

// Samples K rollouts for every pending image into `log`. Returns false when
// `limit` stopped the stage early.
bool sample_into(ResumableJsonl& log, const Workspace& ws, const std::vector<ImageRef>& images,
                 const QueryPrompt& query, const SamplingParams& base, std::uint64_t seed,
                 int concurrency, std::optional<int> limit) {
  std::vector<ImageRef> pending;
  for (const auto& img : images) {
    if (!log.has(img.id)) pending.push_back(img);
  }
  bool complete = true;
  if (limit && static_cast<int>(pending.size()) > *limit) {
    pending.resize(*limit);
    complete = false;
  }
  parallel_for(pending.size(), concurrency, [&](std::size_t i) {
    SamplingParams params = base;
    params.seed = derive_seed(seed, pending[i].id);
    const auto rollouts = sample_rollouts(*ws.backend, pending[i], query, params);
    std::vector<Json> rows;
    for (const auto& r : rollouts) rows.push_back(rollout_to_json(r));
    log.append(rows);
  });
  return complete;
}

std::vector<PredictionRecord> read_predictions(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError("predictions file not found: " + path.string());
  std::vector<PredictionRecord> out;
  for (const auto& row : read_jsonl(path).rows) out.push_back(prediction_from_json(row));
  return out;
}

void write_json_file(const fs::path& path, const Json& j) { write_text_file(path, j.dump(2) + "\n"); }

}  // namespace

std::vector<CategoryName> read_categories(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read categories file " + path.string());
  std::vector<CategoryName> out;
  std::set<std::string> seen;
  std::string line;
  while (std::getline(in, line)) {
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    CategoryName c = normalize_category(t);
    if (!seen.insert(c.normalized).second) throw ConfigError("duplicate category in " + path.string() + ": " + t);
    out.push_back(std::move(c));
  }
  if (out.empty()) throw ConfigError("categories file is empty: " + path.string());
  return out;
}

std::vector<std::pair<ImageRef, CategoryName>> read_labels(const fs::path& path) {
  const auto contents = read_jsonl(path);
  if (contents.truncated_tail) throw ConfigError("labels file ends with a truncated line: " + path.string());
  std::vector<std::pair<ImageRef, CategoryName>> out;
  std::set<std::string> seen;
  for (const auto& row : contents.rows) {
    try {
      ImageRef img;
      img.id = row.at("image_id").get<std::string>();
      std::string uri = row.value("uri", std::string());
      if (!uri.empty() && source_for_uri(uri) == ImageSource::FilePath && fs::path(uri).is_relative()) {
        uri = (path.parent_path() / uri).string();
      }
      img.source = row.contains("source") ? image_source_from_string(row["source"].get<std::string>())
                                          : source_for_uri(uri);
      img.uri = uri;
      if (!seen.insert(img.id).second) throw ConfigError("duplicate image id in labels: " + img.id);
      out.emplace_back(std::move(img), normalize_category(row.at("category").get<std::string>()));
    } catch (const Json::exception& e) {
      throw ConfigError("malformed labels row in " + path.string() + ": " + e.what());
    }
  }
  return out;
}

Workspace open_workspace(const PipelineConfig& cfg, std::uint64_t seed) {
  Workspace ws;
  std::vector<std::pair<ImageRef, CategoryName>> labeled;
  if (cfg.uses_world()) {
    ws.world = load_world(cfg);
    ws.categories = ws.world->category_names();
    const auto images = draw_images(*ws.world, cfg.world_images, derive_seed(seed, "images"), "img");
    auto backend = std::make_shared<ConfusionWorldBackend>(ws.world, derive_seed(seed, "backend"));
    backend->register_images(images);
    ws.backend = backend;
    for (const auto& s : images) {
      labeled.emplace_back(s.image, normalize_category(ws.world->canonical_name(s.category)));
    }
  } else {
    ws.categories = read_categories(cfg.categories_path);
    labeled = read_labels(cfg.labels_path);
    ws.backend = make_backend(cfg.backend, seed);
  }
  ws.split = split_categories(ws.categories);
  for (auto& [img, label] : labeled) {
    img.split = ws.split.split_of(label);
    if (img.split == Split::Unsplit) {
      throw ConfigError("label '" + label.raw + "' of image " + img.id + " is not in the category list");
    }
    ws.labels[img.id] = label;
    ws.split_map[img.id] = img.split;
    ws.by_id[img.id] = img;
    ws.images.push_back(img);
  }
  std::sort(ws.images.begin(), ws.images.end(), [](const ImageRef& a, const ImageRef& b) { return a.id < b.id; });
  return ws;
}

std::unique_ptr<Adjudicator> make_adjudicator(const PipelineConfig& cfg) {
  switch (cfg.judge.kind) {
    case JudgeKind::Exact: return std::make_unique<ExactAdjudicator>();
    case JudgeKind::SubstringStrict: return std::make_unique<SubstringAdjudicator>(true);
    case JudgeKind::SubstringBidirectional: return std::make_unique<SubstringAdjudicator>(false);
    case JudgeKind::Llm: {
      auto cache = std::make_shared<VerdictCache>();
      cache->load(cfg.judge.cache_path);
      auto client = std::make_shared<ChatClient>(cfg.judge.backend, api_key_from_env(cfg.judge.backend));
      return std::make_unique<LlmJudge>(make_text_completer(client), cfg.judge.backend.model, cache);
    }
  }
  throw ConfigError("unsupported judge kind");
}

std::string predictions_file_name(InferenceMode mode, int K) {
  return "predictions_" + std::string(to_string(mode)) + "_K" + std::to_string(K) + ".jsonl";
}

int cmd_mine(const PipelineConfig& cfg, const CommandOptions& opts, std::ostream& out) {
  cfg.validate();
  const std::uint64_t seed = run_seed(cfg, opts);
  const Workspace ws = open_workspace(cfg, seed);
  fs::create_directories(cfg.output_dir);
  Manifest manifest(cfg.output_dir);
  const bool crashed = manifest.status("mine") == "running";
  const fs::path rollouts_path = cfg.output_dir / "rollouts.jsonl";
  if (!crashed) manifest.verify_untampered(rollouts_path);
  manifest.begin("mine", to_json(cfg), seed);
  manifest.save();

  std::vector<RolloutRecord> log;
  bool complete = true;
  if (!cfg.rollouts_path.empty()) {
    const auto contents = read_jsonl(cfg.rollouts_path);
    log = rollouts_from_rows(contents.rows, ws);
    manifest.section("mine")["rollout_source"] = fs::absolute(cfg.rollouts_path).string();
  } else {
    std::vector<ImageRef> base_images;
    for (const auto& img : ws.images) {
      if (img.split == Split::Base) base_images.push_back(img);
    }
    const QueryPrompt query = render_step1_prompt(ws.split.base, cfg.domain_noun);
    ResumableJsonl sink(rollouts_path, cfg.sampling.K, "rollout_index");
    try {
      complete = sample_into(sink, ws, base_images, query, cfg.sampling, seed, cfg.backend.concurrency, opts.limit);
    } catch (const TransportError&) {
      sink.finalize();
      manifest.record_output("mine", rollouts_path);
      manifest.set_status("mine", "incomplete");
      manifest.save();
      throw;
    }
    sink.finalize();
    manifest.record_output("mine", rollouts_path);
    manifest.section("mine")["rollout_source"] = "rollouts.jsonl";
    log = rollouts_from_rows(sink.rows(), ws);
  }

  // Only base-split images are mined.
  std::vector<RolloutRecord> base_log;
  int skipped_novel = 0;
  std::set<std::string> skipped_ids;
  for (auto& r : log) {
    const auto it = ws.split_map.find(r.image.id);
    if (it != ws.split_map.end() && it->second != Split::Base) {
      skipped_ids.insert(r.image.id);
      continue;
    }
    base_log.push_back(std::move(r));
  }
  skipped_novel = static_cast<int>(skipped_ids.size());

  const MiningOptions mopts{cfg.m, seed, cfg.domain_noun};
  const MiningResult mined = build_training_dataset(base_log, ws.labels, mopts);
  std::vector<Json> rows;
  for (const auto& s : mined.samples) rows.push_back(mcq_to_json(s));
  const fs::path mcq_path = cfg.output_dir / "mcq_train.jsonl";
  write_jsonl(mcq_path, rows);
  Json report = to_json(mined.report);
  report["skipped_novel"] = skipped_novel;
  const fs::path report_path = cfg.output_dir / "mining_report.json";
  write_json_file(report_path, report);

  manifest.record_output("mine", mcq_path);
  manifest.record_output("mine", report_path);
  manifest.section("mine")["mining_report"] = report;
  manifest.set_status("mine", complete ? "complete" : "incomplete");
  manifest.save();

  out << "mined " << mined.report.kept << " samples from " << mined.report.images << " images ("
      << mined.report.filtered_trivial << " trivial, " << mined.report.dropped_unparsable << " unparsable, "
      << mined.report.injected << " with injected ground truth)\n";
  if (!complete) out << "stopped early; rerun to finish sampling\n";
  return 0;
}

int cmd_train_sim(const PipelineConfig& cfg, const CommandOptions& opts, std::ostream& out) {
  cfg.validate();
  const std::uint64_t seed = run_seed(cfg, opts);
  auto world = load_world(cfg);
  TrainConfig tc = cfg.train;
  tc.seed = seed;
  fs::create_directories(cfg.output_dir);
  Manifest manifest(cfg.output_dir);
  manifest.begin("train-sim", to_json(cfg), seed);
  manifest.section("train-sim")["train_config"] = to_json(tc);
  manifest.save();

  const TrainReport report = train_sim(world, tc);
  Json j = to_json(report);
  j["train_config"] = to_json(tc);
  const fs::path report_path = cfg.output_dir / "train_report.json";
  const fs::path curves_path = cfg.output_dir / "curves.csv";
  const fs::path policy_path = cfg.output_dir / "policy.json";
  write_json_file(report_path, j);
  write_text_file(curves_path, curves_csv(report));
  write_json_file(policy_path, policy_to_json(report.final_policy));
  for (const auto& p : {report_path, curves_path, policy_path}) manifest.record_output("train-sim", p);
  manifest.set_status("train-sim", "complete");
  manifest.save();

  char line[160];
  std::snprintf(line, sizeof line, "two-step accuracy %.3f -> %.3f (step-1 ceiling %.3f) over %d steps\n",
                report.eval_curve.front().second, report.eval_curve.back().second, report.step1_ceiling,
                tc.steps);
  out << line;
  return 0;
}

int cmd_infer(const PipelineConfig& cfg, const CommandOptions& opts, std::ostream& out) {
  cfg.validate();
  const std::uint64_t seed = run_seed(cfg, opts);
  const std::vector<int> k_list = opts.k_list.value_or(cfg.k_list);
  const std::vector<InferenceMode> modes = opts.modes.value_or(cfg.modes);
  for (int k : k_list) {
    if (k < 1 || k > cfg.sampling.K) throw ConfigError("K values must lie in [1, sampling.K]");
  }
  const int k_max = *std::max_element(k_list.begin(), k_list.end());
  const Workspace ws = open_workspace(cfg, seed);
  if (!opts.policy.empty()) {
    auto world_backend = std::dynamic_pointer_cast<ConfusionWorldBackend>(ws.backend);
    if (!world_backend) throw ConfigError("--policy only applies to confusion-world backends");
    Json j;
    try {
      j = Json::parse(read_text_file(opts.policy));
    } catch (const Json::parse_error& e) {
      throw ConfigError("policy checkpoint is not valid JSON: " + std::string(e.what()));
    }
    auto policy = std::make_shared<const SimPolicy>(policy_from_json(j));
    if (policy->num_categories != ws.world->num_categories || policy->dim != ws.world->observation_dim) {
      throw ConfigError("policy checkpoint does not fit the world");
    }
    world_backend->set_policy(policy);
  }
  fs::create_directories(cfg.output_dir);
  Manifest manifest(cfg.output_dir);
  const bool crashed = manifest.status("infer") == "running";

  struct Job {
    InferenceMode mode;
    int K;
    fs::path path;
  };
  std::vector<Job> jobs;
  bool needs_rollouts = false;
  for (auto mode : modes) {
    if (mode == InferenceMode::SingleStep) {
      jobs.push_back({mode, 1, cfg.output_dir / predictions_file_name(mode, 1)});
      continue;
    }
    needs_rollouts = true;
    for (int k : k_list) jobs.push_back({mode, k, cfg.output_dir / predictions_file_name(mode, k)});
  }
  const fs::path rollouts_path = cfg.output_dir / "infer_rollouts.jsonl";
  if (!crashed) {
    manifest.verify_untampered(rollouts_path);
    for (const auto& j : jobs) manifest.verify_untampered(j.path);
  }
  manifest.begin("infer", to_json(cfg), seed);
  manifest.section("infer")["k_list"] = k_list;
  if (!opts.policy.empty()) manifest.section("infer")["policy_sha256"] = sha256_file(opts.policy);
  manifest.save();

  InferenceOptions iopts;
  iopts.domain_noun = cfg.domain_noun;
  iopts.category_list = ws.categories;
  iopts.m = cfg.m;
  iopts.params = cfg.sampling;
  iopts.seed = seed;

  bool complete = true;
  std::vector<std::unique_ptr<ResumableJsonl>> sinks;
  const auto finish = [&](const std::string& status) {
    for (auto& s : sinks) {
      s->finalize();
      manifest.record_output("infer", s->path());
    }
    manifest.set_status("infer", status);
    manifest.save();
  };

  try {
    std::map<std::string, std::vector<RolloutRecord>> rollouts;
    if (needs_rollouts) {
      SamplingParams params = cfg.sampling;
      params.K = k_max;
      const QueryPrompt query = render_step1_prompt(ws.categories, cfg.domain_noun);
      sinks.push_back(std::make_unique<ResumableJsonl>(rollouts_path, k_max, "rollout_index"));
      auto& log = *sinks.back();
      complete &= sample_into(log, ws, ws.images, query, params, seed, cfg.backend.concurrency, opts.limit);
      log.finalize();
      rollouts = group_by_image(rollouts_from_rows(log.rows(), ws));
    }

    for (const auto& job : jobs) {
      sinks.push_back(std::make_unique<ResumableJsonl>(job.path, 1));
      auto& sink = *sinks.back();
      std::vector<ImageRef> pending;
      for (const auto& img : ws.images) {
        if (sink.has(img.id)) continue;
        if (job.mode != InferenceMode::SingleStep && !rollouts.count(img.id)) continue;
        pending.push_back(img);
      }
      if (opts.limit && static_cast<int>(pending.size()) > *opts.limit) {
        pending.resize(*opts.limit);
        complete = false;
      }
      InferenceOptions jopts = iopts;
      jopts.K = job.K;
      parallel_for(pending.size(), cfg.backend.concurrency, [&](std::size_t i) {
        const ImageRef& img = pending[i];
        const auto label = ws.labels.find(img.id);
        std::optional<CategoryName> gt;
        if (label != ws.labels.end()) gt = label->second;
        PredictionRecord rec;
        if (job.mode == InferenceMode::SingleStep) {
          InferenceOptions sopts = jopts;
          sopts.params.seed = derive_seed(seed, img.id);
          rec = single_step_infer(*ws.backend, img, sopts);
        } else {
          const auto& all = rollouts.at(img.id);
          const std::span<const RolloutRecord> prefix(all.data(), static_cast<std::size_t>(job.K));
          if (job.mode == InferenceMode::TwoStep) {
            rec = two_step_from_rollouts(*ws.backend, img, prefix, jopts, gt);
          } else {
            rec = consistency_record(img, prefix, gt);
          }
        }
        sink.append({prediction_to_json(rec)});
      });
      sink.finalize();
      const auto n = sink.rows().size();
      out << job.path.filename().string() << ": " << n << " predictions\n";
    }
  } catch (const TransportError&) {
    finish("incomplete");
    throw;
  }
  finish(complete ? "complete" : "incomplete");
  if (!complete) out << "stopped early; rerun to resume\n";
  return 0;
}

int cmd_judge(const PipelineConfig& cfg, const CommandOptions& opts, std::ostream& out) {
  cfg.validate();
  const std::uint64_t seed = run_seed(cfg, opts);
  const Workspace ws = open_workspace(cfg, seed);
  std::vector<fs::path> files;
  if (!opts.predictions.empty()) {
    files.push_back(opts.predictions);
  } else if (fs::exists(cfg.output_dir)) {
    for (const auto& e : fs::directory_iterator(cfg.output_dir)) {
      const auto name = e.path().filename().string();
      if (name.rfind("predictions_", 0) == 0 && e.path().extension() == ".jsonl") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
  }
  if (files.empty()) throw ConfigError("no predictions to judge");

  auto adjudicator = make_adjudicator(cfg);
  auto* llm = dynamic_cast<LlmJudge*>(adjudicator.get());
  Manifest manifest(cfg.output_dir);
  manifest.begin("judge", to_json(cfg), seed);
  for (const auto& file : files) {
    const auto preds = read_predictions(file);
    std::vector<std::pair<CategoryName, std::optional<CategoryName>>> pairs;
    std::vector<std::string> ids;
    for (const auto& p : preds) {
      const auto label = ws.labels.find(p.image.id);
      if (label == ws.labels.end()) continue;
      pairs.emplace_back(label->second, p.final_category);
      ids.push_back(p.image.id);
    }
    std::vector<JudgeVerdict> verdicts;
    if (llm) {
      verdicts = llm->adjudicate_all(pairs, cfg.judge.concurrency);
    } else {
      for (const auto& [gt, pred] : pairs) verdicts.push_back(adjudicator->adjudicate(gt, pred));
    }
    std::vector<Json> rows;
    int correct = 0;
    for (std::size_t i = 0; i < verdicts.size(); ++i) {
      const auto& v = verdicts[i];
      correct += v.verdict;
      Json j;
      j["image_id"] = ids[i];
      j["gt"] = v.gt.raw;
      j["pred"] = pairs[i].second ? Json(v.pred.raw) : Json(nullptr);
      j["verdict"] = v.verdict;
      j["source"] = std::string(to_string(v.source));
      j["explanation"] = v.explanation;
      rows.push_back(std::move(j));
    }
    const fs::path verdict_path = cfg.output_dir / ("verdicts_" + file.stem().string() + ".jsonl");
    write_jsonl(verdict_path, rows);
    manifest.record_output("judge", verdict_path);
    out << file.filename().string() << ": " << correct << "/" << verdicts.size() << " judged correct\n";
  }
  if (llm) {
    llm->cache().save(cfg.judge.cache_path);
    manifest.section("judge")["judge_calls"] = llm->calls();
    manifest.section("judge")["judge_failures"] = llm->failures();
    out << "judge calls: " << llm->calls() << ", failures: " << llm->failures() << "\n";
  }
  manifest.set_status("judge", "complete");
  manifest.save();
  return 0;
}

namespace {

int report_summary(const PipelineConfig& cfg, const CommandOptions& opts, std::ostream& out) {
  Json table;
  try {
    table = Json::parse(read_text_file(opts.summary));
  } catch (const Json::parse_error& e) {
    throw ConfigError("summary table is not valid JSON: " + std::string(e.what()));
  }
  std::vector<ScoreRow> rows;
  std::vector<std::pair<std::string, std::string>> deltas;
  Json out_json;
  try {
    for (const auto& m : table.at("methods")) {
      MethodScores ms;
      ms.method = m.at("name").get<std::string>();
      for (const auto& d : m.at("datasets")) {
        ms.datasets.push_back({d.at("name").get<std::string>(), d.at("base").get<double>(), d.at("novel").get<double>()});
      }
      rows.push_back(score_row(ms));
      out_json["methods"].push_back(
          {{"name", ms.method}, {"avg_base", rows.back().average[0]}, {"avg_novel", rows.back().average[1]},
           {"avg_hm", rows.back().average[2]}});
    }
    if (table.contains("deltas")) {
      for (const auto& d : table["deltas"]) deltas.emplace_back(d.at(0).get<std::string>(), d.at(1).get<std::string>());
    }
  } catch (const Json::exception& e) {
    throw ConfigError("malformed summary table: " + std::string(e.what()));
  }
  const std::string text = format_score_table(rows, deltas);
  fs::create_directories(cfg.output_dir);
  write_text_file(cfg.output_dir / "score_table.txt", text);
  write_json_file(cfg.output_dir / "score_table.json", out_json);
  out << text;
  return 0;
}

}  // namespace

int cmd_report(const PipelineConfig& cfg, const CommandOptions& opts, std::ostream& out) {
  if (!opts.summary.empty()) return report_summary(cfg, opts, out);
  cfg.validate();
  const std::uint64_t seed = run_seed(cfg, opts);
  const Workspace ws = open_workspace(cfg, seed);
  const std::vector<int> k_list = opts.k_list.value_or(cfg.k_list);
  fs::path pred_path = opts.predictions;
  if (pred_path.empty()) {
    pred_path = cfg.output_dir / predictions_file_name(InferenceMode::TwoStep,
                                                       *std::max_element(k_list.begin(), k_list.end()));
  }
  const auto preds = read_predictions(pred_path);
  for (const auto& p : preds) {
    if (ws.labels.count(p.image.id) && !ws.split_map.count(p.image.id)) {
      throw ConfigError("image " + p.image.id + " has a label but no split");
    }
  }

  auto adjudicator = make_adjudicator(cfg);
  auto* llm = dynamic_cast<LlmJudge*>(adjudicator.get());
  const auto warm = [&](const std::vector<PredictionRecord>& records) {
    if (!llm) return;
    std::vector<std::pair<CategoryName, std::optional<CategoryName>>> pairs;
    for (const auto& p : records) {
      const auto label = ws.labels.find(p.image.id);
      if (label != ws.labels.end()) pairs.emplace_back(label->second, p.final_category);
    }
    llm->adjudicate_all(pairs, cfg.judge.concurrency);
  };
  warm(preds);
  EvalReport report = accuracy_report(preds, ws.labels, ws.split_map, *adjudicator);

  const fs::path rollouts_path = cfg.output_dir / "infer_rollouts.jsonl";
  if (fs::exists(rollouts_path)) {
    const auto rows = read_jsonl(rollouts_path).rows;
    std::vector<RolloutRecord> log;
    for (const auto& r : rows) log.push_back(rollout_from_json(r));
    report.pass_at_k_curve = pass_at_k_curve(group_by_image(log), ws.labels, k_list);
  }

  std::optional<EvalReport> baseline;
  if (!opts.baseline.empty()) {
    const auto base_preds = read_predictions(opts.baseline);
    warm(base_preds);
    baseline = accuracy_report(base_preds, ws.labels, ws.split_map, *adjudicator);
  }

  const std::string stem = pred_path.stem().string();
  Json j = to_json(report);
  j["predictions"] = pred_path.filename().string();
  if (baseline) {
    j["baseline"] = to_json(*baseline);
    j["baseline_predictions"] = opts.baseline.filename().string();
  }
  const std::string text = format_eval_report(report, stem, baseline ? &*baseline : nullptr);
  fs::create_directories(cfg.output_dir);
  write_json_file(cfg.output_dir / ("report_" + stem + ".json"), j);
  write_text_file(cfg.output_dir / ("report_" + stem + ".txt"), text);
  if (llm) llm->cache().save(cfg.judge.cache_path);
  out << text;
  if (report.hm_degenerate) out << "warning: one split is empty; H is the other split's accuracy\n";
  if (llm) out << "judge calls: " << llm->calls() << "\n";
  return 0;
}

int cmd_replay(const PipelineConfig& cfg, const CommandOptions& opts, std::ostream& out) {
  cfg.validate();
  Manifest manifest(cfg.output_dir);
  if (!fs::exists(manifest.path())) throw ConfigError("no manifest in " + cfg.output_dir.string());
  int problems = 0;
  for (const auto& bad : manifest.verify_all()) {
    out << "hash mismatch: " << bad << "\n";
    ++problems;
  }
  // Re-mining tampered inputs proves nothing, so it only runs on a clean tree.
  if (problems == 0 && manifest.has_section("mine")) {
    const Json& s = manifest.section("mine");
    const std::uint64_t seed = opts.seed.value_or(s.at("seed").get<std::uint64_t>());
    const Workspace ws = open_workspace(cfg, seed);
    std::string src = s.value("rollout_source", std::string("rollouts.jsonl"));
    fs::path src_path = fs::path(src).is_absolute() ? fs::path(src) : cfg.output_dir / src;
    std::vector<RolloutRecord> base_log;
    for (auto& r : rollouts_from_rows(read_jsonl(src_path).rows, ws)) {
      const auto it = ws.split_map.find(r.image.id);
      if (it != ws.split_map.end() && it->second != Split::Base) continue;
      base_log.push_back(std::move(r));
    }
    const MiningResult mined = build_training_dataset(base_log, ws.labels, {cfg.m, seed, cfg.domain_noun});
    std::vector<Json> rows;
    for (const auto& sample : mined.samples) rows.push_back(mcq_to_json(sample));
    const fs::path mcq_path = cfg.output_dir / "mcq_train.jsonl";
    if (!fs::exists(mcq_path) || read_text_file(mcq_path) != to_jsonl(rows)) {
      out << "re-mined dataset differs from mcq_train.jsonl\n";
      ++problems;
    } else {
      out << "re-mined " << mined.samples.size() << " samples: identical\n";
    }
  }
  out << (problems ? "replay FAILED\n" : "replay ok\n");
  return problems ? 1 : 0;
}

int run_command(const std::string& name, const PipelineConfig& cfg, const CommandOptions& opts,
                std::ostream& out, std::ostream& err) {
  try {
    if (name == "mine") return cmd_mine(cfg, opts, out);
    if (name == "train-sim") return cmd_train_sim(cfg, opts, out);
    if (name == "infer") return cmd_infer(cfg, opts, out);
    if (name == "judge") return cmd_judge(cfg, opts, out);
    if (name == "report") return cmd_report(cfg, opts, out);
    if (name == "replay") return cmd_replay(cfg, opts, out);
    err << "unknown command: " << name << "\n";
    return 2;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const PreconditionError& e) {
    err << "invalid input: " << e.what() << "\n";
    return 2;
  } catch (const TransportError& e) {
    err << "transport error: " << e.what() << "\n";
    return 3;
  } catch (const Json::exception& e) {
    err << "malformed input: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace divek
