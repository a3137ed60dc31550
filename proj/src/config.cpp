#include "divek/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <set>
#include <sstream>

#include "divek/errors.hpp"
#include "divek/response_parser.hpp"

namespace divek {
namespace {

namespace fs = std::filesystem;

[[noreturn]] void fail_at(int line, const std::string& what) {
  throw ConfigError("config line " + std::to_string(line) + ": " + what);
}

struct Cursor {
  std::string_view s;
  std::size_t i = 0;
  int line = 0;

  void skip_ws() {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
  }
  bool done() const { return i >= s.size(); }
  char peek() const { return s[i]; }
};

Json parse_scalar_or_array(Cursor& c);

Json parse_string(Cursor& c) {
  ++c.i;  // opening quote
  std::string out;
  while (!c.done() && c.peek() != '"') {
    char ch = c.s[c.i++];
    if (ch == '\\') {
      if (c.done()) fail_at(c.line, "unterminated escape");
      const char e = c.s[c.i++];
      switch (e) {
        case 'n': out += '\n'; break;
        case 't': out += '\t'; break;
        case '"': out += '"'; break;
        case '\\': out += '\\'; break;
        default: fail_at(c.line, std::string("unsupported escape \\") + e);
      }
    } else {
      out += ch;
    }
  }
  if (c.done()) fail_at(c.line, "unterminated string");
  ++c.i;
  return out;
}

Json parse_number_or_bool(Cursor& c) {
  const std::size_t start = c.i;
  while (!c.done() && c.peek() != ',' && c.peek() != ']' && c.peek() != ' ' && c.peek() != '\t') ++c.i;
  std::string tok(c.s.substr(start, c.i - start));
  if (tok == "true") return true;
  if (tok == "false") return false;
  std::string digits;
  for (char ch : tok) {
    if (ch != '_') digits += ch;
  }
  if (digits.empty()) fail_at(c.line, "missing value");
  const bool is_float = digits.find_first_of(".eE") != std::string::npos ||
                        digits == "inf" || digits == "nan";
  const char* b = digits.data();
  const char* e = b + digits.size();
  if (!is_float) {
    std::int64_t v = 0;
    auto [p, ec] = std::from_chars(b, e, v);
    if (ec == std::errc() && p == e) return v;
    std::uint64_t u = 0;
    auto [p2, ec2] = std::from_chars(b, e, u);
    if (ec2 == std::errc() && p2 == e) return u;
    fail_at(c.line, "bad value '" + tok + "'");
  }
  double v = 0.0;
  auto [p, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || p != e) fail_at(c.line, "bad value '" + tok + "'");
  return v;
}

Json parse_array(Cursor& c) {
  ++c.i;
  Json arr = Json::array();
  c.skip_ws();
  if (!c.done() && c.peek() == ']') {
    ++c.i;
    return arr;
  }
  while (true) {
    c.skip_ws();
    if (c.done()) fail_at(c.line, "unterminated array");
    if (c.peek() == '[') fail_at(c.line, "nested arrays are not supported");
    arr.push_back(parse_scalar_or_array(c));
    c.skip_ws();
    if (c.done()) fail_at(c.line, "unterminated array");
    if (c.peek() == ',') {
      ++c.i;
      c.skip_ws();
      if (!c.done() && c.peek() == ']') {
        ++c.i;
        return arr;
      }
      continue;
    }
    if (c.peek() == ']') {
      ++c.i;
      return arr;
    }
    fail_at(c.line, "expected ',' or ']' in array");
  }
}

Json parse_scalar_or_array(Cursor& c) {
  c.skip_ws();
  if (c.done()) fail_at(c.line, "missing value");
  if (c.peek() == '"') return parse_string(c);
  if (c.peek() == '[') return parse_array(c);
  return parse_number_or_bool(c);
}

std::string strip_comment(std::string_view line) {
  bool in_string = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '\\' && in_string) {
      ++i;
      continue;
    }
    if (line[i] == '"') in_string = !in_string;
    if (line[i] == '#' && !in_string) return std::string(line.substr(0, i));
  }
  return std::string(line);
}

bool valid_key(std::string_view k) {
  return !k.empty() && std::all_of(k.begin(), k.end(), [](unsigned char ch) {
    return std::isalnum(ch) || ch == '_' || ch == '-';
  });
}

}  // namespace

Json parse_toml_subset(std::string_view text) {
  Json root = Json::object();
  Json* table = &root;
  std::istringstream in{std::string(text)};
  std::string raw_line;
  int line_no = 0;
  while (std::getline(in, raw_line)) {
    ++line_no;
    const std::string line = trim(strip_comment(raw_line));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) fail_at(line_no, "bad section header");
      table = &root;
      std::string path = trim(line.substr(1, line.size() - 2));
      std::size_t start = 0;
      while (start <= path.size()) {
        const std::size_t dot = path.find('.', start);
        const std::string part = trim(path.substr(start, dot == std::string::npos ? std::string::npos : dot - start));
        if (!valid_key(part)) fail_at(line_no, "bad section name '" + path + "'");
        Json& next = (*table)[part];
        if (next.is_null()) next = Json::object();
        if (!next.is_object()) fail_at(line_no, "section '" + part + "' clashes with a key");
        table = &next;
        if (dot == std::string::npos) break;
        start = dot + 1;
      }
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) fail_at(line_no, "expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (!valid_key(key)) fail_at(line_no, "bad key '" + key + "'");
    if (table->contains(key)) fail_at(line_no, "duplicate key '" + key + "'");
    Cursor c{line, eq + 1, line_no};
    Json value = parse_scalar_or_array(c);
    c.skip_ws();
    if (!c.done()) fail_at(line_no, "trailing characters after value");
    (*table)[key] = std::move(value);
  }
  return root;
}

std::string_view to_string(JudgeKind k) {
  switch (k) {
    case JudgeKind::Exact: return "exact";
    case JudgeKind::SubstringStrict: return "substring-strict";
    case JudgeKind::SubstringBidirectional: return "substring-bidirectional";
    case JudgeKind::Llm: return "llm";
  }
  return "exact";
}

JudgeKind judge_kind_from_string(std::string_view s) {
  if (s == "exact") return JudgeKind::Exact;
  if (s == "substring-strict") return JudgeKind::SubstringStrict;
  if (s == "substring-bidirectional") return JudgeKind::SubstringBidirectional;
  if (s == "llm") return JudgeKind::Llm;
  throw ConfigError("unknown judge kind: " + std::string(s));
}

namespace {

// Typed access to one config table, rejecting unknown keys.
class Table {
 public:
  Table(const Json& root, std::string name) : name_(std::move(name)) {
    if (name_.empty()) {
      node_ = &root;
    } else if (root.contains(name_)) {
      node_ = &root.at(name_);
      if (!node_->is_object()) throw ConfigError("'" + name_ + "' must be a section");
    }
  }

  void allow(std::initializer_list<const char*> keys) const {
    if (!node_) return;
    std::set<std::string> ok(keys.begin(), keys.end());
    for (const auto& [k, v] : node_->items()) {
      if (name_.empty() && v.is_object()) continue;
      if (!ok.count(k)) throw ConfigError("unknown key '" + qualified(k) + "'");
    }
  }

  template <typename T>
  void get(const char* key, T& out) const {
    if (!node_ || !node_->contains(key)) return;
    const Json& v = node_->at(key);
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ConfigError("");
        out = v.get<bool>();
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw ConfigError("");
        out = v.get<std::string>();
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw ConfigError("");
        out = v.get<T>();
      } else {
        if (!v.is_number_integer()) throw ConfigError("");
        if (v.is_number_unsigned()) {
          out = static_cast<T>(v.get<std::uint64_t>());
        } else {
          const auto i = v.get<std::int64_t>();
          if (std::is_unsigned_v<T> && i < 0) throw ConfigError("");
          out = static_cast<T>(i);
        }
      }
    } catch (const ConfigError&) {
      throw ConfigError("wrong type for '" + qualified(key) + "'");
    }
  }

  const Json* find(const char* key) const {
    if (!node_ || !node_->contains(key)) return nullptr;
    return &node_->at(key);
  }

  std::string qualified(const std::string& key) const { return name_.empty() ? key : name_ + "." + key; }

 private:
  std::string name_;
  const Json* node_ = nullptr;
};

fs::path resolve(const fs::path& base, const std::string& p) {
  if (p.empty()) return {};
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

void read_backend(const Table& t, BackendDescriptor& d, const fs::path& base) {
  std::string kind;
  t.get("kind", kind);
  if (!kind.empty()) d.kind = backend_kind_from_string(kind);
  t.get("endpoint", d.endpoint);
  t.get("model", d.model);
  std::string fixture, world;
  t.get("fixture", fixture);
  t.get("world", world);
  if (!fixture.empty()) d.fixture_path = resolve(base, fixture).string();
  if (!world.empty()) d.world_path = resolve(base, world).string();
  t.get("concurrency", d.concurrency);
  t.get("batch_n", d.batch_n);
  t.get("supports_repetition_penalty", d.supports_repetition_penalty);
  t.get("api_key_env", d.api_key_env);
  long long timeout = d.timeout.count();
  t.get("timeout_s", timeout);
  d.timeout = std::chrono::seconds(timeout);
  t.get("max_attempts", d.retry.max_attempts);
  long long backoff = d.retry.initial_backoff.count();
  t.get("initial_backoff_ms", backoff);
  d.retry.initial_backoff = std::chrono::milliseconds(backoff);
}

}  // namespace

PipelineConfig config_from_json(const Json& tree, const fs::path& base_dir) {
  if (!tree.is_object()) throw ConfigError("config must be a table");
  PipelineConfig c;
  c.raw = tree;

  const std::set<std::string> sections{"dataset", "backend", "judge", "sampling", "mining",
                                       "reward", "grpo", "train", "world", "infer"};
  for (const auto& [k, v] : tree.items()) {
    if (v.is_object() && !sections.count(k)) throw ConfigError("unknown section [" + k + "]");
  }

  const Table top(tree, "");
  top.allow({"seed", "output_dir"});
  top.get("seed", c.seed);
  std::string out = "out";
  top.get("output_dir", out);
  c.output_dir = resolve(base_dir, out);

  const Table dataset(tree, "dataset");
  dataset.allow({"domain_noun", "categories", "labels", "rollouts"});
  dataset.get("domain_noun", c.domain_noun);
  std::string categories, labels, rollouts;
  dataset.get("categories", categories);
  dataset.get("labels", labels);
  dataset.get("rollouts", rollouts);
  c.categories_path = resolve(base_dir, categories);
  c.labels_path = resolve(base_dir, labels);
  c.rollouts_path = resolve(base_dir, rollouts);

  const Table backend(tree, "backend");
  backend.allow({"kind", "endpoint", "model", "fixture", "world", "concurrency", "batch_n",
                 "supports_repetition_penalty", "api_key_env", "timeout_s", "max_attempts",
                 "initial_backoff_ms"});
  read_backend(backend, c.backend, base_dir);

  const Table judge(tree, "judge");
  judge.allow({"kind", "endpoint", "model", "cache", "concurrency", "api_key_env", "timeout_s",
               "max_attempts", "initial_backoff_ms"});
  std::string judge_kind;
  judge.get("kind", judge_kind);
  if (!judge_kind.empty()) c.judge.kind = judge_kind_from_string(judge_kind);
  c.judge.backend.kind = BackendKind::HttpChat;
  c.judge.backend.batch_n = false;
  judge.get("endpoint", c.judge.backend.endpoint);
  judge.get("model", c.judge.backend.model);
  judge.get("api_key_env", c.judge.backend.api_key_env);
  long long jt = c.judge.backend.timeout.count();
  judge.get("timeout_s", jt);
  c.judge.backend.timeout = std::chrono::seconds(jt);
  judge.get("max_attempts", c.judge.backend.retry.max_attempts);
  long long jb = c.judge.backend.retry.initial_backoff.count();
  judge.get("initial_backoff_ms", jb);
  c.judge.backend.retry.initial_backoff = std::chrono::milliseconds(jb);
  judge.get("concurrency", c.judge.concurrency);
  c.judge.backend.concurrency = c.judge.concurrency;
  std::string cache = "judge_cache.jsonl";
  judge.get("cache", cache);
  c.judge.cache_path = fs::path(cache).is_absolute() ? fs::path(cache) : c.output_dir / cache;

  const Table sampling(tree, "sampling");
  sampling.allow({"K", "temperature", "top_p", "max_new_tokens", "repetition_penalty"});
  sampling.get("K", c.sampling.K);
  sampling.get("temperature", c.sampling.temperature);
  sampling.get("top_p", c.sampling.top_p);
  sampling.get("max_new_tokens", c.sampling.max_new_tokens);
  sampling.get("repetition_penalty", c.sampling.repetition_penalty);

  const Table mining(tree, "mining");
  mining.allow({"m"});
  mining.get("m", c.m);

  const Table reward(tree, "reward");
  reward.allow({"lambda_format", "lambda_mcq"});
  reward.get("lambda_format", c.train.reward.lambda_format);
  reward.get("lambda_mcq", c.train.reward.lambda_mcq);

  const Table grpo(tree, "grpo");
  grpo.allow({"delta", "epsilon", "beta"});
  grpo.get("delta", c.train.advantage.delta);
  grpo.get("epsilon", c.train.clip.epsilon);
  grpo.get("beta", c.train.clip.beta);

  const Table train(tree, "train");
  train.allow({"steps", "batch_images", "group_size", "learning_rate", "inner_epochs", "eval_every",
               "eval_images", "pool_images", "policy_temperature"});
  train.get("steps", c.train.steps);
  train.get("batch_images", c.train.batch_images);
  train.get("group_size", c.train.group_size);
  train.get("learning_rate", c.train.learning_rate);
  train.get("inner_epochs", c.train.inner_epochs);
  train.get("eval_every", c.train.eval_every);
  train.get("eval_images", c.train.eval_images);
  train.get("pool_images", c.train.pool_images);
  train.get("policy_temperature", c.train.policy_temperature);

  const Table world(tree, "world");
  world.allow({"num_categories", "observation_dim", "prototype_norm", "noise_scale", "self_prob_min",
               "self_prob_max", "num_confusers", "format_error_rate", "aliases_per_category", "seed",
               "images"});
  world.get("num_categories", c.world.num_categories);
  world.get("observation_dim", c.world.observation_dim);
  world.get("prototype_norm", c.world.prototype_norm);
  world.get("noise_scale", c.world.noise_scale);
  world.get("self_prob_min", c.world.self_prob_min);
  world.get("self_prob_max", c.world.self_prob_max);
  world.get("num_confusers", c.world.num_confusers);
  world.get("format_error_rate", c.world.format_error_rate);
  world.get("aliases_per_category", c.world.aliases_per_category);
  world.get("seed", c.world.seed);
  world.get("images", c.world_images);

  const Table infer(tree, "infer");
  infer.allow({"k_list", "modes"});
  if (const Json* ks = infer.find("k_list")) {
    if (!ks->is_array()) throw ConfigError("infer.k_list must be an array");
    c.k_list.clear();
    for (const auto& k : *ks) {
      if (!k.is_number_integer()) throw ConfigError("infer.k_list entries must be integers");
      c.k_list.push_back(k.get<int>());
    }
  }
  if (const Json* ms = infer.find("modes")) {
    if (!ms->is_array()) throw ConfigError("infer.modes must be an array");
    c.modes.clear();
    for (const auto& m : *ms) {
      if (!m.is_string()) throw ConfigError("infer.modes entries must be strings");
      c.modes.push_back(inference_mode_from_string(m.get<std::string>()));
    }
  }

  c.train.m = c.m;
  c.train.K = c.sampling.K;
  c.train.seed = c.seed;
  return c;
}

PipelineConfig load_config(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError("config file not found: " + path.string());
  PipelineConfig c = config_from_json(parse_toml_subset(read_text_file(path)), path.parent_path());
  c.config_path = path;
  return c;
}

void PipelineConfig::validate() const {
  sampling.validate();
  train.validate();
  if (m < 2 || m > 26) throw ConfigError("mining.m must be in [2, 26]");
  if (k_list.empty()) throw ConfigError("infer.k_list is empty");
  for (int k : k_list) {
    if (k < 1) throw ConfigError("infer.k_list entries must be >= 1");
    if (k > sampling.K) throw ConfigError("infer.k_list entry exceeds sampling.K");
  }
  if (modes.empty()) throw ConfigError("infer.modes is empty");
  if (world_images < 1) throw ConfigError("world.images must be >= 1");
  if (domain_noun.empty()) throw ConfigError("dataset.domain_noun is empty");

  const auto must_exist = [](const fs::path& p, const char* what) {
    if (p.empty()) throw ConfigError(std::string(what) + " is not set");
    if (!fs::exists(p)) throw ConfigError(std::string(what) + " not found: " + p.string());
  };
  if (!rollouts_path.empty()) must_exist(rollouts_path, "dataset.rollouts");
  switch (backend.kind) {
    case BackendKind::ConfusionWorld:
      if (!backend.world_path.empty()) must_exist(backend.world_path, "backend.world");
      break;
    case BackendKind::ScriptedMock:
      must_exist(backend.fixture_path, "backend.fixture");
      [[fallthrough]];
    case BackendKind::HttpChat:
      must_exist(categories_path, "dataset.categories");
      must_exist(labels_path, "dataset.labels");
      break;
  }
  backend.validate();
  if (judge.kind == JudgeKind::Llm) {
    if (judge.backend.endpoint.empty() || judge.backend.model.empty()) {
      throw ConfigError("llm judge needs judge.endpoint and judge.model");
    }
    if (judge.concurrency < 1) throw ConfigError("judge.concurrency must be >= 1");
  }
}

Json to_json(const PipelineConfig& c) {
  Json j;
  j["seed"] = c.seed;
  j["domain_noun"] = c.domain_noun;
  j["backend"] = to_json(c.backend);
  j["judge"] = {{"kind", std::string(to_string(c.judge.kind))},
                {"model", c.judge.backend.model},
                {"endpoint", c.judge.backend.endpoint}};
  j["sampling"] = to_json(c.sampling);
  j["m"] = c.m;
  j["train"] = to_json(c.train);
  Json ks = Json::array();
  for (int k : c.k_list) ks.push_back(k);
  j["k_list"] = std::move(ks);
  Json ms = Json::array();
  for (auto m : c.modes) ms.push_back(std::string(to_string(m)));
  j["modes"] = std::move(ms);
  return j;
}

std::vector<int> parse_k_list(std::string_view text) {
  std::vector<int> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t comma = text.find(',', start);
    const std::string part = trim(text.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    int v = 0;
    auto [p, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
    if (part.empty() || ec != std::errc() || p != part.data() + part.size() || v < 1) {
      throw ConfigError("bad --k-list entry '" + part + "'");
    }
    out.push_back(v);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace divek
