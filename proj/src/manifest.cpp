#include "divek/manifest.hpp"

#include <chrono>
#include <ctime>

#include "divek/errors.hpp"
#include "divek/hashing.hpp"

namespace divek {

namespace fs = std::filesystem;

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

Manifest::Manifest(fs::path dir) : dir_(std::move(dir)) {
  doc_ = Json::object();
  if (fs::exists(path())) {
    try {
      doc_ = Json::parse(read_text_file(path()));
    } catch (const Json::parse_error& e) {
      throw ConfigError("manifest " + path().string() + " is corrupt: " + e.what());
    }
  }
  if (!doc_.contains("commands")) doc_["commands"] = Json::object();
}

Json& Manifest::section(const std::string& command) { return doc_["commands"][command]; }

bool Manifest::has_section(const std::string& command) const { return doc_["commands"].contains(command); }

std::string Manifest::status(const std::string& command) const {
  if (!has_section(command)) return "";
  return doc_["commands"][command].value("status", std::string());
}

void Manifest::begin(const std::string& command, const Json& config_snapshot, std::uint64_t seed) {
  Json& s = section(command);
  Json outputs = s.is_object() && s.contains("outputs") ? s["outputs"] : Json::object();
  s = Json::object();
  s["status"] = "running";
  s["started_at"] = utc_timestamp();
  s["seed"] = seed;
  s["config"] = config_snapshot;
  s["outputs"] = std::move(outputs);
}

void Manifest::set_status(const std::string& command, const std::string& status) {
  Json& s = section(command);
  s["status"] = status;
  if (status != "running") s["finished_at"] = utc_timestamp();
}

std::string Manifest::relative(const fs::path& file) const {
  return fs::proximate(file, dir_).generic_string();
}

void Manifest::record_output(const std::string& command, const fs::path& file) {
  section(command)["outputs"][relative(file)] = sha256_file(file);
}

std::string Manifest::recorded_hash(const fs::path& file) const {
  const std::string rel = relative(file);
  for (const auto& [cmd, s] : doc_["commands"].items()) {
    if (s.contains("outputs") && s["outputs"].contains(rel)) return s["outputs"][rel].get<std::string>();
  }
  return "";
}

void Manifest::verify_untampered(const fs::path& file) const {
  if (!fs::exists(file)) return;
  const std::string expected = recorded_hash(file);
  if (expected.empty()) return;
  if (sha256_file(file) != expected) {
    throw ConfigError("output file " + file.string() + " does not match its manifest hash (modified outside a run?)");
  }
}

std::vector<std::string> Manifest::verify_all() const {
  std::vector<std::string> bad;
  for (const auto& [cmd, s] : doc_["commands"].items()) {
    if (!s.contains("outputs")) continue;
    for (const auto& [rel, hash] : s["outputs"].items()) {
      const fs::path p = dir_ / rel;
      if (!fs::exists(p) || sha256_file(p) != hash.get<std::string>()) bad.push_back(rel);
    }
  }
  return bad;
}

void Manifest::save() const { write_text_file(path(), doc_.dump(2) + "\n"); }

}  // namespace divek
