#pragma once

#include <filesystem>
#include <string>

#include "divek/records.hpp"

namespace divek {

/// manifest.json in a run's output directory. One section per command:
///   {status, started_at, finished_at, seed, config, outputs: {file: sha256}, ...}
/// Output files are stored relative to the directory. Timestamps live only
/// here so every other output is reproducible byte for byte.
class Manifest {
 public:
  explicit Manifest(std::filesystem::path dir);

  const std::filesystem::path& dir() const { return dir_; }
  std::filesystem::path path() const { return dir_ / "manifest.json"; }

  Json& section(const std::string& command);
  bool has_section(const std::string& command) const;
  std::string status(const std::string& command) const;

  void begin(const std::string& command, const Json& config_snapshot, std::uint64_t seed);
  void set_status(const std::string& command, const std::string& status);
  // Hashes the file and records it under the command.
  void record_output(const std::string& command, const std::filesystem::path& file);

  // Recorded hash for `file` under any command; empty when none.
  std::string recorded_hash(const std::filesystem::path& file) const;

  // Throws ConfigError when `file` exists, has a recorded hash, and the
  // content no longer matches it.
  void verify_untampered(const std::filesystem::path& file) const;
  // Every recorded output of every command; returns mismatching files.
  std::vector<std::string> verify_all() const;

  void save() const;

 private:
  std::string relative(const std::filesystem::path& file) const;

  std::filesystem::path dir_;
  Json doc_;
};

std::string utc_timestamp();

}  // namespace divek
