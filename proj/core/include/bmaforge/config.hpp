#pragma once

// Experiment configuration: INI-style text with [section] headers and
// `key = value` lines. Comment lines start with `;` or `#`. Lists are
// comma-separated. Keys ending in `_path` name files relative to the config
// file and must exist when the config is loaded.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace bmaforge {

struct ConfigOverrides {
  std::optional<std::uint64_t> seed;         // replaces the seed list
  std::optional<std::filesystem::path> out;  // replaces [run] out
};

class ExperimentConfig {
 public:
  /// Requires [run] experiment and [run] seeds.
  static ExperimentConfig parse(const std::string& text, const std::filesystem::path& base_dir,
                                const ConfigOverrides& overrides = {});
  static ExperimentConfig load(const std::filesystem::path& path, const ConfigOverrides& overrides = {});

  const std::string& experiment() const { return experiment_; }
  const std::vector<std::uint64_t>& seeds() const { return seeds_; }
  const std::filesystem::path& out_dir() const { return out_dir_; }

  bool has(const std::string& key) const;
  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  int get_int(const std::string& key) const;
  int get_int(const std::string& key, int fallback) const;
  double get_double(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_doubles(const std::string& key) const;
  std::vector<double> get_doubles(const std::string& key, std::vector<double> fallback) const;
  std::vector<int> get_ints(const std::string& key) const;
  std::vector<int> get_ints(const std::string& key, std::vector<int> fallback) const;
  /// Comma-separated words, trimmed; empty entries are an error.
  std::vector<std::string> get_strings(const std::string& key, std::vector<std::string> fallback) const;
  /// Absolute path of a `_path` key.
  std::filesystem::path get_path(const std::string& key) const;

  /// Throws ConfigError naming any key that no accessor has read.
  void check_all_used() const;

  /// Sorted `section.key=value` lines, including the effective seeds and
  /// excluding the output directory.
  std::string canonical_text() const;
  /// 16 hex digits of FNV-1a over canonical_text().
  std::string hash() const;

 private:
  const std::string& raw(const std::string& key) const;

  std::string experiment_;
  std::vector<std::uint64_t> seeds_;
  std::filesystem::path out_dir_;
  std::filesystem::path base_dir_;
  std::map<std::string, std::string> values_;  // "section.key" -> value
  mutable std::set<std::string> used_;
};

}  // namespace bmaforge
