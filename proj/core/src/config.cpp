#include "bmaforge/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include <boost/algorithm/string.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

#include "bmaforge/error.hpp"

namespace bmaforge {

namespace {

template <class T>
T parse_number(const std::string& key, std::string s) {
  boost::algorithm::trim(s);
  T v{};
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size() || s.empty()) {
    throw ConfigError(fmt::format("{}: cannot parse '{}' as a number", key, s));
  }
  return v;
}

template <class T>
std::vector<T> parse_list(const std::string& key, const std::string& s) {
  std::vector<std::string> parts;
  boost::algorithm::split(parts, s, boost::algorithm::is_any_of(","));
  std::vector<T> out;
  for (auto& p : parts) out.push_back(parse_number<T>(key, p));
  return out;
}

}  // namespace

ExperimentConfig ExperimentConfig::parse(const std::string& text, const std::filesystem::path& base_dir,
                                         const ConfigOverrides& overrides) {
  boost::property_tree::ptree tree;
  std::istringstream in(text);
  try {
    boost::property_tree::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(fmt::format("config syntax error: {}", e.message()));
  }
  ExperimentConfig cfg;
  cfg.base_dir_ = std::filesystem::absolute(base_dir);
  for (const auto& [section, body] : tree) {
    if (!body.data().empty()) throw ConfigError(fmt::format("'{}' is outside any section", section));
    for (const auto& [key, value] : body) {
      cfg.values_[section + "." + key] = boost::algorithm::trim_copy(value.data());
    }
  }

  cfg.experiment_ = cfg.get_string("run.experiment");
  if (overrides.seed) {
    cfg.seeds_ = {*overrides.seed};
    cfg.used_.insert("run.seeds");
  } else {
    for (long long s : parse_list<long long>("run.seeds", cfg.get_string("run.seeds"))) {
      if (s < 0) throw ConfigError("seeds must be non-negative");
      cfg.seeds_.push_back(static_cast<std::uint64_t>(s));
    }
  }
  if (cfg.seeds_.empty()) throw ConfigError("run.seeds must not be empty");
  if (overrides.out) {
    cfg.out_dir_ = std::filesystem::absolute(*overrides.out);
    cfg.used_.insert("run.out");
  } else {
    cfg.out_dir_ = cfg.base_dir_ / cfg.get_string("run.out", "results/" + cfg.experiment_);
  }

  for (const auto& [key, value] : cfg.values_) {
    if (key.size() > 5 && key.ends_with("_path")) {
      const std::filesystem::path p = cfg.base_dir_ / value;
      if (!std::filesystem::exists(p)) {
        throw ConfigError(fmt::format("{}: file '{}' does not exist", key, p.string()));
      }
    }
  }
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path, const ConfigOverrides& overrides) {
  std::ifstream f(path);
  if (!f) throw IoError(fmt::format("cannot open config {}", path.string()));
  std::stringstream buf;
  buf << f.rdbuf();
  return parse(buf.str(), std::filesystem::absolute(path).parent_path(), overrides);
}

bool ExperimentConfig::has(const std::string& key) const { return values_.contains(key); }

const std::string& ExperimentConfig::raw(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError(fmt::format("missing config key {}", key));
  used_.insert(key);
  return it->second;
}

std::string ExperimentConfig::get_string(const std::string& key) const { return raw(key); }
std::string ExperimentConfig::get_string(const std::string& key, const std::string& fallback) const {
  return has(key) ? raw(key) : fallback;
}
int ExperimentConfig::get_int(const std::string& key) const { return parse_number<int>(key, raw(key)); }
int ExperimentConfig::get_int(const std::string& key, int fallback) const {
  return has(key) ? get_int(key) : fallback;
}
double ExperimentConfig::get_double(const std::string& key) const {
  return parse_number<double>(key, raw(key));
}
double ExperimentConfig::get_double(const std::string& key, double fallback) const {
  return has(key) ? get_double(key) : fallback;
}
bool ExperimentConfig::get_bool(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const std::string v = boost::algorithm::to_lower_copy(raw(key));
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(fmt::format("{}: expected a boolean, got '{}'", key, v));
}
std::vector<double> ExperimentConfig::get_doubles(const std::string& key) const {
  return parse_list<double>(key, raw(key));
}
std::vector<double> ExperimentConfig::get_doubles(const std::string& key, std::vector<double> fallback) const {
  return has(key) ? get_doubles(key) : fallback;
}
std::vector<int> ExperimentConfig::get_ints(const std::string& key) const {
  return parse_list<int>(key, raw(key));
}
std::vector<int> ExperimentConfig::get_ints(const std::string& key, std::vector<int> fallback) const {
  return has(key) ? get_ints(key) : fallback;
}
std::vector<std::string> ExperimentConfig::get_strings(const std::string& key,
                                                      std::vector<std::string> fallback) const {
  if (!has(key)) return fallback;
  std::vector<std::string> parts;
  boost::algorithm::split(parts, raw(key), boost::algorithm::is_any_of(","));
  for (auto& p : parts) {
    boost::algorithm::trim(p);
    if (p.empty()) throw ConfigError(fmt::format("{}: empty list entry", key));
  }
  return parts;
}

std::filesystem::path ExperimentConfig::get_path(const std::string& key) const {
  if (!key.ends_with("_path")) throw ConfigError(fmt::format("{} is not a path key", key));
  return (base_dir_ / raw(key)).lexically_normal();
}

void ExperimentConfig::check_all_used() const {
  std::vector<std::string> unused;
  for (const auto& [key, value] : values_) {
    if (!used_.contains(key)) unused.push_back(key);
  }
  if (!unused.empty()) {
    throw ConfigError(fmt::format("unknown config keys: {}", boost::algorithm::join(unused, ", ")));
  }
}

std::string ExperimentConfig::canonical_text() const {
  std::string out;
  for (const auto& [key, value] : values_) {
    if (key == "run.out" || key == "run.seeds") continue;
    out += key + "=" + value + "\n";
  }
  out += "run.seeds=";
  for (std::size_t i = 0; i < seeds_.size(); ++i) out += (i ? "," : "") + std::to_string(seeds_[i]);
  out += "\n";
  return out;
}

std::string ExperimentConfig::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : canonical_text()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return fmt::format("{:016x}", h);
}

}  // namespace bmaforge
