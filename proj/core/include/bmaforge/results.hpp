#pragma once

// Output handling for experiment runs. Files are staged in a hidden
// directory and moved into place on success; on failure whatever was
// written goes to `<out>/quarantine/` together with the error.

#include <concepts>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "bmaforge/config.hpp"

namespace bmaforge {

std::string format_double(double v);

inline std::string to_cell(std::string_view v) { return std::string(v); }
inline std::string to_cell(double v) { return format_double(v); }
template <std::integral T>
std::string to_cell(T v) {
  return std::to_string(v);
}

/// Rows of named columns rendered as CSV. Doubles use the shortest
/// representation that round-trips.
class Table {
 public:
  explicit Table(std::vector<std::string> columns) : columns_(std::move(columns)) {}

  template <class... Ts>
  void add(const Ts&... cells) {
    push({to_cell(cells)...});
  }
  /// Throws DimensionError when the cell count differs from the columns.
  void push(std::vector<std::string> cells);

  std::size_t size() const { return rows_.size(); }
  std::string csv() const;

 private:
  std::vector<std::string> columns_;
  std::vector<std::vector<std::string>> rows_;
};

class RunOutput {
 public:
  RunOutput(const ExperimentConfig& config, std::string command);
  ~RunOutput();
  RunOutput(const RunOutput&) = delete;
  RunOutput& operator=(const RunOutput&) = delete;

  /// Path inside the staging directory.
  std::filesystem::path path(const std::string& name) const;
  void write_text(const std::string& name, const std::string& content) const;
  void write_table(const std::string& name, const Table& table) const;
  /// Appends one JSON object per line to `name`.
  void append_jsonl(const std::string& name, const std::string& line);

  /// Moves the staged files into the output directory and writes the
  /// timestamped `run_metadata.json` sidecar.
  void commit(const std::vector<std::pair<std::string, std::string>>& notes = {});
  /// Moves the staged files into `<out>/quarantine/` with `error.txt`.
  void quarantine(const std::string& error) noexcept;

  const std::string& config_hash() const { return hash_; }

 private:
  std::filesystem::path out_;
  std::filesystem::path staging_;
  std::string command_;
  std::string hash_;
  std::string config_text_;
  std::string started_;
  bool done_ = false;
};

/// Runs `fn`, prefixing any library error message with the stage name while
/// keeping its type.
template <class Fn>
auto run_stage(const std::string& stage, Fn&& fn) -> decltype(fn());

}  // namespace bmaforge

#include "bmaforge/error.hpp"

namespace bmaforge {

template <class E>
[[noreturn]] void rethrow_tagged(const std::string& stage, const E& e) {
  throw E(stage + ": " + e.what());
}

template <class Fn>
auto run_stage(const std::string& stage, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const DimensionError& e) {
    rethrow_tagged(stage, e);
  } catch (const ConfigError& e) {
    rethrow_tagged(stage, e);
  } catch (const NumericalError& e) {
    rethrow_tagged(stage, e);
  } catch (const DegenerateError& e) {
    rethrow_tagged(stage, e);
  } catch (const ParseError& e) {
    rethrow_tagged(stage, e);
  } catch (const IoError& e) {
    rethrow_tagged(stage, e);
  }
}

}  // namespace bmaforge
