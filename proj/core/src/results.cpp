#include "bmaforge/results.hpp"

#include <chrono>
#include <fstream>

#include <fmt/chrono.h>
#include <fmt/format.h>
#include <json.hpp>

#include "bmaforge/error.hpp"

namespace bmaforge {

namespace fs = std::filesystem;

std::string format_double(double v) { return fmt::format("{}", v); }

void Table::push(std::vector<std::string> cells) {
  if (cells.size() != columns_.size()) {
    throw DimensionError(fmt::format("table row has {} cells for {} columns", cells.size(), columns_.size()));
  }
  rows_.push_back(std::move(cells));
}

std::string Table::csv() const {
  std::string out;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out += ',';
      out += cells[i];
    }
    out += '\n';
  };
  line(columns_);
  for (const auto& r : rows_) line(r);
  return out;
}

namespace {

std::string utc_now() {
  return fmt::format("{:%Y-%m-%dT%H:%M:%SZ}",
                     fmt::gmtime(std::chrono::system_clock::to_time_t(std::chrono::system_clock::now())));
}

void write_file(const fs::path& p, const std::string& content) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw IoError(fmt::format("cannot open {} for writing", p.string()));
  f << content;
  if (!f) throw IoError(fmt::format("failed writing {}", p.string()));
}

void move_contents(const fs::path& from, const fs::path& to) {
  fs::create_directories(to);
  for (const auto& entry : fs::directory_iterator(from)) {
    const fs::path target = to / entry.path().filename();
    if (fs::exists(target)) fs::remove_all(target);
    fs::rename(entry.path(), target);
  }
  fs::remove_all(from);
}

}  // namespace

RunOutput::RunOutput(const ExperimentConfig& config, std::string command)
    : out_(config.out_dir()), staging_(config.out_dir() / ".staging"), command_(std::move(command)),
      hash_(config.hash()), config_text_(config.canonical_text()), started_(utc_now()) {
  std::error_code ec;
  fs::remove_all(staging_, ec);
  fs::create_directories(staging_, ec);
  if (ec) throw IoError(fmt::format("cannot create output directory {}: {}", staging_.string(), ec.message()));
}

RunOutput::~RunOutput() {
  if (!done_) quarantine("run ended without committing its results");
}

fs::path RunOutput::path(const std::string& name) const { return staging_ / name; }

void RunOutput::write_text(const std::string& name, const std::string& content) const {
  fs::create_directories(path(name).parent_path());
  write_file(path(name), content);
}

void RunOutput::write_table(const std::string& name, const Table& table) const {
  write_text(name, table.csv());
}

void RunOutput::append_jsonl(const std::string& name, const std::string& line) {
  std::ofstream f(path(name), std::ios::binary | std::ios::app);
  if (!f) throw IoError(fmt::format("cannot open {} for appending", path(name).string()));
  f << line << '\n';
}

void RunOutput::commit(const std::vector<std::pair<std::string, std::string>>& notes) {
  nlohmann::ordered_json meta;
  meta["command"] = command_;
  meta["config_hash"] = hash_;
  meta["config"] = config_text_;
  meta["started_utc"] = started_;
  meta["finished_utc"] = utc_now();
  for (const auto& [k, v] : notes) meta["notes"][k] = v;
  try {
    fs::remove_all(out_ / "quarantine");
    move_contents(staging_, out_);
    write_file(out_ / "run_metadata.json", meta.dump(2) + "\n");
  } catch (const fs::filesystem_error& e) {
    throw IoError(fmt::format("cannot publish results into {}: {}", out_.string(), e.what()));
  }
  done_ = true;
}

void RunOutput::quarantine(const std::string& error) noexcept {
  done_ = true;
  try {
    const fs::path q = out_ / "quarantine";
    fs::remove_all(q);
    if (fs::exists(staging_)) move_contents(staging_, q);
    fs::create_directories(q);
    write_file(q / "error.txt", fmt::format("{}\n{}\n", utc_now(), error));
  } catch (...) {
    // Nothing sensible left to do; the caller reports the original error.
  }
}

}  // namespace bmaforge
