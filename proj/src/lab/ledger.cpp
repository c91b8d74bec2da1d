#include "xlab/lab/ledger.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <cstdio>
#include <ctime>
#include <set>
#include <stdexcept>

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include "xlab/common/digest.hpp"

#ifndef XLAB_VERSION
#define XLAB_VERSION "0.0.0"
#endif
#ifndef XLAB_GIT_REVISION
#define XLAB_GIT_REVISION "unknown"
#endif

namespace xlab::lab {

namespace fs = std::filesystem;

json RunRecord::to_json() const {
  return {{"run_id", run_id},   {"subcommand", subcommand}, {"config_hash", config_hash},
          {"name", name},       {"labels", labels},         {"seed", seed},
          {"version", version}, {"status", status},         {"error", error},
          {"metrics", metrics}, {"artifacts", artifacts},   {"run_dir", run_dir},
          {"wall_seconds", wall_seconds}};
}

RunRecord RunRecord::from_json(const json& j) {
  RunRecord r;
  r.run_id = j.at("run_id").get<std::string>();
  r.subcommand = j.value("subcommand", "");
  r.config_hash = j.value("config_hash", "");
  r.name = j.value("name", "");
  r.labels = j.value("labels", json::object());
  r.seed = j.value("seed", std::uint64_t{0});
  r.version = j.value("version", "");
  r.status = j.value("status", "ok");
  r.error = j.value("error", "");
  r.metrics = j.value("metrics", json::object());
  r.artifacts = j.value("artifacts", json::object());
  r.run_dir = j.value("run_dir", "");
  r.wall_seconds = j.value("wall_seconds", 0.0);
  return r;
}

std::string version_stamp() { return std::string(XLAB_VERSION) + "+" + XLAB_GIT_REVISION; }

std::string new_run_id(const std::string& config_hash) {
  static std::atomic<unsigned> counter{0};
  const auto now = std::chrono::system_clock::now();
  const auto us = std::chrono::duration_cast<std::chrono::microseconds>(now.time_since_epoch()).count() % 1000000;
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  ::gmtime_r(&t, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y%m%dT%H%M%S", &tm);
  char buf[96];
  std::snprintf(buf, sizeof buf, "%s.%06lld-%s-%d-%u", stamp, static_cast<long long>(us),
                config_hash.substr(0, 12).c_str(), static_cast<int>(::getpid()), counter++);
  return buf;
}

fs::path runs_root(const fs::path& explicit_root) {
  if (!explicit_root.empty()) return explicit_root;
  if (const char* env = std::getenv("XLAB_RUNS"); env && *env) return env;
  return "runs";
}

Ledger::Ledger(fs::path root) : root_(std::move(root)) {}

void Ledger::append(const RunRecord& record) const {
  write_file_atomic(root_ / "records" / (record.run_id + ".json"), record.to_json().dump() + "\n");
}

namespace {

std::vector<RunRecord> read_jsonl(const fs::path& path) {
  std::vector<RunRecord> out;
  if (!fs::exists(path)) return out;
  const std::string text = read_file(path);
  std::size_t pos = 0, line_no = 0;
  while (pos < text.size()) {
    const std::size_t nl = std::min(text.find('\n', pos), text.size());
    const std::string_view line(text.data() + pos, nl - pos);
    ++line_no;
    if (!line.empty()) {
      try {
        out.push_back(RunRecord::from_json(json::parse(line)));
      } catch (const std::exception& e) {
        throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
      }
    }
    pos = nl + 1;
  }
  return out;
}

std::vector<RunRecord> pending(const fs::path& dir) {
  std::vector<RunRecord> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() != ".json") continue;
    out.push_back(RunRecord::from_json(json::parse(read_file(entry.path()))));
  }
  return out;
}

}  // namespace

std::vector<RunRecord> Ledger::records() const {
  auto all = read_jsonl(ledger_path());
  std::set<std::string> seen;
  for (const auto& r : all) seen.insert(r.run_id);
  for (auto& r : pending(root_ / "records")) {
    if (!seen.contains(r.run_id)) seen.insert(r.run_id), all.push_back(std::move(r));
  }
  std::stable_sort(all.begin(), all.end(), [](const RunRecord& a, const RunRecord& b) { return a.run_id < b.run_id; });
  return all;
}

std::size_t Ledger::merge() const {
  fs::create_directories(root_);
  // Serializes concurrent merges; record writers never take this lock.
  const int fd = ::open((root_ / "ledger.lock").c_str(), O_CREAT | O_RDWR, 0644);
  if (fd < 0) throw std::runtime_error("cannot open ledger lock in " + root_.string());
  ::flock(fd, LOCK_EX);
  std::size_t added = 0;
  try {
    const auto existing = read_jsonl(ledger_path());
    std::set<std::string> seen;
    for (const auto& r : existing) seen.insert(r.run_id);
    auto fresh = pending(root_ / "records");
    std::erase_if(fresh, [&](const RunRecord& r) { return seen.contains(r.run_id); });
    std::sort(fresh.begin(), fresh.end(), [](const RunRecord& a, const RunRecord& b) { return a.run_id < b.run_id; });
    if (!fresh.empty()) {
      std::string text = fs::exists(ledger_path()) ? read_file(ledger_path()) : std::string{};
      if (!text.empty() && text.back() != '\n') text += '\n';
      for (const auto& r : fresh) text += r.to_json().dump() + "\n";
      write_file_atomic(ledger_path(), text);
      added = fresh.size();
    }
  } catch (...) {
    ::flock(fd, LOCK_UN);
    ::close(fd);
    throw;
  }
  ::flock(fd, LOCK_UN);
  ::close(fd);
  return added;
}

bool Ledger::has_completed(const std::string& config_hash, const std::string& subcommand) const {
  for (const auto& r : records()) {
    if (r.ok() && r.config_hash == config_hash && r.subcommand == subcommand) return true;
  }
  return false;
}

}  // namespace xlab::lab
