#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

namespace xlab::lab {

using nlohmann::json;

struct RunRecord {
  std::string run_id;  // sorts chronologically
  std::string subcommand;
  std::string config_hash;
  std::string name;
  json labels = json::object();
  std::uint64_t seed = 0;
  std::string version;
  std::string status = "ok";  // "ok" or "failed"
  std::string error;
  json metrics = json::object();
  json artifacts = json::object();  // file name -> sha256
  std::string run_dir;
  double wall_seconds = 0.0;

  bool ok() const { return status == "ok"; }
  json to_json() const;
  static RunRecord from_json(const json& j);
};

/// Build stamp: project version plus the git revision seen at configure time.
std::string version_stamp();

/// `<utc timestamp>-<hash prefix>-<pid>-<counter>`; unique within a process
/// and across concurrent processes.
std::string new_run_id(const std::string& config_hash);

/// Runs root: explicit value, else $XLAB_RUNS, else "runs".
std::filesystem::path runs_root(const std::filesystem::path& explicit_root = {});

/// Every run writes its own records/<run_id>.json by atomic rename, so
/// concurrent writers never interleave. merge() appends records not yet in
/// ledger.jsonl, in run-id order; existing lines are never rewritten.
class Ledger {
 public:
  explicit Ledger(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path ledger_path() const { return root_ / "ledger.jsonl"; }

  void append(const RunRecord& record) const;
  /// Union of ledger.jsonl and pending record files, ordered by run id.
  std::vector<RunRecord> records() const;
  /// Returns the number of lines appended.
  std::size_t merge() const;
  bool has_completed(const std::string& config_hash, const std::string& subcommand) const;

 private:
  std::filesystem::path root_;
};

}  // namespace xlab::lab
