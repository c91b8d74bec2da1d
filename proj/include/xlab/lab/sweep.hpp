#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "xlab/lab/config.hpp"
#include "xlab/lab/ledger.hpp"
#include "xlab/lab/pipeline.hpp"

namespace xlab::lab {

struct GridAxis {
  std::string pointer;  // JSON pointer into the config, e.g. /encoder/depth
  std::vector<json> values;
};

/// {"base": config object or path, "subcommand": "run",
///  "axes": [{"path": "/encoder/depth", "values": [1, 2]}],
///  "exclude": [{"/encoder/depth": 1, ...}]}
/// The grid is the cross product of the axes; no axes means no cells.
struct Grid {
  json base = json::object();
  std::filesystem::path base_dir;
  std::string subcommand = "run";
  std::vector<GridAxis> axes;
  std::vector<json> exclude;  // a cell matching every entry of one object is skipped

  static Grid from_json(const json& j, const std::filesystem::path& base_dir = {});
  /// Cell configs in row-major axis order, exclusions removed. Each cell is
  /// parsed and validated, so a bad axis value fails before any run starts.
  std::vector<ExperimentConfig> cells() const;
};

Grid load_grid(const std::filesystem::path& path);

struct SweepResult {
  std::vector<RunRecord> records;  // runs executed now
  std::size_t skipped = 0;         // already completed by config hash
  std::size_t failed = 0;
};

/// Runs every cell not yet completed in the ledger; failures are recorded and
/// the sweep moves on.
SweepResult sweep(const Grid& grid, const RunOptions& options = {});

struct Report {
  std::string tsv;
  std::vector<std::string> warnings;
};

/// Table names:
///   runs                  one row per config hash (latest record)
///   gap[:xnli|:ner]       per labels.group: source, target, delta
///   contribution[:...]    per labels.group: real, fake, contribution
/// Rows of gap tables take the source score from a record labelled
/// role=source and the target score from role=target; an unlabelled record
/// supplies both from its own source and target metrics.
Report report(const std::vector<RunRecord>& records, std::string_view table);

/// Fixed-point with at most four decimals, trailing zeros dropped.
std::string format_number(double x);

}  // namespace xlab::lab
