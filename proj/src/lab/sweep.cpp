#include "xlab/lab/sweep.hpp"

#include <cstdio>
#include <algorithm>
#include <map>
#include <set>
#include <stdexcept>

#include "xlab/common/digest.hpp"
#include "xlab/corpuslab/ablations.hpp"

namespace xlab::lab {

namespace fs = std::filesystem;

Grid Grid::from_json(const json& j, const fs::path& base_dir) {
  Grid g;
  g.base_dir = base_dir;
  for (const auto& [k, v] : j.items()) {
    if (k != "base" && k != "subcommand" && k != "axes" && k != "exclude") {
      throw std::invalid_argument("grid: unknown key '" + k + "'");
    }
  }
  if (j.contains("base")) {
    const auto& b = j.at("base");
    if (b.is_string()) {
      fs::path p = b.get<std::string>();
      if (p.is_relative()) p = base_dir / p;
      g.base = json::parse(read_file(p));
      g.base_dir = p.parent_path();
    } else if (b.is_object()) {
      g.base = b;
    } else {
      throw std::invalid_argument("grid: base must be a config object or a path");
    }
  }
  g.subcommand = j.value("subcommand", g.subcommand);
  if (j.contains("axes")) {
    for (const auto& a : j.at("axes")) {
      GridAxis axis;
      axis.pointer = a.at("path").get<std::string>();
      if (!a.at("values").is_array()) throw std::invalid_argument("grid: values of " + axis.pointer + " must be a list");
      for (const auto& v : a.at("values")) axis.values.push_back(v);
      g.axes.push_back(std::move(axis));
    }
  }
  if (j.contains("exclude")) {
    for (const auto& e : j.at("exclude")) g.exclude.push_back(e);
  }
  return g;
}

Grid load_grid(const fs::path& path) {
  return Grid::from_json(json::parse(read_file(path)), path.parent_path());
}

std::vector<ExperimentConfig> Grid::cells() const {
  std::vector<ExperimentConfig> out;
  if (axes.empty()) return out;
  for (const auto& a : axes) {
    if (a.values.empty()) return out;
  }
  // Axis labels: the shortest trailing pointer path that is unique, joined with '.'.
  std::vector<std::string> labels(axes.size());
  for (std::size_t depth = 1; depth <= 8; ++depth) {
    std::set<std::string> seen;
    bool unique = true;
    for (std::size_t i = 0; i < axes.size(); ++i) {
      const auto& ptr = axes[i].pointer;
      std::size_t cut = ptr.size();
      for (std::size_t d = 0; d < depth && cut != std::string::npos && cut > 0; ++d) cut = ptr.rfind('/', cut - 1);
      labels[i] = ptr.substr(cut == std::string::npos ? 0 : cut + 1);
      std::replace(labels[i].begin(), labels[i].end(), '/', '.');
      unique = seen.insert(labels[i]).second && unique;
    }
    if (unique) break;
  }
  std::vector<std::size_t> idx(axes.size(), 0);
  while (true) {
    json cell = base;
    std::string suffix;
    json assigned = json::object();
    for (std::size_t i = 0; i < axes.size(); ++i) {
      const auto& v = axes[i].values[idx[i]];
      try {
        cell[json::json_pointer(axes[i].pointer)] = v;
      } catch (const json::exception& e) {
        throw std::invalid_argument("grid: cannot set " + axes[i].pointer + ": " + e.what());
      }
      assigned[axes[i].pointer] = v;
      suffix += (suffix.empty() ? "" : ",") + labels[i] + "=" + v.dump();
    }
    bool excluded = false;
    for (const auto& e : exclude) {
      bool all = true;
      for (const auto& [ptr, v] : e.items()) {
        const json::json_pointer jp(ptr);
        all = all && cell.contains(jp) && cell.at(jp) == v;
      }
      excluded = excluded || all;
    }
    if (!excluded) {
      const std::string name = cell.value("name", std::string{});
      cell["name"] = name.empty() ? suffix : name + " [" + suffix + "]";
      auto config = ExperimentConfig::from_json(cell, base_dir);
      config.validate();
      out.push_back(std::move(config));
    }
    std::size_t k = axes.size();
    while (k > 0) {
      --k;
      if (++idx[k] < axes[k].values.size()) break;
      idx[k] = 0;
      if (k == 0) return out;
    }
  }
}

SweepResult sweep(const Grid& grid, const RunOptions& options) {
  SweepResult result;
  const auto cells = grid.cells();
  const Ledger ledger(runs_root(options.root));
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto& c = cells[i];
    if (ledger.has_completed(config_hash(c), grid.subcommand)) {
      ++result.skipped;
      if (options.log) options.log("cell " + std::to_string(i + 1) + "/" + std::to_string(cells.size()) + " done, skipping");
      continue;
    }
    if (options.log) options.log("cell " + std::to_string(i + 1) + "/" + std::to_string(cells.size()) + ": " + c.name);
    auto r = execute(grid.subcommand, c, options);
    if (!r.ok()) ++result.failed;
    result.records.push_back(std::move(r));
  }
  return result;
}

// ---------------------------------------------------------------------------

std::string format_number(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", x);
  std::string s = buf;
  while (s.back() == '0') s.pop_back();
  if (s.back() == '.') s.pop_back();
  if (s == "-0") s = "0";
  return s;
}

namespace {

std::string cell(const json& metrics, const std::string& key) {
  if (!metrics.contains(key) || !metrics.at(key).is_number()) return "";
  return format_number(metrics.at(key).get<double>());
}

std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "\t" : "") + v[i];
  return s + "\n";
}

struct MetricPair {
  std::string source;
  std::string target;
};

MetricPair metric_keys(std::string_view which) {
  if (which.empty() || which == "xnli") return {"xnli_src_acc", "xnli_acc"};
  if (which == "ner") return {"ner_src_f1_mean", "ner_f1_mean"};
  throw std::invalid_argument("report: unknown metric '" + std::string(which) + "' (expected xnli or ner)");
}

std::string label(const RunRecord& r, const char* key, const std::string& fallback = "") {
  if (r.labels.contains(key) && r.labels.at(key).is_string()) return r.labels.at(key).get<std::string>();
  return fallback;
}

std::optional<double> number(const json& m, const std::string& key) {
  if (m.contains(key) && m.at(key).is_number()) return m.at(key).get<double>();
  return std::nullopt;
}

std::string opt_str(const std::optional<double>& v) { return v ? format_number(*v) : ""; }

}  // namespace

Report report(const std::vector<RunRecord>& records, std::string_view table) {
  Report rep;
  const auto colon = table.find(':');
  const std::string kind(table.substr(0, colon));
  const std::string_view which = colon == std::string_view::npos ? std::string_view{} : table.substr(colon + 1);

  if (kind == "runs") {
    const std::vector<std::string> metric_cols{"top1",     "top3",        "xnli_src_acc", "xnli_acc",
                                               "delta",    "ner_f1_mean", "ner_f1_std",   "mlm_loss_final"};
    std::vector<std::string> header{"name", "config_hash", "subcommand", "seed", "status"};
    header.insert(header.end(), metric_cols.begin(), metric_cols.end());
    rep.tsv = join(header);
    // Latest record per cell, rows in order of first appearance.
    std::vector<std::string> order;
    std::map<std::string, const RunRecord*> latest;
    for (const auto& r : records) {
      const std::string key = r.config_hash + "/" + r.subcommand;
      if (!latest.contains(key)) order.push_back(key);
      latest[key] = &r;
    }
    for (const auto& key : order) {
      const auto& r = *latest[key];
      if (!r.ok()) rep.warnings.push_back("latest run of '" + r.name + "' failed: " + r.error);
      std::vector<std::string> row{r.name, r.config_hash.substr(0, 12), r.subcommand, std::to_string(r.seed), r.status};
      for (const auto& m : metric_cols) row.push_back(r.ok() ? cell(r.metrics, m) : "");
      rep.tsv += join(row);
    }
    return rep;
  }

  if (kind != "gap" && kind != "contribution") {
    throw std::invalid_argument("report: unknown table '" + kind + "' (expected runs, gap or contribution)");
  }
  const auto keys = metric_keys(which);
  const bool gap = kind == "gap";
  const std::string first = gap ? "source" : "real", second = gap ? "target" : "fake";
  rep.tsv = join({"group", first, second, gap ? "delta" : "contribution"});

  std::vector<std::string> order;
  std::map<std::string, std::pair<std::optional<double>, std::optional<double>>> groups;
  for (const auto& r : records) {
    const std::string g = label(r, "group", r.name);
    if (!groups.contains(g)) order.push_back(g), groups[g] = {};
    if (!r.ok()) continue;
    auto& [a, b] = groups[g];
    const std::string role = label(r, gap ? "role" : "variant");
    if (role == first) {
      if (auto v = number(r.metrics, keys.target)) a = v;
    } else if (role == second) {
      if (auto v = number(r.metrics, keys.target)) b = v;
    } else if (gap && role.empty()) {
      if (auto v = number(r.metrics, keys.source)) a = v;
      if (auto v = number(r.metrics, keys.target)) b = v;
    }
  }
  for (const auto& g : order) {
    const auto& [a, b] = groups[g];
    std::optional<double> d;
    if (a && b) {
      d = gap ? probes::cross_lingual_gap(*a, *b).delta : corpuslab::wordpiece_contribution(*a, *b);
    } else {
      rep.warnings.push_back("group '" + g + "' is missing its " + (a ? second : first) + " cell");
    }
    rep.tsv += join({g, opt_str(a), opt_str(b), opt_str(d)});
  }
  return rep;
}

}  // namespace xlab::lab
