// xlab: command-line front end for the lab pipeline.

#include <chrono>
#include <cstdio>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "xlab/common/digest.hpp"
#include "xlab/common/random.hpp"
#include "xlab/corpuslab/toyworld.hpp"
#include "xlab/lab/sweep.hpp"

namespace fs = std::filesystem;
using namespace xlab;

namespace {

struct Common {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
};

lab::Log make_log(bool quiet) {
  if (quiet) return {};
  const auto t0 = std::chrono::steady_clock::now();
  return [t0](const std::string& msg) {
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::fprintf(stderr, "[%8.1fs] %s\n", s, msg.c_str());
  };
}

lab::ExperimentConfig read_config(const Common& c) {
  auto config = lab::load_config(c.config);
  if (c.seed) config.seed = *c.seed;
  return config;
}

int run_subcommand(const std::string& sub, const Common& c) {
  const auto config = read_config(c);
  const auto record = lab::execute(sub, config, {c.out, make_log(c.quiet)});
  std::cout << record.to_json().dump(2) << "\n";
  if (!record.ok()) {
    std::cerr << "xlab " << sub << " failed: " << record.error << "\n";
    return 1;
  }
  return 0;
}

// Writes a toy English corpus with entailment and tagging sets, as a starting
// point for file-based configs.
void write_toy(const fs::path& dir, std::size_t docs, std::size_t probe_size, std::uint64_t seed) {
  namespace toy = corpuslab::toy;
  toy::World world;
  const auto en = toy::Language::english(world);
  fs::create_directories(dir);
  corpuslab::write_corpus(dir / "en.txt", toy::render_corpus(en, world.sample_documents(docs, 8, seed)));
  auto entail = [&](std::uint64_t s) {
    std::vector<probes::EntailmentExample> v;
    for (const auto& p : toy::sample_entailment(world, probe_size, s)) {
      v.push_back({en.render(p.premise), en.render(p.hypothesis), p.label, "en", "en"});
    }
    return probes::format_entailment_tsv(v);
  };
  write_file_atomic(dir / "xnli_train.tsv", entail(stage_seed(seed, "xnli-train")));
  write_file_atomic(dir / "xnli_test.tsv", entail(stage_seed(seed, "xnli-test")));
  auto tagged = [&](std::uint64_t s) {
    Rng rng(s);
    std::vector<probes::TaggedSentence> v;
    for (std::size_t i = 0; i < probe_size; ++i) {
      auto [tokens, tags] = en.render_tagged(world.sample(rng), true);
      v.push_back({std::move(tokens), std::move(tags)});
    }
    return probes::format_conll(v);
  };
  write_file_atomic(dir / "ner_train.conll", tagged(stage_seed(seed, "ner-train")));
  write_file_atomic(dir / "ner_test.conll", tagged(stage_seed(seed, "ner-test")));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"xlab: synthetic-language ablations, desk-scale bilingual pretraining and cross-lingual probes"};
  app.require_subcommand(1);

  Common common;
  const std::vector<std::pair<std::string, std::string>> stage_help{
      {"fakeify", "shift a corpus into a disjoint script"},
      {"permute", "swap word pairs within sentences"},
      {"freqgen", "sample a bag-of-words corpus from unigram counts"},
      {"tok-train", "train the tokenizer"},
      {"pretrain", "train the encoder with MLM (and NSP)"},
      {"finetune", "fine-tune the entailment classifier"},
      {"probe-ner", "train CRF taggers on frozen features"},
      {"probe-retrieval", "sentence retrieval between two languages"},
      {"eval-xnli", "entailment accuracy over language combinations"},
      {"run", "tokenizer, pretraining and every configured probe"}};
  std::map<std::string, CLI::App*> stage_apps;
  for (const auto& [name, help] : stage_help) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", common.config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", common.out, "runs root (default $XLAB_RUNS, else ./runs)");
    sub->add_option("--seed", common.seed, "override the master seed");
    sub->add_flag("--quiet", common.quiet, "no progress on stderr");
    stage_apps[name] = sub;
  }

  std::string grid_path;
  auto* sweep = app.add_subcommand("sweep", "run every cell of a grid, skipping completed ones");
  sweep->add_option("--grid", grid_path, "grid file (JSON)")->required()->check(CLI::ExistingFile);
  sweep->add_option("--out", common.out, "runs root (default $XLAB_RUNS, else ./runs)");
  sweep->add_option("--seed", common.seed, "override the master seed of every cell");
  sweep->add_flag("--quiet", common.quiet, "no progress on stderr");

  std::string table = "runs";
  auto* report = app.add_subcommand("report", "merge the ledger and print a TSV table");
  report->add_option("--table", table, "runs, gap[:xnli|:ner] or contribution[:xnli|:ner]");
  report->add_option("--out", common.out, "runs root (default $XLAB_RUNS, else ./runs)");

  auto* hash = app.add_subcommand("hash", "print the config hash");
  hash->add_option("--config", common.config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  hash->add_option("--seed", common.seed, "override the master seed");

  std::size_t toy_docs = 200, toy_probe = 200;
  std::uint64_t toy_seed = 1;
  std::string toy_out;
  auto* toy = app.add_subcommand("toy", "write a toy English corpus plus entailment and tagging sets");
  toy->add_option("--out", toy_out, "output directory")->required();
  toy->add_option("--docs", toy_docs, "documents of 8 sentences");
  toy->add_option("--probe-size", toy_probe, "examples per probe file");
  toy->add_option("--seed", toy_seed, "seed");

  CLI11_PARSE(app, argc, argv);

  try {
    for (const auto& [name, sub] : stage_apps) {
      if (sub->parsed()) return run_subcommand(name, common);
    }
    if (sweep->parsed()) {
      auto grid = lab::load_grid(grid_path);
      if (common.seed) grid.base["seed"] = *common.seed;
      const auto result = lab::sweep(grid, {common.out, make_log(common.quiet)});
      std::printf("%zu run, %zu skipped, %zu failed\n", result.records.size(), result.skipped, result.failed);
      return result.failed ? 1 : 0;
    }
    if (report->parsed()) {
      const lab::Ledger ledger(lab::runs_root(common.out));
      if (fs::exists(ledger.root())) ledger.merge();
      const auto rep = lab::report(ledger.records(), table);
      std::cout << rep.tsv;
      for (const auto& w : rep.warnings) std::cerr << "warning: " << w << "\n";
      return 0;
    }
    if (hash->parsed()) {
      std::cout << lab::config_hash(read_config(common)) << "\n";
      return 0;
    }
    if (toy->parsed()) {
      write_toy(toy_out, toy_docs, toy_probe, toy_seed);
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
