#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "xlab/corpuslab/toyworld.hpp"
#include "xlab/lab/config.hpp"
#include "xlab/lab/ledger.hpp"

namespace xlab::lab {

using Log = std::function<void(const std::string&)>;

/// Lazily computed stages of one experiment. Each stage runs at most once and
/// writes its artifacts into the run directory.
class Pipeline {
 public:
  Pipeline(ExperimentConfig config, std::filesystem::path run_dir, Log log = {});

  const ExperimentConfig& config() const { return config_; }
  const std::filesystem::path& run_dir() const { return run_dir_; }
  json& metrics() { return metrics_; }
  json& artifacts() { return artifacts_; }

  /// Ablated corpora before word-order permutation: the tokenizer's input.
  const std::vector<pretrain::LanguageCorpus>& base_corpora();
  /// What pretraining sees, permutation included.
  const std::vector<pretrain::LanguageCorpus>& pretraining_corpora();
  const tokenizers::Tokenizer& tokenizer();
  probes::Model& model();
  probes::EntailmentClassifier& classifier();

  /// Probe text of a toy language: its base rendering, fake script applied,
  /// never permuted or frequency-sampled.
  std::string render(const std::string& code, const corpuslab::toy::Proposition& p) const;
  probes::TaggedSentence render_tagged(const std::string& code, const corpuslab::toy::Proposition& p,
                                       bool surnames) const;

  void run_tokenizer_stage();
  void run_pretrain_stage();
  void run_finetune_stage();
  void run_xnli();
  void run_ner();
  void run_retrieval();
  /// Tokenizer, pretraining and every configured probe.
  void run_all();

  /// Corpus transforms on config.transform.input; output is corpus.txt.
  void run_fakeify();
  void run_permute();
  void run_freqgen();

 private:
  const corpuslab::toy::Language& toy_language(const std::string& code) const;
  void record_artifact(const std::string& file);
  void log(const std::string& msg) const;

  ExperimentConfig config_;
  std::filesystem::path run_dir_;
  Log log_;
  corpuslab::toy::World world_;
  std::map<std::string, corpuslab::toy::Language> toy_langs_;
  json metrics_ = json::object();
  json artifacts_ = json::object();
  std::optional<std::vector<pretrain::LanguageCorpus>> base_;
  std::optional<std::vector<pretrain::LanguageCorpus>> permuted_;
  std::optional<tokenizers::Tokenizer> tokenizer_;
  std::optional<probes::Model> model_;
  std::optional<probes::EntailmentClassifier> classifier_;
};

/// Every tensor of the checkpoint, including ones beyond the encoder (such as
/// a classifier head), on the checkpoint's own encoder config.
probes::Model load_model(const std::filesystem::path& path);

const std::vector<std::string>& subcommands();

struct RunOptions {
  std::filesystem::path root;  // empty: runs_root()
  Log log;
};

/// Validates, creates <root>/<run_id>/, runs the subcommand and appends one
/// RunRecord. A failure leaves a FAILED marker in the run directory and a
/// failed record; it does not throw unless validation fails first.
RunRecord execute(const std::string& subcommand, const ExperimentConfig& config, const RunOptions& options = {});

}  // namespace xlab::lab
