#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "xlab/encoder/encoder.hpp"
#include "xlab/pretrain/pretrain.hpp"
#include "xlab/probes/probes.hpp"
#include "xlab/tokenizers/tokenizer.hpp"

namespace xlab::lab {

using nlohmann::json;

/// Corpus rendered from the built-in toy world.
struct ToySource {
  std::string language = "english";  // "english" or "pseudo"
  std::uint64_t language_seed = 0;   // lexicon seed for pseudo languages
  bool adjective_after_noun = true;  // pseudo only
  bool verb_final = false;           // pseudo only
  std::size_t docs = 1000;
  std::size_t doc_len = 8;
  std::uint64_t seed = 1;
};

/// One pretraining language. Ablations apply in the order frequency-only,
/// fake script, permutation.
struct LanguageSpec {
  std::string code;
  std::optional<std::filesystem::path> path;
  std::optional<ToySource> toy;
  std::int64_t fake_shift = 0;  // 0 keeps the original script
  double permute = 0.0;
  bool frequency_only = false;
  std::size_t frequency_sentences = 0;  // 0: as many as the source
};

struct TokenizerSpec {
  tokenizers::TokenizerMode mode = tokenizers::TokenizerMode::wordpiece;
  std::size_t size = 2000;
  std::optional<std::filesystem::path> path;  // load instead of training
};

struct RetrievalSpec {
  std::string source;
  std::string target;
  std::size_t pairs = 500;
  std::size_t k = 3;
  std::optional<std::filesystem::path> path;  // TSV "source\ttarget"
};

struct XnliSpec {
  std::string source;
  std::string target;
  std::size_t train_size = 2000;
  std::size_t test_size = 600;
  probes::EntailmentHyper hyper;
  std::optional<std::filesystem::path> train_path;
  std::map<std::string, std::filesystem::path> test_paths;  // by language
  std::optional<std::filesystem::path> classifier;          // skip fine-tuning
};

struct NerSpec {
  std::string source;
  std::string target;
  std::size_t train_size = 400;
  std::size_t test_size = 200;
  bool surnames = true;
  std::size_t seeds = 5;
  probes::TaggerHyper hyper;
  std::optional<std::filesystem::path> train_path;
  std::map<std::string, std::filesystem::path> test_paths;
};

/// Input of the stand-alone corpus transforms.
struct TransformSpec {
  std::filesystem::path input;
  std::int64_t shift = 0xE000;
  double p = 1.0;
  std::size_t sentences = 0;  // freqgen; 0 means the input's count
};

struct ExperimentConfig {
  std::string name;
  json labels = json::object();  // free-form report keys, e.g. group and role
  std::uint64_t seed = 0;
  std::vector<LanguageSpec> languages;
  TokenizerSpec tokenizer;
  encoder::EncoderConfig encoder;  // vocab_size is filled from the tokenizer
  pretrain::PretrainConfig pretrain;
  std::optional<std::filesystem::path> checkpoint;  // skip pretraining
  std::optional<RetrievalSpec> retrieval;
  std::optional<XnliSpec> xnli;
  std::optional<NerSpec> ner;
  std::optional<TransformSpec> transform;

  /// Relative paths resolve against `base_dir`. Unknown keys are errors.
  static ExperimentConfig from_json(const json& j, const std::filesystem::path& base_dir = {});
  json to_json() const;

  /// Every problem found, empty when the config is usable.
  std::vector<std::string> violations() const;
  /// Throws std::invalid_argument listing all violations.
  void validate() const;

  const LanguageSpec* language(std::string_view code) const;
};

ExperimentConfig load_config(const std::filesystem::path& path);

/// Sorted-key compact JSON of the fully defaulted config.
std::string canonical_json(const ExperimentConfig& config);
/// SHA-256 of canonical_json.
std::string config_hash(const ExperimentConfig& config);

}  // namespace xlab::lab
