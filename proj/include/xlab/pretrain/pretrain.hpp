#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "xlab/corpuslab/corpus.hpp"
#include "xlab/encoder/encoder.hpp"
#include "xlab/tokenizers/tokenizer.hpp"

namespace xlab::pretrain {

struct PretrainConfig {
  std::size_t batch_size = 32;
  double lr = 1e-4;
  std::size_t steps = 1000;
  bool nsp = true;
  bool lang_id = false;
  double smoothing = 0.7;  // language sampling exponent
  double mask_rate = 0.15;
  double mask_token = 0.8;  // of masked positions: [MASK]
  double random_token = 0.1;
  double keep_token = 0.1;
  std::size_t max_seq = 128;
  double warmup_fraction = 0.0;  // linear warmup over this fraction of steps
  double clip_norm = 1.0;        // 0 disables clipping
  std::size_t checkpoint_every = 0;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
  nlohmann::json to_json() const;
  static PretrainConfig from_json(const nlohmann::json& j);
};

struct TrainingExample {
  std::vector<std::int32_t> tokens;
  std::vector<std::int32_t> segments;
  std::vector<std::size_t> masked_positions;  // ascending
  std::vector<std::int32_t> masked_labels;
  std::optional<bool> is_next;
  std::vector<std::string> segment_languages;
};

struct LanguageCorpus {
  std::string code;
  corpuslab::Corpus corpus;
};

/// Deterministic example source: example i depends only on (seed, i), so
/// the stream is the same for any worker count and resumes exactly.
class ExampleBuilder {
 public:
  /// Tokenizes every corpus up front. Throws if a language has no sentences
  /// or, with lang_id on, the vocabulary lacks its separator.
  ExampleBuilder(const std::vector<LanguageCorpus>& corpora, const tokenizers::Tokenizer& tokenizer,
                 const PretrainConfig& config);

  TrainingExample example(std::uint64_t index) const;
  /// Examples [first, first + count).
  std::vector<TrainingExample> batch(std::uint64_t first, std::size_t count) const;

  /// Smoothed sampling distribution, size^s normalized, by language order.
  const std::vector<double>& language_probs() const { return probs_; }
  const std::vector<std::string>& languages() const { return codes_; }
  std::size_t vocab_size() const { return vocab_size_; }

 private:
  using Sentence = std::vector<std::int32_t>;
  struct Lang {
    std::vector<std::vector<Sentence>> docs;
    std::vector<std::pair<std::size_t, std::size_t>> with_next;  // (doc, sentence) having a successor
    std::vector<std::pair<std::size_t, std::size_t>> all;
    std::int32_t sep = 0;
  };

  std::size_t pick_language(Rng& rng) const;
  void mask(TrainingExample& ex, Rng& rng) const;

  PretrainConfig config_;
  std::vector<std::string> codes_;
  std::vector<Lang> langs_;
  std::vector<double> probs_;
  std::vector<double> cumulative_;
  std::int32_t cls_ = 0, mask_id_ = 0, pad_ = 0;
  std::size_t special_count_ = 0, vocab_size_ = 0;
};

/// Pads to the longest example; masked rows index the packed batch.
struct CollatedBatch {
  encoder::Batch batch;
  std::vector<std::size_t> masked_rows;
  std::vector<std::int32_t> masked_labels;
  std::vector<std::int32_t> nsp_labels;  // empty when no example has one
};
CollatedBatch collate(const std::vector<TrainingExample>& examples, std::int32_t pad_id);

// ---------------------------------------------------------------------------
// Checkpoints

struct Checkpoint {
  nlohmann::json config;  // encoder config under "encoder", plus run metadata
  std::vector<std::string> names;
  std::vector<num::Tensor<float>> tensors;
  num::AdamState<float> adam;
  std::uint64_t step = 0;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string serialize_checkpoint(const Checkpoint& c);
/// Throws CheckpointError on bad magic, truncation or inconsistent sizes,
/// naming the tensor being read.
Checkpoint parse_checkpoint(std::string_view bytes);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c);
Checkpoint load_checkpoint(const std::filesystem::path& path);

Checkpoint make_checkpoint(const encoder::ModelState<float>& model, const num::AdamState<float>& adam,
                           std::uint64_t step, nlohmann::json meta = nlohmann::json::object());
/// Copies tensors into a model; throws CheckpointError naming the first
/// missing or mis-shaped tensor.
void restore_model(const Checkpoint& c, encoder::ModelState<float>& model);
/// Builds a model from the checkpoint's own encoder config.
encoder::ModelState<float> model_from_checkpoint(const Checkpoint& c);

// ---------------------------------------------------------------------------
// Training

struct LossPoint {
  std::uint64_t step = 0;  // 1-based count of completed updates
  double mlm_loss = 0.0;
  std::optional<double> nsp_loss;
};

struct TrainOptions {
  std::filesystem::path checkpoint_path;  // empty: no checkpoints written
  std::filesystem::path loss_curve_path;  // JSON lines, truncated to the resume step
  nlohmann::json meta = nlohmann::json::object();
  std::function<void(const LossPoint&)> on_step;
};

struct TrainResult {
  std::vector<LossPoint> curve;  // points produced by this call
  bool aborted = false;
  std::string abort_reason;
};

struct TrainState {
  encoder::ModelState<float> model;
  num::AdamState<float> adam;
  std::uint64_t step = 0;
};

/// Runs updates from state.step to config.steps. A non-finite loss or
/// gradient stops training without touching the last written checkpoint.
TrainResult train(TrainState& state, const ExampleBuilder& examples, const PretrainConfig& config,
                  const TrainOptions& options = {});

/// MLM (+ NSP) loss on a fixed batch without updating anything.
LossPoint evaluate_loss(encoder::ModelState<float>& model, const CollatedBatch& batch);

std::string loss_point_json(const LossPoint& p);

}  // namespace xlab::pretrain
