#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "xlab/corpuslab/toyworld.hpp"
#include "xlab/encoder/encoder.hpp"
#include "xlab/tokenizers/tokenizer.hpp"

namespace xlab::probes {

using corpuslab::toy::EntailmentLabel;
using Model = encoder::ModelState<float>;

// ---------------------------------------------------------------------------
// Entailment

struct EntailmentExample {
  std::string premise;
  std::string hypothesis;
  EntailmentLabel label = EntailmentLabel::neutral;
  std::string premise_language;
  std::string hypothesis_language;
};

/// "premise\thypothesis\tlabel" per line; errors name the line.
std::vector<EntailmentExample> parse_entailment_tsv(std::string_view text, const std::string& language);
std::vector<EntailmentExample> load_entailment_tsv(const std::filesystem::path& path, const std::string& language);
std::string format_entailment_tsv(const std::vector<EntailmentExample>& examples);

/// Line-aligned translations of one test set.
struct AlignedEntailmentSet {
  std::vector<EntailmentLabel> labels;
  std::map<std::string, std::vector<std::pair<std::string, std::string>>, std::less<>> texts;
};
/// Throws if the files differ in length or disagree on a label.
AlignedEntailmentSet align_entailment(const std::map<std::string, std::vector<EntailmentExample>>& by_language);

struct EntailmentHyper {
  std::size_t epochs = 4;
  double lr = 1e-4;
  std::size_t batch_size = 32;
  std::size_t max_seq = 64;
  double clip_norm = 1.0;
  bool language_separators = false;  // use [SEP-xx] when pretrained with lang ids
  std::uint64_t seed = 0;
};

/// Encoder plus a 3-way head ("cls.weight", "cls.bias") on the pooled vector.
struct EntailmentClassifier {
  Model model;
  EntailmentHyper hyper;
};

/// Fine-tunes every parameter. All examples must share one premise and
/// hypothesis language. epochs = 0 returns the freshly initialized head.
EntailmentClassifier finetune_entailment(const Model& encoder, const tokenizers::Tokenizer& tok,
                                         const std::vector<EntailmentExample>& train, const EntailmentHyper& hyper);

std::vector<EntailmentLabel> predict_entailment(EntailmentClassifier& clf, const tokenizers::Tokenizer& tok,
                                                const std::vector<EntailmentExample>& examples);

struct EntailmentEval {
  std::string premise_language;
  std::string hypothesis_language;
  std::size_t n = 0;
  std::size_t correct = 0;
  double accuracy = 0.0;
  std::vector<EntailmentLabel> gold;
  std::vector<EntailmentLabel> predicted;
};

/// One prediction pass over the chosen (premise, hypothesis) language pair.
/// Throws if either language has no translation in the set.
EntailmentEval eval_entailment(EntailmentClassifier& clf, const tokenizers::Tokenizer& tok,
                               const AlignedEntailmentSet& set, const std::string& premise_language,
                               const std::string& hypothesis_language);

/// "index\tgold\tpredicted" with a header line.
std::string format_prediction_dump(const EntailmentEval& eval);

// ---------------------------------------------------------------------------
// Linear-chain CRF

/// Transition scores of a K-tag chain; transitions[i*K + j] scores i -> j.
template <class T>
struct CrfTransitions {
  std::size_t tags = 0;
  std::vector<T> transitions;
  std::vector<T> start;
  std::vector<T> end;
};

template <class T>
struct CrfPath {
  std::vector<int> tags;
  T score = 0;
};

/// Emissions are row-major [L, K] with L >= 1.
template <class T>
T crf_log_partition(const CrfTransitions<T>& crf, std::span<const T> emissions);
template <class T>
CrfPath<T> crf_viterbi(const CrfTransitions<T>& crf, std::span<const T> emissions);
/// Unnormalized log score of one tag sequence.
template <class T>
T crf_path_score(const CrfTransitions<T>& crf, std::span<const T> emissions, std::span<const int> tags);

/// Negative log-likelihood log Z - score(tags) as a differentiable scalar.
template <class T>
num::Var<T> crf_nll(num::Var<T> emissions, num::Var<T> transitions, num::Var<T> start, num::Var<T> end,
                    std::span<const int> tags);

// ---------------------------------------------------------------------------
// Sequence tagging

struct TaggedSentence {
  std::vector<std::string> tokens;
  std::vector<std::string> tags;
};

/// Throws std::invalid_argument naming the first bad position.
void validate_bio(std::span<const std::string> tags);
/// CoNLL "token\ttag" lines, blank line between sentences. Errors name the line.
std::vector<TaggedSentence> parse_conll(std::string_view text);
std::vector<TaggedSentence> load_conll(const std::filesystem::path& path);
std::string format_conll(const std::vector<TaggedSentence>& sentences);

struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;  // exclusive
  std::string type;
  bool operator==(const Span&) const = default;
};
/// Chunks in conlleval style: an I-X not continuing an X chunk opens one.
std::vector<Span> bio_spans(std::span<const std::string> tags);

struct SpanScore {
  std::size_t true_positives = 0;
  std::size_t false_positives = 0;
  std::size_t false_negatives = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};
/// Exact-boundary span F1 over all sentences.
SpanScore span_f1(const std::vector<std::vector<std::string>>& gold, const std::vector<std::vector<std::string>>& pred);

/// Final-layer vector of each word's first piece, [words, hidden] per sentence.
/// Words are encoded one at a time (with a leading space after the first).
std::vector<num::Tensor<float>> extract_word_features(Model& encoder, const tokenizers::Tokenizer& tok,
                                                      const std::vector<std::vector<std::string>>& sentences);

struct TaggerHyper {
  std::size_t epochs = 30;
  double lr = 3e-3;
  std::size_t batch_size = 8;
  std::uint64_t seed = 0;
};

/// One self-attention mixer layer, a linear emission layer and CRF scores.
struct Tagger {
  std::vector<std::string> tagset;  // "O" first, then sorted
  Model params;
  CrfTransitions<float> crf() const;
};

/// Trains on frozen features; the encoder is not touched.
Tagger train_tagger(const std::vector<num::Tensor<float>>& features, const std::vector<TaggedSentence>& sentences,
                    const TaggerHyper& hyper);
std::vector<std::vector<std::string>> predict_tags(Tagger& tagger, const std::vector<num::Tensor<float>>& features);

struct TaggerReport {
  std::vector<double> f1;  // one per seed
  double mean = 0.0;
  double stdev = 0.0;  // sample standard deviation
};
struct TaggerTestSet {
  const std::vector<num::Tensor<float>>* features = nullptr;
  const std::vector<TaggedSentence>* sentences = nullptr;
};

/// Like tagger_report, but each seed's tagger is scored on every test set.
std::vector<TaggerReport> tagger_reports(const std::vector<num::Tensor<float>>& train_features,
                                         const std::vector<TaggedSentence>& train, const std::vector<TaggerTestSet>& tests,
                                         const TaggerHyper& hyper, std::size_t seeds = 5);

/// Trains `seeds` taggers (seed i derived from hyper.seed) and scores each.
TaggerReport tagger_report(const std::vector<num::Tensor<float>>& train_features,
                           const std::vector<TaggedSentence>& train,
                           const std::vector<num::Tensor<float>>& test_features,
                           const std::vector<TaggedSentence>& test, const TaggerHyper& hyper,
                           std::size_t seeds = 5);

// ---------------------------------------------------------------------------
// Retrieval and gap

struct RetrievalReport {
  double top1 = 0.0;
  double top3 = 0.0;
  double topk = 0.0;
  std::size_t k = 1;
  std::size_t n = 0;
};

/// Mean final-layer vector over the text's own tokens (no [CLS]/[SEP]).
std::vector<std::vector<float>> sentence_vectors(Model& encoder, const tokenizers::Tokenizer& tok,
                                                 const std::vector<std::string>& sentences);

/// Query i's true candidate is candidate i. Its rank is one plus the number
/// of candidates with strictly higher cosine similarity.
RetrievalReport retrieval_accuracy(const std::vector<std::vector<float>>& queries,
                                   const std::vector<std::vector<float>>& candidates, std::size_t k);

RetrievalReport intrinsic_retrieval(Model& encoder, const tokenizers::Tokenizer& tok,
                                    const std::vector<std::pair<std::string, std::string>>& pairs, std::size_t k);

struct GapReport {
  double perf_source = 0.0;
  double perf_target = 0.0;
  double delta = 0.0;
};
GapReport cross_lingual_gap(double perf_source, double perf_target);

}  // namespace xlab::probes
