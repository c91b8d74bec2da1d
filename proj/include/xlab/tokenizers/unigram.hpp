#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "xlab/common/unicode.hpp"
#include "xlab/corpuslab/corpus.hpp"
#include "xlab/tokenizers/vocabulary.hpp"

namespace xlab::tokenizers {

/// Code-point trie over pieces, used for Viterbi lattice construction.
class PieceTrie {
 public:
  void insert(const CodePoints& piece, std::int32_t id);

  /// Calls fn(end, id) for every piece that starts at `begin`, shortest first.
  template <class Fn>
  void for_each_prefix(const CodePoints& text, std::size_t begin, Fn&& fn) const {
    std::int32_t node = 0;
    for (std::size_t j = begin; j < text.size(); ++j) {
      node = child(node, text[j]);
      if (node < 0) return;
      if (nodes_[static_cast<std::size_t>(node)].piece >= 0) fn(j + 1, nodes_[static_cast<std::size_t>(node)].piece);
    }
  }

 private:
  struct Node {
    std::vector<std::pair<char32_t, std::int32_t>> children;  // sorted by code point
    std::int32_t piece = -1;
  };
  std::int32_t child(std::int32_t node, char32_t c) const;

  std::vector<Node> nodes_{1};
};

struct Segmentation {
  std::vector<std::int32_t> ids;
  std::vector<std::string> pieces;  // surface text, including characters mapped to [UNK]
  double score = 0.0;
};

struct UnigramOptions {
  std::size_t max_piece_length = 8;
  double seed_factor = 10.0;     // candidate pool = seed_factor * target_size
  double prune_fraction = 0.2;
  int em_iterations = 2;         // per pruning round
  double count_floor = 1e-3;     // pseudo-count keeping every piece's probability positive
  std::vector<std::string> languages;
};

class UnigramLM {
 public:
  UnigramLM() = default;
  /// Rebuilds the lattice index from a scored vocabulary. [UNK] scores 10
  /// nats below the least likely piece.
  explicit UnigramLM(ScoredVocabulary v);

  const Vocabulary& vocab() const { return v_.vocab; }
  const std::vector<double>& logp() const { return v_.logp; }
  const ScoredVocabulary& scored() const { return v_; }
  double unk_score() const { return unk_score_; }

  Segmentation encode(std::string_view text) const;

 private:
  ScoredVocabulary v_;
  PieceTrie trie_;
  double unk_score_ = -100.0;
};

/// Max-score segmentation over prefix positions. Characters without a piece
/// become [UNK] with score lm.unk_score().
Segmentation encode_unigram(const UnigramLM& lm, std::string_view text);

/// One pruning round as seen by the trainer, for offline re-verification.
struct PruneRound {
  std::vector<std::string> pieces;  // every non-special piece before pruning
  std::vector<double> logp;
  std::vector<double> counts;       // Viterbi counts from the last E-step
  std::vector<double> loss;         // count * (logp - best alternative score)
  std::vector<std::string> pruned;
};

struct UnigramTrainLog {
  std::vector<PruneRound> rounds;
  double max_normalization_error = 0.0;  // |sum p - 1| over all M-steps
  std::size_t em_steps = 0;
};

/// Hard-EM unigram training with likelihood-loss pruning down to
/// target_size entries (specials included). Deterministic; the result depends
/// on the corpus only through counts and code-point order.
UnigramLM train_unigram_vocab(const corpuslab::Corpus& corpus, std::size_t target_size,
                              const UnigramOptions& options = {}, UnigramTrainLog* log = nullptr);

/// Score of the best segmentation of `text` using pieces from `logp`, with
/// the piece `exclude` (if non-negative) removed. -inf when none exists.
double best_segmentation_score(const PieceTrie& trie, std::span<const double> logp, const CodePoints& text,
                               std::int32_t exclude = -1);

}  // namespace xlab::tokenizers
