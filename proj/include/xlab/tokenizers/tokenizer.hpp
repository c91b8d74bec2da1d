#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "xlab/corpuslab/ablations.hpp"
#include "xlab/tokenizers/unigram.hpp"

namespace xlab::tokenizers {

/// Specials plus every character of the corpus, ordered by frequency then
/// code point; logp is the relative frequency.
ScoredVocabulary build_char_vocab(const corpuslab::Corpus& corpus, const std::vector<std::string>& languages = {});

/// Specials plus the `vocab_size` most frequent whitespace-delimited words
/// (frequency descending, ties by byte order).
ScoredVocabulary build_word_vocab(const corpuslab::Corpus& corpus, std::size_t vocab_size,
                                  const std::vector<std::string>& languages = {});

/// One id per scalar value; unseen characters become [UNK].
std::vector<std::int32_t> char_tokenize(const Vocabulary& vocab, std::string_view text);
/// One id per word; out-of-vocabulary words become [UNK].
std::vector<std::int32_t> word_tokenize(const Vocabulary& vocab, std::string_view text);

enum class TokenizerMode { character, wordpiece, word };
std::string mode_name(TokenizerMode mode);
/// Accepts "char", "wordpiece" and "word".
TokenizerMode parse_mode(std::string_view name);

class Tokenizer {
 public:
  /// `size` is the total vocabulary size including specials. Character mode
  /// keeps every character and ignores it.
  static Tokenizer train(TokenizerMode mode, const corpuslab::Corpus& corpus, std::size_t size,
                         const std::vector<std::string>& languages, const UnigramOptions& options = {});
  static Tokenizer from_vocab(TokenizerMode mode, ScoredVocabulary v);
  static Tokenizer load(TokenizerMode mode, const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  TokenizerMode mode() const { return mode_; }
  const Vocabulary& vocab() const { return lm_.vocab(); }
  const ScoredVocabulary& scored() const { return lm_.scored(); }

  std::vector<std::int32_t> encode(std::string_view text) const;
  /// Surface pieces; concatenating them with joiner() reproduces the
  /// normalized input.
  std::vector<std::string> segment(std::string_view text) const;
  std::string joiner() const { return mode_ == TokenizerMode::word ? " " : ""; }
  /// Specials are skipped.
  std::string decode(std::span<const std::int32_t> ids) const;
  corpuslab::Segmenter segmenter() const;

 private:
  TokenizerMode mode_ = TokenizerMode::wordpiece;
  UnigramLM lm_;  // lattice only used in wordpiece mode
};

}  // namespace xlab::tokenizers
