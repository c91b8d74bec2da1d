#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "xlab/common/random.hpp"
#include "xlab/corpuslab/corpus.hpp"

namespace xlab::corpuslab {

// ---------------------------------------------------------------------------
// Synthetic-script bijection

/// Shifts every code point in [source_lo, source_hi] by `shift`. Anything
/// outside the range is first replaced by `placeholder`, which must itself lie
/// outside the range, and then shifted.
struct CharBijection {
  std::int64_t shift = 0xE000;
  char32_t source_lo = 0x0020;
  char32_t source_hi = 0x1FFD;
  char32_t placeholder = 0x0001;

  /// Throws std::invalid_argument if the image leaves the scalar range, hits a
  /// surrogate or a plane-final noncharacter (U+xxFFFE/U+xxFFFF), overlaps
  /// the source range, or if the placeholder is unusable.
  void validate() const;

  bool in_range(char32_t c) const { return c >= source_lo && c <= source_hi; }
  char32_t map(char32_t c) const;
  /// Inverse on the image; other code points pass through unchanged.
  char32_t inverse(char32_t c) const;
};

std::string map_text(std::string_view text, const CharBijection& bijection);
std::string inverse_text(std::string_view text, const CharBijection& bijection);

/// Applies the bijection to every sentence of the normalized corpus.
Corpus make_fake_language(const Corpus& corpus, const CharBijection& bijection);
Corpus invert_fake_language(const Corpus& corpus, const CharBijection& bijection);

// ---------------------------------------------------------------------------
// Word-order destruction

struct PermutationSpec {
  double p = 0.0;
  std::uint64_t seed = 0;
};

/// floor(p * L(L-1)/2).
std::size_t permutation_pair_count(std::size_t length, double p);

/// Swap list drawn uniformly without replacement from the pairs (i<j) of
/// [0, length), in sampled order. Pair index r enumerates (0,1),(0,2),...,
/// (0,L-1),(1,2),...; a partial Fisher-Yates over [0, C(L,2)) picks indices.
std::vector<std::pair<std::size_t, std::size_t>> sample_swap_pairs(std::size_t length,
                                                                   const PermutationSpec& spec);

template <class Tok>
std::vector<Tok> permute_sentence(std::vector<Tok> tokens, const PermutationSpec& spec) {
  for (auto [i, j] : sample_swap_pairs(tokens.size(), spec)) std::swap(tokens[i], tokens[j]);
  return tokens;
}

/// Segments a sentence into surface pieces whose concatenation with `joiner`
/// reconstructs it.
struct Segmenter {
  std::function<std::vector<std::string>(const std::string&)> segment;
  std::string joiner;
};

/// Per-sentence seed: derive_seed(spec.seed, {doc, sentence}).
std::uint64_t sentence_seed(std::uint64_t seed, std::size_t doc, std::size_t sentence);

Corpus permute_corpus(const Corpus& corpus, const Segmenter& segmenter, const PermutationSpec& spec);

/// Normalized Kendall-tau distance of a permutation of 0..n-1 from identity:
/// discordant pairs / C(n,2); 0 when n < 2.
double kendall_tau_distance(const std::vector<std::size_t>& order);

// ---------------------------------------------------------------------------
// Frequency-only corpora

struct UnigramTable {
  std::map<std::string, std::uint64_t> counts;
  std::uint64_t total = 0;
  std::map<std::size_t, std::uint64_t> length_histogram;

  void validate() const;
};

UnigramTable collect_unigram_table(const Corpus& corpus);

/// Every sentence is an i.i.d. bag of words from the table's unigram
/// distribution, with its length drawn from the length histogram.
Corpus synthesize_frequency_corpus(const UnigramTable& table, std::size_t n_sentences,
                                   std::uint64_t seed, std::size_t doc_size = 8);

/// perf_real - perf_fake.
double wordpiece_contribution(double perf_real, double perf_fake);

}  // namespace xlab::corpuslab
