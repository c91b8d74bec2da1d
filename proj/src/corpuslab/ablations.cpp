#include "xlab/corpuslab/ablations.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

#include "xlab/common/unicode.hpp"

namespace xlab::corpuslab {

namespace {

std::string hex(char32_t c) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "U+%04X", static_cast<unsigned>(c));
  return buf;
}

}  // namespace

void CharBijection::validate() const {
  if (source_lo > source_hi) throw std::invalid_argument("bijection: empty source range");
  if (in_range(placeholder)) {
    throw std::invalid_argument("bijection: placeholder " + hex(placeholder) +
                                " lies inside the source range");
  }
  const std::int64_t lo = static_cast<std::int64_t>(source_lo) + shift;
  const std::int64_t hi = static_cast<std::int64_t>(source_hi) + shift;
  const std::int64_t ph = static_cast<std::int64_t>(placeholder) + shift;
  if (lo < 0 || hi > 0x10FFFF || ph < 0 || ph > 0x10FFFF) {
    throw std::invalid_argument("bijection: image leaves the Unicode code space");
  }
  if (!(hi < static_cast<std::int64_t>(source_lo) || lo > static_cast<std::int64_t>(source_hi))) {
    throw std::invalid_argument("bijection: image overlaps the source range");
  }
  if (lo <= 0xDFFF && hi >= 0xD800) {
    throw std::invalid_argument("bijection: image includes surrogate code points");
  }
  if (is_surrogate(static_cast<char32_t>(ph))) {
    throw std::invalid_argument("bijection: placeholder image is a surrogate");
  }
  // Plane-final noncharacters U+xxFFFE / U+xxFFFF.
  for (std::int64_t plane = lo >> 16; plane <= (hi >> 16); ++plane) {
    const std::int64_t nc = (plane << 16) | 0xFFFE;
    if (nc <= hi && nc + 1 >= lo) {
      throw std::invalid_argument("bijection: image includes noncharacter " +
                                  hex(static_cast<char32_t>(nc >= lo ? nc : nc + 1)));
    }
  }
  if ((ph & 0xFFFE) == 0xFFFE) {
    throw std::invalid_argument("bijection: placeholder image is a noncharacter");
  }
}

char32_t CharBijection::map(char32_t c) const {
  const char32_t src = in_range(c) ? c : placeholder;
  return static_cast<char32_t>(static_cast<std::int64_t>(src) + shift);
}

char32_t CharBijection::inverse(char32_t c) const {
  const std::int64_t back = static_cast<std::int64_t>(c) - shift;
  if (back >= 0 && back <= 0x10FFFF) {
    const auto b = static_cast<char32_t>(back);
    if (in_range(b) || b == placeholder) return b;
  }
  return c;
}

std::string map_text(std::string_view text, const CharBijection& bijection) {
  std::string out;
  out.reserve(text.size() * 3);
  for (char32_t c : utf8_decode(text)) utf8_append(out, bijection.map(c));
  return out;
}

std::string inverse_text(std::string_view text, const CharBijection& bijection) {
  std::string out;
  out.reserve(text.size());
  for (char32_t c : utf8_decode(text)) utf8_append(out, bijection.inverse(c));
  return out;
}

Corpus make_fake_language(const Corpus& corpus, const CharBijection& bijection) {
  bijection.validate();
  Corpus out = normalize(corpus);
  for (auto& doc : out.documents) {
    for (auto& s : doc) s = map_text(s, bijection);
  }
  return out;
}

Corpus invert_fake_language(const Corpus& corpus, const CharBijection& bijection) {
  bijection.validate();
  Corpus out = corpus;
  for (auto& doc : out.documents) {
    for (auto& s : doc) s = inverse_text(s, bijection);
  }
  return out;
}

std::size_t permutation_pair_count(std::size_t length, double p) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw std::invalid_argument("permutation fraction must lie in [0,1], got " + std::to_string(p));
  }
  if (length < 2) return 0;
  const std::size_t pairs = length * (length - 1) / 2;
  return static_cast<std::size_t>(std::floor(p * static_cast<double>(pairs)));
}

std::vector<std::pair<std::size_t, std::size_t>> sample_swap_pairs(std::size_t length,
                                                                   const PermutationSpec& spec) {
  const std::size_t n = permutation_pair_count(length, spec.p);
  std::vector<std::pair<std::size_t, std::size_t>> out;
  if (n == 0) return out;
  const std::size_t total = length * (length - 1) / 2;
  std::vector<std::size_t> pool(total);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  Rng rng(spec.seed);
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t pick = k + static_cast<std::size_t>(rng.index(total - k));
    std::swap(pool[k], pool[pick]);
    // Decode the pair index: row i holds L-1-i pairs.
    std::size_t r = pool[k];
    std::size_t i = 0;
    while (r >= length - 1 - i) {
      r -= length - 1 - i;
      ++i;
    }
    out.emplace_back(i, i + 1 + r);
  }
  return out;
}

std::uint64_t sentence_seed(std::uint64_t seed, std::size_t doc, std::size_t sentence) {
  return derive_seed(seed, {static_cast<std::uint64_t>(doc), static_cast<std::uint64_t>(sentence)});
}

Corpus permute_corpus(const Corpus& corpus, const Segmenter& segmenter, const PermutationSpec& spec) {
  Corpus out;
  out.documents.reserve(corpus.documents.size());
  for (std::size_t d = 0; d < corpus.documents.size(); ++d) {
    Document nd;
    for (std::size_t s = 0; s < corpus.documents[d].size(); ++s) {
      auto pieces = segmenter.segment(corpus.documents[d][s]);
      pieces = permute_sentence(std::move(pieces), PermutationSpec{spec.p, sentence_seed(spec.seed, d, s)});
      std::string joined;
      for (std::size_t i = 0; i < pieces.size(); ++i) {
        if (i) joined += segmenter.joiner;
        joined += pieces[i];
      }
      auto norm = normalize_text(joined);
      if (!norm.empty()) nd.push_back(std::move(norm));
    }
    if (!nd.empty()) out.documents.push_back(std::move(nd));
  }
  return out;
}

double kendall_tau_distance(const std::vector<std::size_t>& order) {
  const std::size_t n = order.size();
  if (n < 2) return 0.0;
  std::size_t discordant = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) discordant += order[i] > order[j];
  }
  return static_cast<double>(discordant) / static_cast<double>(n * (n - 1) / 2);
}

void UnigramTable::validate() const {
  if (counts.empty()) throw std::invalid_argument("unigram table is empty");
  std::uint64_t sum = 0;
  for (const auto& [w, c] : counts) {
    if (c < 1) throw std::invalid_argument("unigram table: word '" + w + "' has count 0");
    sum += c;
  }
  if (sum != total) throw std::invalid_argument("unigram table: total does not equal sum of counts");
  if (length_histogram.empty()) throw std::invalid_argument("unigram table: empty length histogram");
  for (const auto& [len, c] : length_histogram) {
    if (len < 1 || c < 1) throw std::invalid_argument("unigram table: invalid histogram entry");
  }
}

UnigramTable collect_unigram_table(const Corpus& corpus) {
  UnigramTable table;
  for (const auto& doc : corpus.documents) {
    for (const auto& s : doc) {
      const auto words = split_words(s);
      if (words.empty()) continue;
      for (const auto& w : words) ++table.counts[w];
      table.total += words.size();
      ++table.length_histogram[words.size()];
    }
  }
  if (table.total == 0) throw std::invalid_argument("collect_unigram_table: corpus is empty");
  return table;
}

namespace {

/// Inverse-CDF sampler over a map's values in key order.
template <class Key>
class CountSampler {
 public:
  explicit CountSampler(const std::map<Key, std::uint64_t>& counts) {
    for (const auto& [k, c] : counts) {
      keys_.push_back(k);
      acc_ += c;
      cumulative_.push_back(acc_);
    }
  }
  const Key& draw(Rng& rng) const {
    const std::uint64_t x = rng.index(acc_);
    const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), x);
    return keys_[static_cast<std::size_t>(it - cumulative_.begin())];
  }

 private:
  std::vector<Key> keys_;
  std::vector<std::uint64_t> cumulative_;
  std::uint64_t acc_ = 0;
};

}  // namespace

Corpus synthesize_frequency_corpus(const UnigramTable& table, std::size_t n_sentences,
                                   std::uint64_t seed, std::size_t doc_size) {
  table.validate();
  if (n_sentences == 0) throw std::invalid_argument("synthesize_frequency_corpus: n_sentences must be >= 1");
  CountSampler<std::string> words(table.counts);
  CountSampler<std::size_t> lengths(table.length_histogram);
  Rng rng(seed);
  std::vector<std::string> sentences;
  sentences.reserve(n_sentences);
  for (std::size_t i = 0; i < n_sentences; ++i) {
    const std::size_t len = lengths.draw(rng);
    std::string s;
    for (std::size_t k = 0; k < len; ++k) {
      if (k) s += ' ';
      s += words.draw(rng);
    }
    sentences.push_back(std::move(s));
  }
  return make_corpus(sentences, doc_size);
}

double wordpiece_contribution(double perf_real, double perf_fake) { return perf_real - perf_fake; }

}  // namespace xlab::corpuslab
