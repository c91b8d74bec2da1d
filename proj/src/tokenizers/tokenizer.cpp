#include "xlab/tokenizers/tokenizer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "xlab/common/unicode.hpp"

namespace xlab::tokenizers {

namespace {

ScoredVocabulary ranked_vocab(std::map<std::string, double> counts, std::size_t limit,
                              const std::vector<std::string>& languages) {
  std::vector<std::pair<std::string, double>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  if (ranked.size() > limit) ranked.resize(limit);
  double total = 0.0;
  for (const auto& [w, c] : counts) total += c;
  ScoredVocabulary out{Vocabulary(languages), {}};
  out.logp.assign(out.vocab.size(), 0.0);
  for (auto& [w, c] : ranked) {
    out.vocab.add(std::move(w));
    out.logp.push_back(std::log(c / total));
  }
  return out;
}

}  // namespace

ScoredVocabulary build_char_vocab(const corpuslab::Corpus& corpus, const std::vector<std::string>& languages) {
  std::map<std::string, double> counts;
  for (auto s : corpus.sentences()) {
    for (char32_t c : utf8_decode(s)) {
      std::string k;
      utf8_append(k, c);
      counts[k] += 1.0;
    }
  }
  if (counts.empty()) throw std::invalid_argument("build_char_vocab: corpus is empty");
  return ranked_vocab(std::move(counts), SIZE_MAX, languages);
}

ScoredVocabulary build_word_vocab(const corpuslab::Corpus& corpus, std::size_t vocab_size,
                                  const std::vector<std::string>& languages) {
  std::map<std::string, double> counts;
  for (auto s : corpus.sentences())
    for (auto& w : split_words(s)) counts[w] += 1.0;
  if (counts.empty()) throw std::invalid_argument("build_word_vocab: corpus is empty");
  return ranked_vocab(std::move(counts), vocab_size, languages);
}

std::vector<std::int32_t> char_tokenize(const Vocabulary& vocab, std::string_view text) {
  std::vector<std::int32_t> out;
  std::string k;
  for (char32_t c : utf8_decode(text)) {
    k.clear();
    utf8_append(k, c);
    out.push_back(vocab.id_or_unk(k));
  }
  return out;
}

std::vector<std::int32_t> word_tokenize(const Vocabulary& vocab, std::string_view text) {
  std::vector<std::int32_t> out;
  for (const auto& w : split_words(text)) out.push_back(vocab.id_or_unk(w));
  return out;
}

std::string mode_name(TokenizerMode mode) {
  switch (mode) {
    case TokenizerMode::character: return "char";
    case TokenizerMode::wordpiece: return "wordpiece";
    case TokenizerMode::word: return "word";
  }
  return "?";
}

TokenizerMode parse_mode(std::string_view name) {
  if (name == "char") return TokenizerMode::character;
  if (name == "wordpiece") return TokenizerMode::wordpiece;
  if (name == "word") return TokenizerMode::word;
  throw std::invalid_argument("unknown tokenizer mode '" + std::string(name) + "' (expected char, wordpiece or word)");
}

Tokenizer Tokenizer::train(TokenizerMode mode, const corpuslab::Corpus& corpus, std::size_t size,
                           const std::vector<std::string>& languages, const UnigramOptions& options) {
  switch (mode) {
    case TokenizerMode::character: return from_vocab(mode, build_char_vocab(corpus, languages));
    case TokenizerMode::word: {
      const Vocabulary specials(languages);
      if (size <= specials.special_count()) throw std::invalid_argument("word vocabulary size leaves no room for words");
      return from_vocab(mode, build_word_vocab(corpus, size - specials.special_count(), languages));
    }
    case TokenizerMode::wordpiece: {
      UnigramOptions opt = options;
      opt.languages = languages;
      Tokenizer t;
      t.mode_ = mode;
      t.lm_ = train_unigram_vocab(corpus, size, opt);
      return t;
    }
  }
  throw std::logic_error("unreachable");
}

Tokenizer Tokenizer::from_vocab(TokenizerMode mode, ScoredVocabulary v) {
  Tokenizer t;
  t.mode_ = mode;
  t.lm_ = UnigramLM(std::move(v));
  return t;
}

Tokenizer Tokenizer::load(TokenizerMode mode, const std::filesystem::path& path) {
  return from_vocab(mode, load_vocab(path));
}

void Tokenizer::save(const std::filesystem::path& path) const { save_vocab(path, lm_.scored()); }

std::vector<std::int32_t> Tokenizer::encode(std::string_view text) const {
  switch (mode_) {
    case TokenizerMode::character: return char_tokenize(vocab(), text);
    case TokenizerMode::word: return word_tokenize(vocab(), text);
    case TokenizerMode::wordpiece: return lm_.encode(text).ids;
  }
  return {};
}

std::vector<std::string> Tokenizer::segment(std::string_view text) const {
  switch (mode_) {
    case TokenizerMode::character: {
      std::vector<std::string> out;
      for (char32_t c : utf8_decode(text)) {
        out.emplace_back();
        utf8_append(out.back(), c);
      }
      return out;
    }
    case TokenizerMode::word: return split_words(text);
    case TokenizerMode::wordpiece: return lm_.encode(text).pieces;
  }
  return {};
}

std::string Tokenizer::decode(std::span<const std::int32_t> ids) const {
  std::string out;
  bool first = true;
  for (std::int32_t id : ids) {
    if (vocab().is_special(id)) continue;
    if (!first) out += joiner();
    out += vocab().piece(id);
    first = false;
  }
  return out;
}

corpuslab::Segmenter Tokenizer::segmenter() const {
  return {[t = *this](const std::string& s) { return t.segment(s); }, joiner()};
}

}  // namespace xlab::tokenizers
