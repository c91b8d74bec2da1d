#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace xlab::corpuslab {

using Sentence = std::string;
using Document = std::vector<Sentence>;

/// Ordered documents of normalized UTF-8 sentences.
struct Corpus {
  std::vector<Document> documents;

  std::size_t sentence_count() const;
  bool empty() const { return sentence_count() == 0; }
  /// All sentences in document order.
  std::vector<std::string_view> sentences() const;

  bool operator==(const Corpus&) const = default;
};

/// NFC + whitespace collapse on every sentence; empty sentences and then
/// empty documents are dropped.
Corpus normalize(const Corpus& corpus);

/// One sentence per line, blank line between documents. Lines are normalized
/// on the way in; a line that normalizes to empty acts as a document break.
Corpus parse_corpus(std::string_view text);
std::string format_corpus(const Corpus& corpus);

Corpus read_corpus(const std::filesystem::path& path);
void write_corpus(const std::filesystem::path& path, const Corpus& corpus);

/// Wraps a flat sentence list as documents of `doc_size` sentences.
Corpus make_corpus(const std::vector<std::string>& sentences, std::size_t doc_size = 8);

}  // namespace xlab::corpuslab
