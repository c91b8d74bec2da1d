#include "xlab/corpuslab/corpus.hpp"

#include "xlab/common/digest.hpp"
#include "xlab/common/unicode.hpp"

namespace xlab::corpuslab {

std::size_t Corpus::sentence_count() const {
  std::size_t n = 0;
  for (const auto& d : documents) n += d.size();
  return n;
}

std::vector<std::string_view> Corpus::sentences() const {
  std::vector<std::string_view> out;
  out.reserve(sentence_count());
  for (const auto& d : documents) {
    for (const auto& s : d) out.emplace_back(s);
  }
  return out;
}

Corpus normalize(const Corpus& corpus) {
  Corpus out;
  for (const auto& doc : corpus.documents) {
    Document nd;
    for (const auto& s : doc) {
      auto n = normalize_text(s);
      if (!n.empty()) nd.push_back(std::move(n));
    }
    if (!nd.empty()) out.documents.push_back(std::move(nd));
  }
  return out;
}

Corpus parse_corpus(std::string_view text) {
  Corpus out;
  Document cur;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    auto line = normalize_text(text.substr(pos, nl - pos));
    if (line.empty()) {
      if (!cur.empty()) out.documents.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(std::move(line));
    }
    pos = nl + 1;
  }
  if (!cur.empty()) out.documents.push_back(std::move(cur));
  return out;
}

std::string format_corpus(const Corpus& corpus) {
  std::string out;
  for (std::size_t d = 0; d < corpus.documents.size(); ++d) {
    if (d) out += '\n';
    for (const auto& s : corpus.documents[d]) {
      out += s;
      out += '\n';
    }
  }
  return out;
}

Corpus read_corpus(const std::filesystem::path& path) { return parse_corpus(read_file(path)); }

void write_corpus(const std::filesystem::path& path, const Corpus& corpus) {
  write_file_atomic(path, format_corpus(corpus));
}

Corpus make_corpus(const std::vector<std::string>& sentences, std::size_t doc_size) {
  Corpus out;
  for (std::size_t i = 0; i < sentences.size(); i += doc_size) {
    Document d;
    for (std::size_t j = i; j < std::min(sentences.size(), i + doc_size); ++j) {
      d.push_back(sentences[j]);
    }
    out.documents.push_back(std::move(d));
  }
  return out;
}

}  // namespace xlab::corpuslab
