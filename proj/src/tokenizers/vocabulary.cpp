#include "xlab/tokenizers/vocabulary.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "xlab/common/digest.hpp"

namespace xlab::tokenizers {

std::string lang_sep_token(std::string_view lang) { return "[SEP-" + std::string(lang) + "]"; }

Vocabulary::Vocabulary(std::vector<std::string> languages) : languages_(std::move(languages)) {
  for (auto s : {kPad, kUnk, kCls, kMask, kSep}) add(std::string(s));
  for (const auto& l : languages_) {
    if (l.empty()) throw std::invalid_argument("vocabulary: empty language code");
    add(lang_sep_token(l));
  }
}

std::int32_t Vocabulary::add(std::string piece) {
  if (piece.empty()) throw std::invalid_argument("vocabulary: empty piece");
  const auto id = static_cast<std::int32_t>(pieces_.size());
  if (!ids_.emplace(piece, id).second) throw std::invalid_argument("vocabulary: duplicate piece '" + piece + "'");
  pieces_.push_back(std::move(piece));
  return id;
}

std::optional<std::int32_t> Vocabulary::find(std::string_view piece) const {
  const auto it = ids_.find(std::string(piece));
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

std::int32_t Vocabulary::id_or_unk(std::string_view piece) const {
  const auto id = find(piece);
  return id && !is_special(*id) ? *id : unk();
}

std::int32_t Vocabulary::sep_for(std::string_view lang) const {
  for (std::size_t i = 0; i < languages_.size(); ++i) {
    if (languages_[i] == lang) return static_cast<std::int32_t>(5 + i);
  }
  throw std::out_of_range("vocabulary: no separator for language '" + std::string(lang) + "'");
}

std::string format_vocab(const ScoredVocabulary& v) {
  if (v.logp.size() != v.vocab.size()) throw std::invalid_argument("format_vocab: logp size mismatch");
  std::string out;
  char buf[64];
  for (std::size_t i = 0; i < v.vocab.size(); ++i) {
    out += v.vocab.pieces()[i];
    std::snprintf(buf, sizeof buf, "\t%.17g\n", v.logp[i]);
    out += buf;
  }
  return out;
}

ScoredVocabulary parse_vocab(std::string_view text) {
  std::vector<std::pair<std::string, double>> rows;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    const auto tab = line.rfind('\t');
    if (tab == std::string_view::npos || tab == 0) {
      throw std::invalid_argument("vocab line " + std::to_string(line_no) + ": expected '<piece>\\t<logp>'");
    }
    const std::string num(line.substr(tab + 1));
    char* end = nullptr;
    const double lp = std::strtod(num.c_str(), &end);
    if (num.empty() || end != num.c_str() + num.size() || std::isnan(lp)) {
      throw std::invalid_argument("vocab line " + std::to_string(line_no) + ": bad log-probability '" + num + "'");
    }
    rows.emplace_back(std::string(line.substr(0, tab)), lp);
  }

  const std::string_view fixed[] = {kPad, kUnk, kCls, kMask, kSep};
  for (std::size_t i = 0; i < 5 && i < rows.size(); ++i) {
    if (rows[i].first != fixed[i]) {
      throw std::invalid_argument("vocab line " + std::to_string(i + 1) + ": expected " + std::string(fixed[i]) +
                                  ", got '" + rows[i].first + "'");
    }
  }
  if (rows.size() < 5) throw std::invalid_argument("vocab: missing special tokens");
  std::vector<std::string> langs;
  std::size_t i = 5;
  for (; i < rows.size(); ++i) {
    const auto& p = rows[i].first;
    if (p.size() > 6 && p.starts_with("[SEP-") && p.back() == ']') {
      langs.push_back(p.substr(5, p.size() - 6));
    } else {
      break;
    }
  }
  ScoredVocabulary out{Vocabulary(langs), {}};
  out.logp.assign(out.vocab.size(), 0.0);
  for (; i < rows.size(); ++i) {
    try {
      out.vocab.add(rows[i].first);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("vocab line " + std::to_string(i + 1) + ": " + e.what());
    }
    out.logp.push_back(rows[i].second);
  }
  return out;
}

void save_vocab(const std::filesystem::path& path, const ScoredVocabulary& v) {
  write_file_atomic(path, format_vocab(v));
}

ScoredVocabulary load_vocab(const std::filesystem::path& path) { return parse_vocab(read_file(path)); }

}  // namespace xlab::tokenizers
