#include "xlab/tokenizers/unigram.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>
#include <unordered_map>

namespace xlab::tokenizers {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kUnkPenalty = 10.0;

struct Step {
  std::size_t begin, end;
  std::int32_t id;  // -1 for [UNK]
};

// Viterbi over prefix positions. Ties keep the first candidate found, which
// is the one with the leftmost start and then the shortest piece.
double viterbi(const PieceTrie& trie, std::span<const double> logp, const CodePoints& text, std::int32_t exclude,
               double unk_score, std::vector<Step>* path) {
  const std::size_t n = text.size();
  std::vector<double> best(n + 1, kNegInf);
  std::vector<Step> back(n + 1);
  best[0] = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (best[i] == kNegInf) continue;
    bool has_single = false;
    trie.for_each_prefix(text, i, [&](std::size_t end, std::int32_t id) {
      if (id == exclude) return;
      if (end == i + 1) has_single = true;
      const double s = best[i] + logp[static_cast<std::size_t>(id)];
      if (s > best[end]) {
        best[end] = s;
        back[end] = {i, end, id};
      }
    });
    if (!has_single && unk_score > kNegInf) {
      const double s = best[i] + unk_score;
      if (s > best[i + 1]) {
        best[i + 1] = s;
        back[i + 1] = {i, i + 1, -1};
      }
    }
  }
  if (path) {
    path->clear();
    if (best[n] > kNegInf) {
      for (std::size_t e = n; e > 0; e = back[e].begin) path->push_back(back[e]);
      std::reverse(path->begin(), path->end());
    }
  }
  return best[n];
}

struct TrainPiece {
  CodePoints cps;
  std::string text;
  bool single = false;
  double count = 0.0;
  double logp = 0.0;
};

bool by_count_then_text(const std::pair<std::string, double>& a, const std::pair<std::string, double>& b) {
  if (a.second != b.second) return a.second > b.second;
  return a.first < b.first;  // UTF-8 byte order is code-point order
}

}  // namespace

std::int32_t PieceTrie::child(std::int32_t node, char32_t c) const {
  const auto& ch = nodes_[static_cast<std::size_t>(node)].children;
  const auto it = std::lower_bound(ch.begin(), ch.end(), c,
                                   [](const std::pair<char32_t, std::int32_t>& e, char32_t v) { return e.first < v; });
  return it != ch.end() && it->first == c ? it->second : -1;
}

void PieceTrie::insert(const CodePoints& piece, std::int32_t id) {
  std::int32_t node = 0;
  for (char32_t c : piece) {
    std::int32_t next = child(node, c);
    if (next < 0) {
      next = static_cast<std::int32_t>(nodes_.size());
      nodes_.emplace_back();
      auto& ch = nodes_[static_cast<std::size_t>(node)].children;
      const auto it = std::lower_bound(
          ch.begin(), ch.end(), c, [](const std::pair<char32_t, std::int32_t>& e, char32_t v) { return e.first < v; });
      ch.insert(it, {c, next});
    }
    node = next;
  }
  nodes_[static_cast<std::size_t>(node)].piece = id;
}

double best_segmentation_score(const PieceTrie& trie, std::span<const double> logp, const CodePoints& text,
                               std::int32_t exclude) {
  return viterbi(trie, logp, text, exclude, kNegInf, nullptr);
}

UnigramLM::UnigramLM(ScoredVocabulary v) : v_(std::move(v)) {
  if (v_.logp.size() != v_.vocab.size()) throw std::invalid_argument("UnigramLM: logp size mismatch");
  double min_lp = 0.0;
  for (std::size_t i = v_.vocab.special_count(); i < v_.vocab.size(); ++i) {
    trie_.insert(utf8_decode(v_.vocab.pieces()[i]), static_cast<std::int32_t>(i));
    min_lp = std::min(min_lp, v_.logp[i]);
  }
  unk_score_ = min_lp - kUnkPenalty;
}

Segmentation UnigramLM::encode(std::string_view text) const {
  const CodePoints cps = utf8_decode(text);
  std::vector<Step> path;
  Segmentation seg;
  seg.score = cps.empty() ? 0.0 : viterbi(trie_, v_.logp, cps, -1, unk_score_, &path);
  for (const auto& s : path) {
    seg.ids.push_back(s.id < 0 ? v_.vocab.unk() : s.id);
    seg.pieces.push_back(utf8_encode(CodePoints(cps.begin() + static_cast<std::ptrdiff_t>(s.begin),
                                                cps.begin() + static_cast<std::ptrdiff_t>(s.end))));
  }
  return seg;
}

Segmentation encode_unigram(const UnigramLM& lm, std::string_view text) { return lm.encode(text); }

UnigramLM train_unigram_vocab(const corpuslab::Corpus& corpus, std::size_t target_size, const UnigramOptions& opt,
                              UnigramTrainLog* log) {
  if (opt.max_piece_length < 1 || opt.em_iterations < 1 || !(opt.prune_fraction > 0.0 && opt.prune_fraction < 1.0) ||
      !(opt.count_floor > 0.0)) {
    throw std::invalid_argument("train_unigram_vocab: invalid options");
  }
  const Vocabulary specials(opt.languages);
  const std::size_t n_special = specials.special_count();
  if (target_size <= n_special) {
    throw std::invalid_argument("train_unigram_vocab: target size " + std::to_string(target_size) +
                                " leaves no room beyond " + std::to_string(n_special) + " special tokens");
  }
  const std::size_t piece_target = target_size - n_special;

  // Unique sentences in byte order, so accumulation order is a function of
  // code-point order only.
  std::map<std::string, double> uniq;
  for (const auto& doc : corpus.documents)
    for (const auto& s : doc)
      if (!s.empty()) uniq[s] += 1.0;
  if (uniq.empty()) throw std::invalid_argument("train_unigram_vocab: corpus is empty");
  std::vector<std::pair<CodePoints, double>> sents;
  sents.reserve(uniq.size());
  std::map<char32_t, double> char_count;
  for (const auto& [s, f] : uniq) {
    sents.emplace_back(utf8_decode(s), f);
    for (char32_t c : sents.back().first) char_count[c] += f;
  }
  if (char_count.size() > piece_target) {
    throw std::invalid_argument("train_unigram_vocab: target size " + std::to_string(target_size) + " is below the " +
                                std::to_string(char_count.size() + n_special) + " needed for " +
                                std::to_string(char_count.size()) + " characters plus specials");
  }

  // Seed candidates: every character plus the most frequent substrings.
  std::unordered_map<std::string, double> sub;
  for (const auto& [cps, f] : sents) {
    for (std::size_t i = 0; i < cps.size(); ++i) {
      std::string s;
      utf8_append(s, cps[i]);
      for (std::size_t len = 2; len <= opt.max_piece_length && i + len <= cps.size(); ++len) {
        utf8_append(s, cps[i + len - 1]);
        sub[s] += f;
      }
    }
  }
  std::vector<std::pair<std::string, double>> cands;
  for (auto& [s, c] : sub)
    if (c >= 2.0) cands.emplace_back(s, c);
  sub.clear();
  const auto pool = static_cast<std::size_t>(opt.seed_factor * static_cast<double>(target_size));
  const std::size_t keep = pool > char_count.size() ? std::min(cands.size(), pool - char_count.size()) : 0;
  std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(), by_count_then_text);
  cands.resize(keep);

  std::vector<TrainPiece> pieces;
  for (const auto& [c, n] : char_count) {
    TrainPiece p;
    p.cps = {c};
    utf8_append(p.text, c);
    p.single = true;
    p.count = n;
    pieces.push_back(std::move(p));
  }
  for (auto& [s, n] : cands) {
    TrainPiece p;
    p.cps = utf8_decode(s);
    p.text = std::move(s);
    p.count = n;
    pieces.push_back(std::move(p));
  }
  {
    double total = 0.0;
    for (const auto& p : pieces) total += p.count;
    for (auto& p : pieces) p.logp = std::log(p.count / total);
  }

  std::vector<Step> path;
  std::vector<double> logp, counts;
  for (;;) {
    PieceTrie trie;
    for (std::size_t i = 0; i < pieces.size(); ++i) trie.insert(pieces[i].cps, static_cast<std::int32_t>(i));
    logp.resize(pieces.size());
    for (std::size_t i = 0; i < pieces.size(); ++i) logp[i] = pieces[i].logp;

    for (int it = 0; it < opt.em_iterations; ++it) {
      counts.assign(pieces.size(), 0.0);
      for (const auto& [cps, f] : sents) {
        viterbi(trie, logp, cps, -1, kNegInf, &path);
        for (const auto& s : path) counts[static_cast<std::size_t>(s.id)] += f;
      }
      double total = 0.0;
      for (double c : counts) total += c + opt.count_floor;
      double mass = 0.0;
      for (std::size_t i = 0; i < pieces.size(); ++i) {
        logp[i] = std::log((counts[i] + opt.count_floor) / total);
        mass += std::exp(logp[i]);
      }
      if (log) {
        log->max_normalization_error = std::max(log->max_normalization_error, std::abs(mass - 1.0));
        ++log->em_steps;
      }
    }
    for (std::size_t i = 0; i < pieces.size(); ++i) {
      pieces[i].logp = logp[i];
      pieces[i].count = counts[i];
    }
    if (pieces.size() <= piece_target) break;

    std::vector<double> loss(pieces.size(), 0.0);
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < pieces.size(); ++i) {
      if (pieces[i].single) continue;
      const double alt = best_segmentation_score(trie, logp, pieces[i].cps, static_cast<std::int32_t>(i));
      loss[i] = pieces[i].count * (pieces[i].logp - alt);
      order.push_back(i);
    }
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (loss[a] != loss[b]) return loss[a] < loss[b];
      return pieces[a].text < pieces[b].text;
    });
    std::size_t n_prune = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::floor(opt.prune_fraction * static_cast<double>(pieces.size()))));
    n_prune = std::min({n_prune, pieces.size() - piece_target, order.size()});

    std::vector<bool> drop(pieces.size(), false);
    for (std::size_t k = 0; k < n_prune; ++k) drop[order[k]] = true;
    if (log) {
      PruneRound r;
      for (std::size_t i = 0; i < pieces.size(); ++i) {
        r.pieces.push_back(pieces[i].text);
        r.logp.push_back(pieces[i].logp);
        r.counts.push_back(pieces[i].count);
        r.loss.push_back(loss[i]);
        if (drop[i]) r.pruned.push_back(pieces[i].text);
      }
      log->rounds.push_back(std::move(r));
    }
    std::vector<TrainPiece> kept;
    kept.reserve(pieces.size() - n_prune);
    for (std::size_t i = 0; i < pieces.size(); ++i)
      if (!drop[i]) kept.push_back(std::move(pieces[i]));
    pieces = std::move(kept);
  }

  std::sort(pieces.begin(), pieces.end(), [](const TrainPiece& a, const TrainPiece& b) {
    if (a.logp != b.logp) return a.logp > b.logp;
    return a.text < b.text;
  });
  ScoredVocabulary out{specials, std::vector<double>(n_special, 0.0)};
  for (auto& p : pieces) {
    out.vocab.add(p.text);
    out.logp.push_back(p.logp);
  }
  return UnigramLM(std::move(out));
}

}  // namespace xlab::tokenizers
