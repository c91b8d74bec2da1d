#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "probes_internal.hpp"
#include "xlab/common/digest.hpp"

namespace xlab::probes {

namespace {

// "B-X" -> ('B', "X"); "O" -> ('O', ""). Anything else is rejected.
std::pair<char, std::string> split_tag(const std::string& tag) {
  if (tag == "O") return {'O', ""};
  if (tag.size() > 2 && (tag[0] == 'B' || tag[0] == 'I') && tag[1] == '-') return {tag[0], tag.substr(2)};
  return {'?', ""};
}

// Empty when valid, else the reason.
std::string bio_error(std::span<const std::string> tags, std::size_t i) {
  const auto [kind, type] = split_tag(tags[i]);
  if (kind == '?') return "tag '" + tags[i] + "' is not O, B-X or I-X";
  if (kind == 'I') {
    const auto prev = i ? split_tag(tags[i - 1]) : std::pair<char, std::string>{'O', ""};
    if (prev.first == 'O' || prev.second != type) {
      return "tag '" + tags[i] + "' does not continue a " + type + " span";
    }
  }
  return {};
}

}  // namespace

void validate_bio(std::span<const std::string> tags) {
  for (std::size_t i = 0; i < tags.size(); ++i) {
    const auto err = bio_error(tags, i);
    if (!err.empty()) throw std::invalid_argument("invalid BIO at position " + std::to_string(i + 1) + ": " + err);
  }
}

std::vector<TaggedSentence> parse_conll(std::string_view text) {
  std::vector<TaggedSentence> out;
  TaggedSentence cur;
  std::vector<std::size_t> lines;
  auto flush = [&] {
    if (cur.tokens.empty()) return;
    for (std::size_t i = 0; i < cur.tags.size(); ++i) {
      const auto err = bio_error(cur.tags, i);
      if (!err.empty()) throw std::invalid_argument("CoNLL line " + std::to_string(lines[i]) + ": " + err);
    }
    out.push_back(std::move(cur));
    cur = {};
    lines.clear();
  };
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      flush();
      continue;
    }
    const auto tab = line.rfind('\t');
    if (tab == std::string::npos || tab == 0 || tab + 1 == line.size()) {
      throw std::invalid_argument("CoNLL line " + std::to_string(lineno) + ": expected 'token<TAB>tag'");
    }
    cur.tokens.push_back(line.substr(0, tab));
    cur.tags.push_back(line.substr(tab + 1));
    lines.push_back(lineno);
  }
  flush();
  return out;
}

std::vector<TaggedSentence> load_conll(const std::filesystem::path& path) {
  try {
    return parse_conll(read_file(path));
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
}

std::string format_conll(const std::vector<TaggedSentence>& sentences) {
  std::string out;
  for (const auto& s : sentences) {
    for (std::size_t i = 0; i < s.tokens.size(); ++i) out += s.tokens[i] + "\t" + s.tags[i] + "\n";
    out += "\n";
  }
  return out;
}

std::vector<Span> bio_spans(std::span<const std::string> tags) {
  std::vector<Span> out;
  bool open = false;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    const auto [kind, type] = split_tag(tags[i]);
    const bool continues = kind == 'I' && open && out.back().type == type;
    if (continues) {
      out.back().end = i + 1;
    } else if (kind == 'B' || kind == 'I') {
      out.push_back({i, i + 1, type});
      open = true;
    } else {
      open = false;
    }
  }
  return out;
}

SpanScore span_f1(const std::vector<std::vector<std::string>>& gold, const std::vector<std::vector<std::string>>& pred) {
  if (gold.size() != pred.size()) throw std::invalid_argument("span_f1: sentence counts differ");
  SpanScore s;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (gold[i].size() != pred[i].size()) {
      throw std::invalid_argument("span_f1: sentence " + std::to_string(i + 1) + " lengths differ");
    }
    const auto g = bio_spans(gold[i]);
    const auto p = bio_spans(pred[i]);
    std::size_t tp = 0;
    for (const auto& sp : p) tp += std::find(g.begin(), g.end(), sp) != g.end();
    s.true_positives += tp;
    s.false_positives += p.size() - tp;
    s.false_negatives += g.size() - tp;
  }
  const double tp = static_cast<double>(s.true_positives);
  s.precision = s.true_positives ? tp / static_cast<double>(s.true_positives + s.false_positives) : 0.0;
  s.recall = s.true_positives ? tp / static_cast<double>(s.true_positives + s.false_negatives) : 0.0;
  s.f1 = s.precision + s.recall > 0 ? 2 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  return s;
}

std::vector<num::Tensor<float>> extract_word_features(Model& encoder, const tokenizers::Tokenizer& tok,
                                                      const std::vector<std::vector<std::string>>& sentences) {
  const auto& v = tok.vocab();
  const std::size_t H = encoder.config.hidden;
  std::vector<num::Tensor<float>> out;
  out.reserve(sentences.size());
  constexpr std::size_t kChunk = 32;
  for (std::size_t first = 0; first < sentences.size(); first += kChunk) {
    const std::size_t last = std::min(sentences.size(), first + kChunk);
    std::vector<std::vector<std::int32_t>> toks;
    std::vector<std::vector<std::size_t>> heads;
    for (std::size_t s = first; s < last; ++s) {
      std::vector<std::int32_t> ids{v.cls()};
      std::vector<std::size_t> h;
      for (std::size_t w = 0; w < sentences[s].size(); ++w) {
        auto pieces = tok.encode((w ? " " : "") + sentences[s][w]);
        if (pieces.empty()) pieces.push_back(v.unk());
        h.push_back(ids.size());
        ids.insert(ids.end(), pieces.begin(), pieces.end());
      }
      ids.push_back(v.sep());
      if (ids.size() > encoder.config.max_positions) {
        throw std::invalid_argument("extract_word_features: sentence " + std::to_string(s + 1) + " needs " +
                                    std::to_string(ids.size()) + " positions, the encoder has " +
                                    std::to_string(encoder.config.max_positions));
      }
      toks.push_back(std::move(ids));
      heads.push_back(std::move(h));
    }
    const auto batch = detail::pack(toks, {}, v.pad());
    num::Graph<float> g(false);
    const auto enc = encoder::forward(g, encoder::bind(g, encoder), batch);
    const auto& hv = enc.hidden.value();
    for (std::size_t b = 0; b < toks.size(); ++b) {
      num::Tensor<float> f({heads[b].size(), H});
      for (std::size_t w = 0; w < heads[b].size(); ++w) {
        const float* row = hv.row(b * batch.seq + heads[b][w]);
        std::copy(row, row + H, f.row(w));
      }
      out.push_back(std::move(f));
    }
  }
  return out;
}

namespace {

num::Var<float> emissions(num::Graph<float>& g, const encoder::Bound<float>& P, const num::Tensor<float>& features) {
  auto linear = [&](num::Var<float> x, const std::string& name) {
    return num::add_bias(num::matmul(x, P[name + ".weight"]), P[name + ".bias"]);
  };
  const std::size_t L = features.rows();
  const auto x = g.constant(features);
  const std::vector<std::uint8_t> keys(L, 1);
  const auto a = num::attention(linear(x, "mixer.q"), linear(x, "mixer.k"), linear(x, "mixer.v"), {1, L, 1},
                                std::span<const std::uint8_t>(keys));
  const auto h = num::layer_norm(num::add(x, linear(a, "mixer.o")), P["mixer.ln.gamma"], P["mixer.ln.beta"]);
  return linear(h, "emit");
}

}  // namespace

CrfTransitions<float> Tagger::crf() const {
  CrfTransitions<float> c;
  c.tags = tagset.size();
  c.transitions = params.at("crf.transitions").data;
  c.start = params.at("crf.start").data;
  c.end = params.at("crf.end").data;
  return c;
}

Tagger train_tagger(const std::vector<num::Tensor<float>>& features, const std::vector<TaggedSentence>& sentences,
                    const TaggerHyper& hyper) {
  if (features.size() != sentences.size()) throw std::invalid_argument("train_tagger: features and sentences differ");
  if (sentences.empty()) throw std::invalid_argument("train_tagger: no training sentences");
  if (hyper.batch_size == 0) throw std::invalid_argument("train_tagger: batch_size must be >= 1");
  std::set<std::string> seen;
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    const auto& s = sentences[i];
    if (s.tags.size() != s.tokens.size() || features[i].rows() != s.tags.size() || s.tags.empty()) {
      throw std::invalid_argument("train_tagger: sentence " + std::to_string(i + 1) + " has inconsistent lengths");
    }
    validate_bio(s.tags);
    for (const auto& t : s.tags)
      if (t != "O") seen.insert(t);
  }
  Tagger tg;
  tg.tagset.push_back("O");
  tg.tagset.insert(tg.tagset.end(), seen.begin(), seen.end());
  const std::size_t H = features.front().cols(), K = tg.tagset.size();
  const auto seed = stage_seed(hyper.seed, "tagger");
  auto& m = tg.params;
  for (const char* w : {"mixer.q", "mixer.k", "mixer.v", "mixer.o"}) {
    m.add(std::string(w) + ".weight", detail::init_weight({H, H}, seed, std::string(w) + ".weight"));
    m.add(std::string(w) + ".bias", num::Tensor<float>({H}));
  }
  m.add("mixer.ln.gamma", num::Tensor<float>({H}, 1.0f));
  m.add("mixer.ln.beta", num::Tensor<float>({H}));
  m.add("emit.weight", detail::init_weight({H, K}, seed, "emit.weight"));
  m.add("emit.bias", num::Tensor<float>({K}));
  m.add("crf.transitions", num::Tensor<float>({K, K}));
  m.add("crf.start", num::Tensor<float>({K}));
  m.add("crf.end", num::Tensor<float>({K}));

  std::vector<std::vector<int>> gold;
  for (const auto& s : sentences) {
    std::vector<int> ids;
    for (const auto& t : s.tags) {
      ids.push_back(static_cast<int>(std::find(tg.tagset.begin(), tg.tagset.end(), t) - tg.tagset.begin()));
    }
    gold.push_back(std::move(ids));
  }
  auto params = m.params();
  const std::span<const num::ParamRef<float>> ps(params);
  num::AdamState<float> adam;
  adam.lr = hyper.lr;
  Rng order(derive_seed(seed, {fnv1a64("order")}));
  std::vector<std::size_t> perm(sentences.size());
  for (std::size_t epoch = 0; epoch < hyper.epochs; ++epoch) {
    std::iota(perm.begin(), perm.end(), 0);
    order.shuffle(perm.begin(), perm.end());
    for (std::size_t first = 0; first < perm.size(); first += hyper.batch_size) {
      const std::size_t last = std::min(perm.size(), first + hyper.batch_size);
      num::zero_grads(ps);
      num::Graph<float> g;
      const auto P = encoder::bind(g, m);
      num::Var<float> total;
      for (std::size_t i = first; i < last; ++i) {
        const auto e = emissions(g, P, features[perm[i]]);
        const auto nll = crf_nll(e, P["crf.transitions"], P["crf.start"], P["crf.end"],
                                 std::span<const int>(gold[perm[i]]));
        total = total.valid() ? num::add(total, nll) : nll;
      }
      g.backward(num::scale(total, 1.0f / static_cast<float>(last - first)));
      num::adam_step(ps, adam);
    }
  }
  return tg;
}

std::vector<std::vector<std::string>> predict_tags(Tagger& tagger, const std::vector<num::Tensor<float>>& features) {
  const auto crf = tagger.crf();
  std::vector<std::vector<std::string>> out;
  out.reserve(features.size());
  for (const auto& f : features) {
    if (f.rows() == 0) {
      out.emplace_back();
      continue;
    }
    num::Graph<float> g(false);
    const auto e = emissions(g, encoder::bind(g, tagger.params), f);
    const auto path = crf_viterbi(crf, std::span<const float>(e.value().data));
    std::vector<std::string> tags;
    for (int t : path.tags) tags.push_back(tagger.tagset[static_cast<std::size_t>(t)]);
    out.push_back(std::move(tags));
  }
  return out;
}

std::vector<TaggerReport> tagger_reports(const std::vector<num::Tensor<float>>& train_features,
                                         const std::vector<TaggedSentence>& train, const std::vector<TaggerTestSet>& tests,
                                         const TaggerHyper& hyper, std::size_t seeds) {
  if (seeds == 0) throw std::invalid_argument("tagger_report: at least one seed is required");
  std::vector<std::vector<std::vector<std::string>>> gold(tests.size());
  for (std::size_t t = 0; t < tests.size(); ++t) {
    for (const auto& s : *tests[t].sentences) {
      validate_bio(s.tags);
      gold[t].push_back(s.tags);
    }
  }
  std::vector<TaggerReport> out(tests.size());
  for (std::size_t i = 0; i < seeds; ++i) {
    TaggerHyper h = hyper;
    h.seed = derive_seed(hyper.seed, {i});
    auto tagger = train_tagger(train_features, train, h);
    for (std::size_t t = 0; t < tests.size(); ++t) {
      out[t].f1.push_back(span_f1(gold[t], predict_tags(tagger, *tests[t].features)).f1);
    }
  }
  for (auto& r : out) {
    r.mean = std::accumulate(r.f1.begin(), r.f1.end(), 0.0) / static_cast<double>(seeds);
    if (seeds > 1) {
      double ss = 0.0;
      for (double f : r.f1) ss += (f - r.mean) * (f - r.mean);
      r.stdev = std::sqrt(ss / static_cast<double>(seeds - 1));
    }
  }
  return out;
}

TaggerReport tagger_report(const std::vector<num::Tensor<float>>& train_features,
                           const std::vector<TaggedSentence>& train,
                           const std::vector<num::Tensor<float>>& test_features,
                           const std::vector<TaggedSentence>& test, const TaggerHyper& hyper, std::size_t seeds) {
  return tagger_reports(train_features, train, {{&test_features, &test}}, hyper, seeds).front();
}

// ---------------------------------------------------------------------------

std::vector<std::vector<float>> sentence_vectors(Model& encoder, const tokenizers::Tokenizer& tok,
                                                 const std::vector<std::string>& sentences) {
  const auto& v = tok.vocab();
  const std::size_t H = encoder.config.hidden;
  std::vector<std::vector<float>> out;
  out.reserve(sentences.size());
  constexpr std::size_t kChunk = 32;
  for (std::size_t first = 0; first < sentences.size(); first += kChunk) {
    const std::size_t last = std::min(sentences.size(), first + kChunk);
    std::vector<std::vector<std::int32_t>> toks;
    for (std::size_t s = first; s < last; ++s) {
      auto ids = tok.encode(sentences[s]);
      if (ids.size() + 2 > encoder.config.max_positions) ids.resize(encoder.config.max_positions - 2);
      ids.insert(ids.begin(), v.cls());
      ids.push_back(v.sep());
      toks.push_back(std::move(ids));
    }
    const auto batch = detail::pack(toks, {}, v.pad());
    num::Graph<float> g(false);
    const auto& hv = encoder::forward(g, encoder::bind(g, encoder), batch).hidden.value();
    for (std::size_t b = 0; b < toks.size(); ++b) {
      std::vector<double> acc(H, 0.0);
      const std::size_t n = toks[b].size() - 2;
      for (std::size_t p = 1; p <= n; ++p) {
        const float* row = hv.row(b * batch.seq + p);
        for (std::size_t j = 0; j < H; ++j) acc[j] += row[j];
      }
      std::vector<float> vec(H, 0.0f);
      if (n) {
        for (std::size_t j = 0; j < H; ++j) vec[j] = static_cast<float>(acc[j] / static_cast<double>(n));
      }
      out.push_back(std::move(vec));
    }
  }
  return out;
}

RetrievalReport retrieval_accuracy(const std::vector<std::vector<float>>& queries,
                                   const std::vector<std::vector<float>>& candidates, std::size_t k) {
  if (k == 0) throw std::invalid_argument("retrieval: k must be >= 1");
  if (queries.size() != candidates.size()) throw std::invalid_argument("retrieval: pair lists differ in length");
  if (candidates.size() < k) {
    throw std::invalid_argument("retrieval: " + std::to_string(candidates.size()) + " candidates, fewer than k = " +
                                std::to_string(k));
  }
  auto unit = [](const std::vector<float>& v) {
    double n = 0.0;
    for (float x : v) n += static_cast<double>(x) * x;
    n = std::sqrt(n);
    std::vector<double> u(v.size(), 0.0);
    if (n > 0)
      for (std::size_t i = 0; i < v.size(); ++i) u[i] = v[i] / n;
    return u;
  };
  std::vector<std::vector<double>> q, c;
  for (const auto& v : queries) q.push_back(unit(v));
  for (const auto& v : candidates) c.push_back(unit(v));
  const std::size_t n = q.size();
  auto cosine = [](const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw std::invalid_argument("retrieval: vector dimensions differ");
    return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
  };
  std::size_t hit1 = 0, hit3 = 0, hitk = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double truth = cosine(q[i], c[i]);
    std::size_t rank = 1;
    for (std::size_t j = 0; j < n; ++j) rank += j != i && cosine(q[i], c[j]) > truth;
    hit1 += rank <= 1;
    hit3 += rank <= 3;
    hitk += rank <= k;
  }
  const double dn = static_cast<double>(n);
  return {hit1 / dn, hit3 / dn, hitk / dn, k, n};
}

RetrievalReport intrinsic_retrieval(Model& encoder, const tokenizers::Tokenizer& tok,
                                    const std::vector<std::pair<std::string, std::string>>& pairs, std::size_t k) {
  std::vector<std::string> a, b;
  for (const auto& [x, y] : pairs) a.push_back(x), b.push_back(y);
  return retrieval_accuracy(sentence_vectors(encoder, tok, a), sentence_vectors(encoder, tok, b), k);
}

}  // namespace xlab::probes
