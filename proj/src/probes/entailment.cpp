#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "probes_internal.hpp"
#include "xlab/common/digest.hpp"

namespace xlab::probes {

namespace detail {

encoder::Batch pack(const std::vector<std::vector<std::int32_t>>& tokens,
                    const std::vector<std::vector<std::int32_t>>& segments, std::int32_t pad) {
  encoder::Batch b;
  b.batch = tokens.size();
  for (const auto& t : tokens) b.seq = std::max(b.seq, t.size());
  const std::size_t n = b.batch * b.seq;
  b.tokens.assign(n, pad);
  b.segments.assign(n, 0);
  b.mask.assign(n, 0);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    for (std::size_t p = 0; p < tokens[i].size(); ++p) {
      b.tokens[i * b.seq + p] = tokens[i][p];
      b.segments[i * b.seq + p] = segments.empty() ? 0 : segments[i][p];
      b.mask[i * b.seq + p] = 1;
    }
  }
  return b;
}

num::Tensor<float> init_weight(num::Shape shape, std::uint64_t seed, const std::string& name) {
  num::Tensor<float> t(std::move(shape));
  Rng rng(derive_seed(seed, {fnv1a64(name)}));
  for (auto& x : t.data) x = static_cast<float>(rng.truncated_normal(0.02));
  return t;
}

}  // namespace detail

namespace {

std::vector<std::string> split_tabs(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto p = line.find('\t', start);
    out.emplace_back(line.substr(start, p == std::string_view::npos ? std::string_view::npos : p - start));
    if (p == std::string_view::npos) return out;
    start = p + 1;
  }
}

struct Encoded {
  std::vector<std::int32_t> tokens;
  std::vector<std::int32_t> segments;
};

Encoded encode_pair(const tokenizers::Tokenizer& tok, std::string_view premise, std::string_view hypothesis,
                    const std::string& plang, const std::string& hlang, const EntailmentHyper& h,
                    std::size_t max_positions) {
  const auto& v = tok.vocab();
  auto a = tok.encode(premise);
  auto b = tok.encode(hypothesis);
  const std::size_t budget = std::min(h.max_seq, max_positions) - 3;
  while (a.size() + b.size() > budget) (a.size() >= b.size() ? a : b).pop_back();
  const auto sep_a = h.language_separators ? v.sep_for(plang) : v.sep();
  const auto sep_b = h.language_separators ? v.sep_for(hlang) : v.sep();
  Encoded e;
  e.tokens.push_back(v.cls());
  e.tokens.insert(e.tokens.end(), a.begin(), a.end());
  e.tokens.push_back(sep_a);
  e.segments.assign(e.tokens.size(), 0);
  e.tokens.insert(e.tokens.end(), b.begin(), b.end());
  e.tokens.push_back(sep_b);
  e.segments.resize(e.tokens.size(), 1);
  return e;
}

num::Var<float> class_logits(num::Graph<float>& g, Model& m, const encoder::Batch& batch) {
  auto P = encoder::bind(g, m);
  const auto enc = encoder::forward(g, P, batch);
  return num::add_bias(num::matmul(enc.pooled, P["cls.weight"]), P["cls.bias"]);
}

std::vector<EntailmentLabel> predict_encoded(EntailmentClassifier& clf, const tokenizers::Tokenizer& tok,
                                             const std::vector<Encoded>& items) {
  std::vector<EntailmentLabel> out;
  out.reserve(items.size());
  const std::size_t chunk = std::max<std::size_t>(clf.hyper.batch_size, 1);
  for (std::size_t first = 0; first < items.size(); first += chunk) {
    const std::size_t last = std::min(items.size(), first + chunk);
    std::vector<std::vector<std::int32_t>> toks, segs;
    for (std::size_t i = first; i < last; ++i) toks.push_back(items[i].tokens), segs.push_back(items[i].segments);
    num::Graph<float> g(false);
    const auto logits = class_logits(g, clf.model, detail::pack(toks, segs, tok.vocab().pad()));
    const auto& lv = logits.value();
    for (std::size_t r = 0; r < lv.rows(); ++r) {
      const float* row = lv.row(r);
      out.push_back(static_cast<EntailmentLabel>(std::max_element(row, row + 3) - row));
    }
  }
  return out;
}

}  // namespace

std::vector<EntailmentExample> parse_entailment_tsv(std::string_view text, const std::string& language) {
  std::vector<EntailmentExample> out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cols = split_tabs(line);
    if (cols.size() != 3) {
      throw std::invalid_argument("entailment TSV line " + std::to_string(lineno) + ": expected 3 columns, got " +
                                  std::to_string(cols.size()));
    }
    EntailmentExample e;
    e.premise = cols[0];
    e.hypothesis = cols[1];
    try {
      e.label = corpuslab::toy::parse_label(cols[2]);
    } catch (const std::invalid_argument&) {
      throw std::invalid_argument("entailment TSV line " + std::to_string(lineno) + ": label '" + cols[2] +
                                  "' is not entailment, contradiction or neutral");
    }
    e.premise_language = e.hypothesis_language = language;
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<EntailmentExample> load_entailment_tsv(const std::filesystem::path& path, const std::string& language) {
  try {
    return parse_entailment_tsv(read_file(path), language);
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
}

std::string format_entailment_tsv(const std::vector<EntailmentExample>& examples) {
  std::string out;
  for (const auto& e : examples) {
    out += e.premise + "\t" + e.hypothesis + "\t" + corpuslab::toy::label_name(e.label) + "\n";
  }
  return out;
}

AlignedEntailmentSet align_entailment(const std::map<std::string, std::vector<EntailmentExample>>& by_language) {
  AlignedEntailmentSet set;
  if (by_language.empty()) throw std::invalid_argument("align_entailment: no languages given");
  const auto& [first_lang, first] = *by_language.begin();
  for (const auto& e : first) set.labels.push_back(e.label);
  for (const auto& [lang, items] : by_language) {
    if (items.size() != set.labels.size()) {
      throw std::invalid_argument("align_entailment: '" + lang + "' has " + std::to_string(items.size()) +
                                  " examples, '" + first_lang + "' has " + std::to_string(set.labels.size()));
    }
    auto& texts = set.texts[lang];
    for (std::size_t i = 0; i < items.size(); ++i) {
      if (items[i].label != set.labels[i]) {
        throw std::invalid_argument("align_entailment: label of example " + std::to_string(i + 1) + " in '" + lang +
                                    "' differs from '" + first_lang + "'");
      }
      texts.emplace_back(items[i].premise, items[i].hypothesis);
    }
  }
  return set;
}

EntailmentClassifier finetune_entailment(const Model& encoder, const tokenizers::Tokenizer& tok,
                                         const std::vector<EntailmentExample>& train, const EntailmentHyper& hyper) {
  if (hyper.batch_size == 0) throw std::invalid_argument("finetune_entailment: batch_size must be >= 1");
  if (hyper.max_seq < 4) throw std::invalid_argument("finetune_entailment: max_seq must be >= 4");
  if (tok.vocab().size() != encoder.config.vocab_size) {
    throw std::invalid_argument("finetune_entailment: tokenizer vocabulary does not match the checkpoint");
  }
  for (const auto& e : train) {
    if (static_cast<int>(e.label) > 2) throw std::invalid_argument("finetune_entailment: label outside the 3-way set");
    if (e.premise_language != train.front().premise_language ||
        e.hypothesis_language != train.front().hypothesis_language) {
      throw std::invalid_argument("finetune_entailment: training examples must share one language");
    }
  }
  EntailmentClassifier clf{encoder, hyper};
  const std::size_t H = encoder.config.hidden;
  const auto seed = stage_seed(hyper.seed, "finetune");
  clf.model.add("cls.weight", detail::init_weight({H, 3}, seed, "cls.weight"));
  clf.model.add("cls.bias", num::Tensor<float>({3}));

  std::vector<Encoded> items;
  std::vector<std::int32_t> labels;
  for (const auto& e : train) {
    items.push_back(encode_pair(tok, e.premise, e.hypothesis, e.premise_language, e.hypothesis_language, hyper,
                                encoder.config.max_positions));
    labels.push_back(static_cast<std::int32_t>(e.label));
  }
  auto params = clf.model.params();
  const std::span<const num::ParamRef<float>> ps(params);
  num::AdamState<float> adam;
  adam.lr = hyper.lr;
  Rng order(derive_seed(seed, {fnv1a64("order")}));
  std::vector<std::size_t> perm(items.size());
  for (std::size_t epoch = 0; epoch < hyper.epochs; ++epoch) {
    std::iota(perm.begin(), perm.end(), 0);
    order.shuffle(perm.begin(), perm.end());
    for (std::size_t first = 0; first < perm.size(); first += hyper.batch_size) {
      const std::size_t last = std::min(perm.size(), first + hyper.batch_size);
      std::vector<std::vector<std::int32_t>> toks, segs;
      std::vector<std::int32_t> y;
      for (std::size_t i = first; i < last; ++i) {
        toks.push_back(items[perm[i]].tokens);
        segs.push_back(items[perm[i]].segments);
        y.push_back(labels[perm[i]]);
      }
      num::zero_grads(ps);
      num::Graph<float> g;
      const auto loss = num::cross_entropy(class_logits(g, clf.model, detail::pack(toks, segs, tok.vocab().pad())),
                                           std::span<const std::int32_t>(y));
      g.backward(loss);
      if (hyper.clip_norm > 0) num::clip_grad_norm(ps, hyper.clip_norm);
      num::adam_step(ps, adam);
    }
  }
  return clf;
}

std::vector<EntailmentLabel> predict_entailment(EntailmentClassifier& clf, const tokenizers::Tokenizer& tok,
                                                const std::vector<EntailmentExample>& examples) {
  std::vector<Encoded> items;
  for (const auto& e : examples) {
    items.push_back(encode_pair(tok, e.premise, e.hypothesis, e.premise_language, e.hypothesis_language, clf.hyper,
                                clf.model.config.max_positions));
  }
  return predict_encoded(clf, tok, items);
}

EntailmentEval eval_entailment(EntailmentClassifier& clf, const tokenizers::Tokenizer& tok,
                               const AlignedEntailmentSet& set, const std::string& premise_language,
                               const std::string& hypothesis_language) {
  const auto p = set.texts.find(premise_language);
  const auto h = set.texts.find(hypothesis_language);
  if (p == set.texts.end() || h == set.texts.end()) {
    throw std::invalid_argument("eval_entailment: no translation for '" +
                                (p == set.texts.end() ? premise_language : hypothesis_language) + "'");
  }
  std::vector<Encoded> items;
  for (std::size_t i = 0; i < set.labels.size(); ++i) {
    items.push_back(encode_pair(tok, p->second[i].first, h->second[i].second, premise_language, hypothesis_language,
                                clf.hyper, clf.model.config.max_positions));
  }
  EntailmentEval ev;
  ev.premise_language = premise_language;
  ev.hypothesis_language = hypothesis_language;
  ev.gold = set.labels;
  ev.predicted = predict_encoded(clf, tok, items);
  ev.n = ev.gold.size();
  for (std::size_t i = 0; i < ev.n; ++i) ev.correct += ev.gold[i] == ev.predicted[i];
  ev.accuracy = ev.n ? static_cast<double>(ev.correct) / static_cast<double>(ev.n) : 0.0;
  return ev;
}

std::string format_prediction_dump(const EntailmentEval& ev) {
  std::string out = "index\tgold\tpredicted\n";
  for (std::size_t i = 0; i < ev.n; ++i) {
    out += std::to_string(i) + "\t" + corpuslab::toy::label_name(ev.gold[i]) + "\t" +
           corpuslab::toy::label_name(ev.predicted[i]) + "\n";
  }
  return out;
}

GapReport cross_lingual_gap(double perf_source, double perf_target) {
  return {perf_source, perf_target, perf_source - perf_target};
}

}  // namespace xlab::probes
