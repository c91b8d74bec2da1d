#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "xlab/pretrain/pretrain.hpp"

namespace xlab::pretrain {

void PretrainConfig::validate() const {
  auto unit = [](double x, const char* name) {
    if (!(x >= 0.0 && x <= 1.0)) {
      throw std::invalid_argument(std::string("pretrain config: ") + name + " must lie in [0,1]");
    }
  };
  unit(mask_rate, "mask_rate");
  unit(mask_token, "mask_token");
  unit(random_token, "random_token");
  unit(keep_token, "keep_token");
  unit(warmup_fraction, "warmup_fraction");
  if (std::abs(mask_token + random_token + keep_token - 1.0) > 1e-9) {
    throw std::invalid_argument("pretrain config: mask_token + random_token + keep_token must equal 1");
  }
  if (batch_size < 1) throw std::invalid_argument("pretrain config: batch_size must be >= 1");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw std::invalid_argument("pretrain config: lr must be finite and >= 0");
  if (!(smoothing >= 0.0) || !std::isfinite(smoothing)) {
    throw std::invalid_argument("pretrain config: smoothing must be finite and >= 0");
  }
  if (max_seq < 5) throw std::invalid_argument("pretrain config: max_seq must be >= 5");
  if (!(clip_norm >= 0.0)) throw std::invalid_argument("pretrain config: clip_norm must be >= 0");
}

nlohmann::json PretrainConfig::to_json() const {
  return {{"batch_size", batch_size},   {"lr", lr},
          {"steps", steps},             {"nsp", nsp},
          {"lang_id", lang_id},         {"smoothing", smoothing},
          {"mask_rate", mask_rate},     {"mask_token", mask_token},
          {"random_token", random_token}, {"keep_token", keep_token},
          {"max_seq", max_seq},         {"warmup_fraction", warmup_fraction},
          {"clip_norm", clip_norm},     {"checkpoint_every", checkpoint_every},
          {"seed", seed}};
}

PretrainConfig PretrainConfig::from_json(const nlohmann::json& j) {
  PretrainConfig c;
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr = j.value("lr", c.lr);
  c.steps = j.value("steps", c.steps);
  c.nsp = j.value("nsp", c.nsp);
  c.lang_id = j.value("lang_id", c.lang_id);
  c.smoothing = j.value("smoothing", c.smoothing);
  c.mask_rate = j.value("mask_rate", c.mask_rate);
  c.mask_token = j.value("mask_token", c.mask_token);
  c.random_token = j.value("random_token", c.random_token);
  c.keep_token = j.value("keep_token", c.keep_token);
  c.max_seq = j.value("max_seq", c.max_seq);
  c.warmup_fraction = j.value("warmup_fraction", c.warmup_fraction);
  c.clip_norm = j.value("clip_norm", c.clip_norm);
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  c.seed = j.value("seed", c.seed);
  return c;
}

ExampleBuilder::ExampleBuilder(const std::vector<LanguageCorpus>& corpora, const tokenizers::Tokenizer& tokenizer,
                               const PretrainConfig& config)
    : config_(config) {
  config_.validate();
  if (corpora.empty()) throw std::invalid_argument("pretrain: at least one language is required");
  const auto& vocab = tokenizer.vocab();
  cls_ = vocab.cls();
  mask_id_ = vocab.mask();
  pad_ = vocab.pad();
  special_count_ = vocab.special_count();
  vocab_size_ = vocab.size();
  if (vocab_size_ <= special_count_) throw std::invalid_argument("pretrain: vocabulary has no regular pieces");

  double z = 0.0;
  for (const auto& lc : corpora) {
    Lang lang;
    if (config_.lang_id) {
      try {
        lang.sep = vocab.sep_for(lc.code);
      } catch (const std::out_of_range&) {
        throw std::invalid_argument("pretrain: lang_id is on but the vocabulary has no " +
                                    tokenizers::lang_sep_token(lc.code));
      }
    } else {
      lang.sep = vocab.sep();
    }
    for (const auto& doc : lc.corpus.documents) {
      std::vector<Sentence> d;
      for (const auto& s : doc) {
        auto ids = tokenizer.encode(s);
        if (!ids.empty()) d.push_back(std::move(ids));
      }
      if (d.empty()) continue;
      const std::size_t di = lang.docs.size();
      for (std::size_t i = 0; i < d.size(); ++i) {
        lang.all.emplace_back(di, i);
        if (i + 1 < d.size()) lang.with_next.emplace_back(di, i);
      }
      lang.docs.push_back(std::move(d));
    }
    if (lang.all.empty()) throw std::invalid_argument("pretrain: corpus for language '" + lc.code + "' is empty");
    if (config_.nsp && lang.with_next.empty()) {
      throw std::invalid_argument("pretrain: NSP needs a document with two sentences in language '" + lc.code + "'");
    }
    const double w = std::pow(static_cast<double>(lang.all.size()), config_.smoothing);
    probs_.push_back(w);
    z += w;
    codes_.push_back(lc.code);
    langs_.push_back(std::move(lang));
  }
  double acc = 0.0;
  for (auto& p : probs_) {
    p /= z;
    acc += p;
    cumulative_.push_back(acc);
  }
}

std::size_t ExampleBuilder::pick_language(Rng& rng) const {
  const double u = rng.uniform();
  for (std::size_t i = 0; i + 1 < cumulative_.size(); ++i)
    if (u < cumulative_[i]) return i;
  return cumulative_.size() - 1;
}

TrainingExample ExampleBuilder::example(std::uint64_t index) const {
  Rng rng(derive_seed(config_.seed, {index}));
  const std::size_t li = pick_language(rng);
  const Lang& lang = langs_[li];
  TrainingExample ex;
  auto append = [](Sentence& dst, const Sentence& src) { dst.insert(dst.end(), src.begin(), src.end()); };

  if (config_.nsp) {
    const std::size_t budget = config_.max_seq - 3;
    const auto [d, i] = lang.with_next[rng.index(lang.with_next.size())];
    const auto& doc = lang.docs[d];
    Sentence a = doc[i];
    std::size_t j = i + 1;
    while (j + 1 < doc.size() && a.size() + doc[j].size() <= budget / 2) append(a, doc[j++]);

    Sentence b;
    const bool is_next = rng.uniform() < 0.5;
    std::size_t bd = d, bi = j;
    if (!is_next) {
      // A random sentence from another document of the same language.
      for (;;) {
        std::tie(bd, bi) = lang.all[rng.index(lang.all.size())];
        if (lang.docs.size() > 1 ? bd != d : bi != j) break;
        if (lang.all.size() < 3) break;
      }
    }
    const auto& bdoc = lang.docs[bd];
    b = bdoc[bi];
    for (std::size_t k = bi + 1; k < bdoc.size() && a.size() + b.size() + bdoc[k].size() <= budget; ++k) {
      append(b, bdoc[k]);
    }
    while (a.size() + b.size() > budget) (a.size() >= b.size() ? a : b).pop_back();

    ex.tokens.push_back(cls_);
    ex.tokens.insert(ex.tokens.end(), a.begin(), a.end());
    ex.tokens.push_back(lang.sep);
    ex.segments.assign(ex.tokens.size(), 0);
    ex.tokens.insert(ex.tokens.end(), b.begin(), b.end());
    ex.tokens.push_back(lang.sep);
    ex.segments.resize(ex.tokens.size(), 1);
    ex.is_next = is_next;
    ex.segment_languages = {codes_[li], codes_[li]};
  } else {
    const std::size_t budget = config_.max_seq - 2;
    const auto [d, i] = lang.all[rng.index(lang.all.size())];
    const auto& doc = lang.docs[d];
    Sentence s = doc[i];
    for (std::size_t k = i + 1; k < doc.size() && s.size() + doc[k].size() <= budget; ++k) append(s, doc[k]);
    if (s.size() > budget) s.resize(budget);
    ex.tokens.push_back(cls_);
    ex.tokens.insert(ex.tokens.end(), s.begin(), s.end());
    ex.tokens.push_back(lang.sep);
    ex.segments.assign(ex.tokens.size(), 0);
    ex.segment_languages = {codes_[li]};
  }
  mask(ex, rng);
  return ex;
}

void ExampleBuilder::mask(TrainingExample& ex, Rng& rng) const {
  std::vector<std::size_t> maskable;
  for (std::size_t p = 0; p < ex.tokens.size(); ++p)
    if (static_cast<std::size_t>(ex.tokens[p]) >= special_count_) maskable.push_back(p);
  // Stochastic rounding keeps the expected masked fraction at mask_rate.
  const auto n = std::min(maskable.size(), static_cast<std::size_t>(std::floor(
                                               config_.mask_rate * static_cast<double>(maskable.size()) + rng.uniform())));
  for (std::size_t k = 0; k < n; ++k) std::swap(maskable[k], maskable[k + rng.index(maskable.size() - k)]);
  maskable.resize(n);
  std::sort(maskable.begin(), maskable.end());
  for (std::size_t p : maskable) {
    ex.masked_positions.push_back(p);
    ex.masked_labels.push_back(ex.tokens[p]);
    const double r = rng.uniform();
    if (r < config_.mask_token) {
      ex.tokens[p] = mask_id_;
    } else if (r < config_.mask_token + config_.random_token) {
      ex.tokens[p] = static_cast<std::int32_t>(special_count_ + rng.index(vocab_size_ - special_count_));
    }
  }
}

std::vector<TrainingExample> ExampleBuilder::batch(std::uint64_t first, std::size_t count) const {
  std::vector<TrainingExample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(example(first + i));
  return out;
}

CollatedBatch collate(const std::vector<TrainingExample>& examples, std::int32_t pad_id) {
  CollatedBatch cb;
  std::size_t seq = 0;
  for (const auto& e : examples) seq = std::max(seq, e.tokens.size());
  cb.batch.batch = examples.size();
  cb.batch.seq = seq;
  const std::size_t n = examples.size() * seq;
  cb.batch.tokens.assign(n, pad_id);
  cb.batch.segments.assign(n, 0);
  cb.batch.mask.assign(n, 0);
  for (std::size_t b = 0; b < examples.size(); ++b) {
    const auto& e = examples[b];
    for (std::size_t p = 0; p < e.tokens.size(); ++p) {
      cb.batch.tokens[b * seq + p] = e.tokens[p];
      cb.batch.segments[b * seq + p] = e.segments[p];
      cb.batch.mask[b * seq + p] = 1;
    }
    for (std::size_t k = 0; k < e.masked_positions.size(); ++k) {
      cb.masked_rows.push_back(b * seq + e.masked_positions[k]);
      cb.masked_labels.push_back(e.masked_labels[k]);
    }
    if (e.is_next) cb.nsp_labels.push_back(*e.is_next ? 1 : 0);
  }
  if (!cb.nsp_labels.empty() && cb.nsp_labels.size() != examples.size()) {
    throw std::invalid_argument("collate: mixed NSP and non-NSP examples");
  }
  return cb;
}

}  // namespace xlab::pretrain
