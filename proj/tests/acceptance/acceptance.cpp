// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance [--runs DIR] [--report FILE] [--quiet] [N ...]
//
// With no numbers every criterion runs. Trend runs (8-10) take tens of
// minutes on one core.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <set>

#include <boost/math/distributions/chi_squared.hpp>

#include "CLI11.hpp"
#include "xlab/common/digest.hpp"
#include "xlab/common/random.hpp"
#include "xlab/common/unicode.hpp"
#include "xlab/corpuslab/ablations.hpp"
#include "xlab/corpuslab/toyworld.hpp"
#include "xlab/lab/sweep.hpp"
#include "xlab/num/gradcheck.hpp"
#include "xlab/num/ops.hpp"

using namespace xlab;
namespace fs = std::filesystem;
namespace toy = corpuslab::toy;
using lab::json;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct Context {
  fs::path runs;
  lab::Log log;
  std::optional<lab::RunRecord> trend_a;
  double trend_a_seconds = 0.0;
  std::vector<lab::RunRecord> smoke;
  std::vector<lab::ExperimentConfig> smoke_configs;
};

// ---------------------------------------------------------------------------
// 1. Numerical core

num::Tensor<double> random_tensor(Rng& rng, num::Shape shape, double scale = 1.0) {
  num::Tensor<double> t(std::move(shape));
  for (auto& v : t.data) v = (rng.uniform() * 2.0 - 1.0) * scale;
  return t;
}

using Builder = std::function<num::Var<double>(num::Graph<double>&, std::vector<num::Var<double>>&)>;

// Projects the op's output to a scalar with fixed random weights.
num::GradCheckReport check_op(std::vector<num::Tensor<double>> tensors, const Builder& build) {
  Rng rng(99);
  std::vector<double> weights;
  std::vector<num::ParamRef<double>> refs;
  for (std::size_t i = 0; i < tensors.size(); ++i) refs.push_back({"p" + std::to_string(i), &tensors[i]});
  auto loss = [&](bool with_backward) {
    num::Graph<double> g(with_backward);
    std::vector<num::Var<double>> vars;
    for (auto& t : tensors) vars.push_back(g.param(t));
    auto out = build(g, vars);
    if (weights.size() != out.value().size()) {
      weights.resize(out.value().size());
      for (auto& w : weights) w = rng.uniform() * 2.0 - 1.0;
    }
    auto l = num::weighted_sum<double>(out, weights);
    if (with_backward) g.backward(l);
    return l.value().data[0];
  };
  num::GradCheckOptions opt;
  opt.tol = 1e-4;
  return num::grad_check(loss, refs, opt);
}

Outcome numerical_core(Context&) {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(5);
  std::vector<std::pair<std::string, num::GradCheckReport>> reports;
  reports.emplace_back("matmul", check_op({random_tensor(rng, {4, 5}), random_tensor(rng, {5, 3})},
                                          [](auto&, auto& v) { return num::matmul(v[0], v[1]); }));
  reports.emplace_back("matmul_nt", check_op({random_tensor(rng, {4, 5}), random_tensor(rng, {6, 5})},
                                             [](auto&, auto& v) { return num::matmul_nt(v[0], v[1]); }));
  reports.emplace_back("add", check_op({random_tensor(rng, {3, 4}), random_tensor(rng, {3, 4})},
                                       [](auto&, auto& v) { return num::add(v[0], v[1]); }));
  reports.emplace_back("add_bias", check_op({random_tensor(rng, {3, 4}), random_tensor(rng, {4})},
                                            [](auto&, auto& v) { return num::add_bias(v[0], v[1]); }));
  reports.emplace_back("scale", check_op({random_tensor(rng, {3, 4})}, [](auto&, auto& v) { return num::scale(v[0], 0.7); }));
  reports.emplace_back("gelu", check_op({random_tensor(rng, {5, 6}, 3.0)}, [](auto&, auto& v) { return num::gelu(v[0]); }));
  reports.emplace_back("tanh", check_op({random_tensor(rng, {5, 6}, 3.0)}, [](auto&, auto& v) { return num::tanh(v[0]); }));
  reports.emplace_back("layer_norm",
                       check_op({random_tensor(rng, {4, 7}, 2.0), random_tensor(rng, {7}), random_tensor(rng, {7})},
                                [](auto&, auto& v) { return num::layer_norm(v[0], v[1], v[2]); }));
  reports.emplace_back("softmax", check_op({random_tensor(rng, {3, 6}, 2.0)}, [](auto&, auto& v) { return num::softmax(v[0]); }));
  reports.emplace_back("embedding_lookup", check_op({random_tensor(rng, {6, 4})}, [](auto&, auto& v) {
                         static const std::vector<std::int32_t> ids{0, 3, 3, 5, 1};
                         return num::embedding_lookup(v[0], std::span<const std::int32_t>(ids));
                       }));
  reports.emplace_back("gather_rows", check_op({random_tensor(rng, {6, 4})}, [](auto&, auto& v) {
                         static const std::vector<std::size_t> rows{4, 1, 1};
                         return num::gather_rows(v[0], std::span<const std::size_t>(rows));
                       }));
  reports.emplace_back("cross_entropy", check_op({random_tensor(rng, {4, 5}, 2.0)}, [](auto&, auto& v) {
                         static const std::vector<std::int32_t> t{0, 4, 2, 2};
                         return num::cross_entropy(v[0], std::span<const std::int32_t>(t));
                       }));
  reports.emplace_back("mean", check_op({random_tensor(rng, {3, 5})}, [](auto&, auto& v) { return num::mean(v[0]); }));
  reports.emplace_back("attention", check_op({random_tensor(rng, {8, 6}), random_tensor(rng, {8, 6}), random_tensor(rng, {8, 6})},
                                             [](auto&, auto& v) {
                                               static const std::vector<std::uint8_t> mask{1, 1, 1, 1, 1, 1, 0, 0};
                                               return num::attention(v[0], v[1], v[2], num::AttentionShape{2, 4, 2},
                                                                     std::span<const std::uint8_t>(mask));
                                             }));
  reports.emplace_back("crf_nll", check_op({random_tensor(rng, {4, 3}, 2.0), random_tensor(rng, {3, 3}),
                                            random_tensor(rng, {3}), random_tensor(rng, {3})},
                                           [](auto&, auto& v) {
                                             static const std::vector<int> tags{0, 2, 2, 1};
                                             return probes::crf_nll(v[0], v[1], v[2], v[3], std::span<const int>(tags));
                                           }));

  // Full two-layer encoder MLM (+NSP) loss.
  encoder::EncoderConfig ec;
  ec.depth = 2;
  ec.heads = 2;
  ec.hidden = 8;
  ec.vocab_size = 24;
  ec.max_positions = 16;
  auto m = encoder::build<double>(ec, 13);
  Rng noise(1);
  for (auto& t : m.tensors)
    for (auto& x : t.data) x += 0.3 * noise.normal();
  encoder::Batch b;
  b.batch = 2;
  b.seq = 7;
  for (std::size_t i = 0; i < 14; ++i) {
    b.tokens.push_back(static_cast<std::int32_t>(5 + noise.index(19)));
    b.segments.push_back((i % 7) >= 4 ? 1 : 0);
    b.mask.push_back(i >= 12 ? 0 : 1);
  }
  const std::vector<std::size_t> rows{1, 3, 6, 8};
  const std::vector<std::int32_t> targets{4, 9, 0, 17}, nsp{1, 0};
  auto loss = [&](bool with_backward) {
    num::Graph<double> g(with_backward);
    auto P = encoder::bind(g, m);
    const auto enc = encoder::forward(g, P, b);
    const auto h = encoder::mlm_nsp_logits(g, P, enc, std::span<const std::size_t>(rows));
    auto l = num::add(num::cross_entropy(h.mlm_logits, std::span<const std::int32_t>(targets)),
                      num::cross_entropy(h.nsp_logits, std::span<const std::int32_t>(nsp)));
    if (with_backward) g.backward(l);
    return l.value().data[0];
  };
  auto params = m.params();
  num::GradCheckOptions opt;
  opt.tol = 1e-4;
  opt.samples = 600;
  reports.emplace_back("encoder MLM loss", num::grad_check(loss, params, opt));

  std::size_t checked = 0;
  double worst = 0.0;
  std::vector<std::string> failed;
  for (const auto& [name, r] : reports) {
    checked += r.checked;
    worst = std::max(worst, r.max_error);
    if (!r.passed()) failed.push_back(name);
  }
  const double secs = seconds_since(t0);
  std::string detail = fmt("%zu checks (%zu primitives + 2-layer encoder), %zu scalars, max rel err %.2e (tol 1e-4), %.1f s (< 120 s)",
                           reports.size(), reports.size() - 1, checked, worst, secs);
  for (const auto& f : failed) detail += "; FAILED " + f;
  return {failed.empty() && secs < 120.0, detail};
}

// ---------------------------------------------------------------------------
// 2. Parameter accounting

Outcome parameter_accounting(Context&) {
  encoder::EncoderConfig c;
  c.depth = 12;
  c.heads = 12;
  c.hidden = 768;
  c.vocab_size = 60000;
  c.max_positions = 512;
  const auto n = encoder::param_count(c);
  const auto built = encoder::build<float>(c, 0).scalar_count();
  const double rel = std::abs(static_cast<double>(n) - 132.78e6) / 132.78e6;
  return {n >= 131'500'000 && n <= 134'100'000 && rel < 0.01 && built == n,
          fmt("param_count = %zu (built %zu), range [131.5M, 134.1M], %.3f%% from 132.78M", n, built, 100 * rel)};
}

// ---------------------------------------------------------------------------
// 3. Tokenizer oracle

struct PieceTable {
  std::map<std::string, double> logp;
};

// Exhaustive: walks every segmentation into table pieces.
double enumerate_best(const std::string& s, std::size_t pos, double acc, const PieceTable& t) {
  if (pos == s.size()) return acc;
  double best = -INFINITY;
  for (std::size_t len = 1; pos + len <= s.size(); ++len) {
    const auto it = t.logp.find(s.substr(pos, len));
    if (it != t.logp.end()) best = std::max(best, enumerate_best(s, pos + len, acc + it->second, t));
  }
  return best;
}

Outcome tokenizer_oracle(Context&) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<std::string> pieces{"a", "b", "c", "ab", "bc", "ca", "aa", "abc", "cab", "bca", "cc", "aab"};
  std::size_t cases = 0, bad = 0;
  double worst = 0.0;
  for (std::uint64_t seed : {1u, 2u}) {
    Rng rng(seed);
    std::vector<double> w;
    double total = 0.0;
    for (std::size_t i = 0; i < pieces.size(); ++i) total += w.emplace_back(0.05 + rng.uniform());
    tokenizers::ScoredVocabulary v;
    v.logp.assign(v.vocab.size(), 0.0);
    PieceTable table;
    for (std::size_t i = 0; i < pieces.size(); ++i) {
      v.vocab.add(pieces[i]);
      v.logp.push_back(std::log(w[i] / total));
      table.logp[pieces[i]] = v.logp.back();
    }
    const tokenizers::UnigramLM lm(std::move(v));
    std::vector<std::string> layer{""};
    for (std::size_t len = 1; len <= 12; ++len) {
      std::vector<std::string> next;
      next.reserve(layer.size() * 3);
      for (const auto& s : layer)
        for (char c : {'a', 'b', 'c'}) next.push_back(s + c);
      layer = std::move(next);
      for (const auto& s : layer) {
        const auto seg = lm.encode(s);
        const double oracle = enumerate_best(s, 0, 0.0, table);
        const double err = std::abs(seg.score - oracle) / std::max(1.0, std::abs(oracle));
        std::string cat;
        for (const auto& p : seg.pieces) cat += p;
        worst = std::max(worst, err);
        bad += err > 1e-9 || cat != s;
        ++cases;
      }
    }
  }
  const double secs = seconds_since(t0);
  return {bad == 0 && cases >= 1000 && secs < 60.0,
          fmt("%zu strings (every string of length 1..12 over {a,b,c}, two piece tables), %zu mismatches, "
              "max rel err %.1e, %.1f s (< 60 s)",
              cases, bad, worst, secs)};
}

// ---------------------------------------------------------------------------
// 4. CRF oracle

Outcome crf_oracle(Context&) {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(2024);
  double worst_z = 0.0, worst_v = 0.0;
  std::size_t bad = 0;
  for (int inst = 0; inst < 1000; ++inst) {
    const std::size_t L = 1 + rng.index(5), K = 1 + rng.index(4);
    probes::CrfTransitions<double> crf;
    crf.tags = K;
    for (std::size_t i = 0; i < K * K; ++i) crf.transitions.push_back(2.0 * rng.normal());
    for (std::size_t i = 0; i < K; ++i) crf.start.push_back(2.0 * rng.normal()), crf.end.push_back(2.0 * rng.normal());
    std::vector<double> e(L * K);
    for (auto& x : e) x = 2.0 * rng.normal();

    std::vector<int> path(L, 0);
    std::vector<double> scores;
    double best = -INFINITY;
    std::size_t total = 1;
    for (std::size_t i = 0; i < L; ++i) total *= K;
    for (std::size_t code = 0; code < total; ++code) {
      std::size_t c = code;
      for (std::size_t t = 0; t < L; ++t) path[t] = static_cast<int>(c % K), c /= K;
      // Score summed by hand, independent of crf_path_score.
      double s = crf.start[static_cast<std::size_t>(path[0])] + crf.end[static_cast<std::size_t>(path[L - 1])];
      for (std::size_t t = 0; t < L; ++t) {
        s += e[t * K + static_cast<std::size_t>(path[t])];
        if (t) s += crf.transitions[static_cast<std::size_t>(path[t - 1]) * K + static_cast<std::size_t>(path[t])];
      }
      scores.push_back(s);
      best = std::max(best, s);
    }
    double z = 0.0;
    for (double s : scores) z += std::exp(s - best);
    const double log_z = best + std::log(z);

    const double got_z = probes::crf_log_partition<double>(crf, e);
    const auto vit = probes::crf_viterbi<double>(crf, e);
    const double err_z = std::abs(got_z - log_z) / std::max(1.0, std::abs(log_z));
    const double err_v = std::abs(vit.score - best) / std::max(1.0, std::abs(best));
    const double path_err = std::abs(probes::crf_path_score<double>(crf, e, vit.tags) - best) / std::max(1.0, std::abs(best));
    worst_z = std::max(worst_z, err_z);
    worst_v = std::max({worst_v, err_v, path_err});
    bad += err_z >= 1e-6 || err_v >= 1e-6 || path_err >= 1e-6;
  }
  const double secs = seconds_since(t0);
  return {bad == 0 && secs < 60.0,
          fmt("1000 instances (L<=5, K<=4): max rel err log Z %.1e, Viterbi %.1e (< 1e-6), %zu failures, %.1f s (< 60 s)",
              worst_z, worst_v, bad, secs)};
}

// ---------------------------------------------------------------------------
// 5. Fake-language invariants

corpuslab::Corpus toy_english(std::size_t docs, std::uint64_t seed) {
  toy::World w;
  return toy::render_corpus(toy::Language::english(w), w.sample_documents(docs, 8, seed));
}

Outcome fake_language(Context&) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto en = toy_english(1250, 11);  // 10k sentences
  const corpuslab::CharBijection bij;
  const auto fake = corpuslab::make_fake_language(en, bij);
  const bool round_trip = corpuslab::invert_fake_language(fake, bij) == en;

  const auto tok_en = tokenizers::Tokenizer::train(tokenizers::TokenizerMode::wordpiece, en, 2000, {});
  const auto tok_fake = tokenizers::Tokenizer::train(tokenizers::TokenizerMode::wordpiece, fake, 2000, {});
  std::set<std::string> en_pieces;
  const auto& ve = tok_en.vocab();
  for (std::size_t i = ve.special_count(); i < ve.size(); ++i) en_pieces.insert(ve.piece(static_cast<std::int32_t>(i)));
  std::size_t overlap = 0;
  const auto& vf = tok_fake.vocab();
  for (std::size_t i = vf.special_count(); i < vf.size(); ++i) overlap += en_pieces.contains(vf.piece(static_cast<std::int32_t>(i)));
  const double secs = seconds_since(t0);
  return {round_trip && overlap == 0 && en.sentence_count() == 10000 && secs < 60.0,
          fmt("%zu sentences, round trip %s, word-piece overlap %zu of %zu/%zu pieces, %.1f s (< 60 s)",
              en.sentence_count(), round_trip ? "exact" : "BROKEN", overlap, ve.size() - ve.special_count(),
              vf.size() - vf.special_count(), secs)};
}

// ---------------------------------------------------------------------------
// 6. Permutation invariants

corpuslab::Segmenter words() {
  return {[](const std::string& s) {
            std::vector<std::string> out;
            std::size_t pos = 0;
            while (pos <= s.size()) {
              const std::size_t sp = std::min(s.find(' ', pos), s.size());
              out.push_back(s.substr(pos, sp - pos));
              pos = sp + 1;
            }
            return out;
          },
          " "};
}

Outcome permutation(Context&) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto corpus = toy_english(1250, 12);
  const auto seg = words();
  bool multiset = true;
  for (double p : {0.25, 0.5, 1.0}) {
    const auto out = corpuslab::permute_corpus(corpus, seg, {p, 9});
    const auto a = corpus.sentences(), b = out.sentences();
    if (a.size() != b.size()) multiset = false;
    for (std::size_t i = 0; multiset && i < a.size(); ++i) {
      auto wa = seg.segment(std::string(a[i])), wb = seg.segment(std::string(b[i]));
      std::sort(wa.begin(), wa.end());
      std::sort(wb.begin(), wb.end());
      multiset = wa == wb;
    }
  }
  const bool identity = corpuslab::permute_corpus(corpus, seg, {0.0, 9}) == corpus;

  // Mean Kendall-tau distance over 100 seeds x the first 200 sentences.
  const auto sents = corpus.sentences();
  std::vector<double> means;
  for (double p : {0.0, 0.25, 0.5, 1.0}) {
    double sum = 0.0;
    std::size_t n = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      for (std::size_t i = 0; i < 200; ++i) {
        const std::size_t L = seg.segment(std::string(sents[i])).size();
        std::vector<std::size_t> order(L);
        std::iota(order.begin(), order.end(), 0);
        order = corpuslab::permute_sentence(order, {p, derive_seed(seed, {i})});
        sum += corpuslab::kendall_tau_distance(order);
        ++n;
      }
    }
    means.push_back(sum / static_cast<double>(n));
  }
  const bool ordered = means[0] < means[1] && means[1] < means[2] && means[2] < means[3];
  const double secs = seconds_since(t0);
  return {multiset && identity && ordered && secs < 120.0,
          fmt("multiset %s on %zu sentences x 3 p, p=0 identity %s, mean tau %.4f < %.4f < %.4f < %.4f over 100 seeds, "
              "%.1f s (< 120 s)",
              multiset ? "kept" : "BROKEN", corpus.sentence_count(), identity ? "yes" : "NO", means[0], means[1],
              means[2], means[3], secs)};
}

// ---------------------------------------------------------------------------
// 7. Frequency synthesis

Outcome frequency_synthesis(Context&) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto source = toy_english(1000, 13);
  const auto table = corpuslab::collect_unigram_table(source);
  const double mean_len = static_cast<double>(table.total) / static_cast<double>(source.sentence_count());
  const auto synth = corpuslab::synthesize_frequency_corpus(
      table, static_cast<std::size_t>(100000 / mean_len * 1.2) + 100, 17);
  std::map<std::string, std::uint64_t> observed;
  std::size_t n = 0;
  const auto seg = words();
  for (auto s : synth.sentences()) {
    for (auto& w : seg.segment(std::string(s))) {
      if (n == 100000) break;
      ++observed[w];
      ++n;
    }
  }
  // Bins with expected count below 5 are pooled.
  double chi2 = 0.0, pooled_exp = 0.0, pooled_obs = 0.0;
  std::size_t bins = 0, unknown = 0;
  for (const auto& [w, c] : table.counts) {
    const double expected = static_cast<double>(n) * static_cast<double>(c) / static_cast<double>(table.total);
    const double obs = observed.contains(w) ? static_cast<double>(observed[w]) : 0.0;
    if (expected < 5.0) {
      pooled_exp += expected;
      pooled_obs += obs;
    } else {
      chi2 += (obs - expected) * (obs - expected) / expected;
      ++bins;
    }
  }
  for (const auto& [w, c] : observed) unknown += !table.counts.contains(w);
  if (pooled_exp > 0.0) chi2 += (pooled_obs - pooled_exp) * (pooled_obs - pooled_exp) / pooled_exp, ++bins;
  const boost::math::chi_squared dist(static_cast<double>(bins - 1));
  const double p = boost::math::cdf(boost::math::complement(dist, chi2));
  const double secs = seconds_since(t0);
  return {n == 100000 && unknown == 0 && p > 0.01 && secs < 60.0,
          fmt("%zu words, %zu bins, chi2 = %.1f (df %zu), p = %.3f (> 0.01), %zu unseen types, %.1f s (< 60 s)", n, bins,
              chi2, bins - 1, p, unknown, secs)};
}

// ---------------------------------------------------------------------------
// Desk trends

json desk_config() {
  return json::parse(R"({
    "name": "desk en-enfake",
    "seed": 1,
    "languages": [
      {"code": "en", "toy": {"docs": 3000, "seed": 1}},
      {"code": "enfake", "toy": {"docs": 3000, "seed": 2}, "fake_shift": 57344}
    ],
    "tokenizer": {"mode": "wordpiece", "size": 2000},
    "encoder": {"depth": 2, "heads": 4, "hidden": 64, "max_positions": 64},
    "pretrain": {"steps": 5000, "batch_size": 32, "lr": 1e-3, "warmup_fraction": 0.05, "max_seq": 64},
    "retrieval": {"source": "en", "target": "enfake", "pairs": 500, "k": 3}
  })");
}

json xnli_section() {
  return json::parse(R"({"source": "enfake", "target": "en", "train_size": 8000, "test_size": 600,
                         "hyper": {"epochs": 4, "lr": 3e-4}})");
}

lab::RunRecord run_config(Context& ctx, const std::string& sub, const json& j) {
  auto r = lab::execute(sub, lab::ExperimentConfig::from_json(j), {ctx.runs, ctx.log});
  if (!r.ok()) throw std::runtime_error(sub + " run '" + r.name + "' failed: " + r.error);
  return r;
}

const lab::RunRecord& trend_a_run(Context& ctx) {
  if (!ctx.trend_a) {
    const auto t0 = std::chrono::steady_clock::now();
    ctx.trend_a = run_config(ctx, "run", desk_config());
    ctx.trend_a_seconds = seconds_since(t0);
  }
  return *ctx.trend_a;
}

double metric(const lab::RunRecord& r, const char* key) { return r.metrics.at(key).get<double>(); }

// Retrieval of the same pairs through an untrained encoder with the trained vocabulary.
double untrained_top1(Context& ctx, const lab::RunRecord& a) {
  auto j = desk_config();
  const auto cfg = lab::ExperimentConfig::from_json(j);
  const auto tok = tokenizers::Tokenizer::load(cfg.tokenizer.mode, fs::path(a.run_dir) / "vocab.txt");
  auto ec = cfg.encoder;
  ec.vocab_size = tok.vocab().size();
  const auto init = encoder::build<float>(ec, stage_seed(cfg.seed, "init"));
  const fs::path ckpt = ctx.runs / "untrained.xlb";
  pretrain::save_checkpoint(ckpt, pretrain::make_checkpoint(init, {}, 0));
  j["checkpoint"] = ckpt.string();
  j["tokenizer"]["path"] = (fs::path(a.run_dir) / "vocab.txt").string();
  return metric(run_config(ctx, "probe-retrieval", j), "top1");
}

Outcome trend_a(Context& ctx) {
  const auto& a = trend_a_run(ctx);
  const double top1 = metric(a, "top1"), chance = metric(a, "retrieval_chance");
  const double l0 = metric(a, "mlm_loss_initial"), l1 = metric(a, "mlm_loss_final");
  const double control = untrained_top1(ctx, a);
  const bool pass = top1 >= 20.0 * chance && l1 <= 0.5 * l0 && ctx.trend_a_seconds <= 7200.0;
  return {pass, fmt("2 layers, hidden 64, vocab 2000, 48k sentences, 5000 steps: retrieval top-1 %.1f%% vs bar %.1f%% "
                    "(20x chance; untrained control %.1f%%), MLM loss %.3f -> %.3f (ratio %.2f <= 0.5), %.0f s (<= 7200 s)",
                    top1, 20.0 * chance, control, l0, l1, l1 / l0, ctx.trend_a_seconds)};
}

Outcome trend_b(Context& ctx) {
  const auto& a = trend_a_run(ctx);
  const auto t0 = std::chrono::steady_clock::now();
  auto j = desk_config();
  j["name"] = "desk en-enfake permuted";
  j["languages"][0]["permute"] = 1.0;
  j["languages"][1]["permute"] = 1.0;
  const auto b = run_config(ctx, "run", j);
  const double secs = seconds_since(t0) + ctx.trend_a_seconds;
  const double p0 = metric(a, "top1"), p1 = metric(b, "top1");
  return {p1 < p0 && secs <= 14400.0,
          fmt("retrieval top-1 (probe text unpermuted) at p=1.0 %.1f%% < p=0 %.1f%% (top-3 %.1f%% vs %.1f%%; "
              "MLM loss %.3f vs %.3f), %.0f s (<= 14400 s)",
              p1, p0, metric(b, "top3"), metric(a, "top3"), metric(b, "mlm_loss_final"), metric(a, "mlm_loss_final"), secs)};
}

Outcome trend_c(Context& ctx) {
  const auto t0 = std::chrono::steady_clock::now();
  auto j = desk_config();
  j["name"] = "desk enfake + frequency-only en";
  j["languages"][0]["frequency_only"] = true;
  j["xnli"] = xnli_section();
  const auto c = run_config(ctx, "run", j);
  const double secs = seconds_since(t0);
  const double acc = metric(c, "xnli_acc"), src = metric(c, "xnli_src_acc");
  const double chance = 100.0 / 3.0;

  // Reference point: the same probe on the ordinary pair (trend A model).
  const auto& a = trend_a_run(ctx);
  auto k = desk_config();
  k["checkpoint"] = (fs::path(a.run_dir) / "model.xlb").string();
  k["tokenizer"]["path"] = (fs::path(a.run_dir) / "vocab.txt").string();
  k["xnli"] = xnli_section();
  const auto base = run_config(ctx, "eval-xnli", k);
  return {std::abs(acc - chance) <= 5.0 && secs <= 7200.0,
          fmt("entailment fine-tuned on enfake (source acc %.1f%%), tested on en: %.1f%%, |acc - 33.3| = %.1f <= 5 "
              "(ordinary pair reference: source %.1f%%, target %.1f%%), %.0f s (<= 7200 s)",
              src, acc, std::abs(acc - chance), metric(base, "xnli_src_acc"), metric(base, "xnli_acc"), secs)};
}

// ---------------------------------------------------------------------------
// 11, 12. Toggles and reproducibility

json smoke_config() {
  return json::parse(R"({
    "name": "smoke",
    "seed": 7,
    "languages": [
      {"code": "en", "toy": {"docs": 100, "seed": 1}},
      {"code": "enfake", "toy": {"docs": 100, "seed": 2}, "fake_shift": 57344}
    ],
    "tokenizer": {"mode": "wordpiece", "size": 400},
    "encoder": {"depth": 1, "heads": 2, "hidden": 32, "max_positions": 128},
    "pretrain": {"steps": 150, "batch_size": 16, "lr": 1e-3, "max_seq": 64},
    "retrieval": {"source": "en", "target": "enfake", "pairs": 100},
    "xnli": {"source": "enfake", "target": "en", "train_size": 200, "test_size": 90, "hyper": {"epochs": 1, "lr": 3e-4}},
    "ner": {"source": "enfake", "target": "en", "train_size": 60, "test_size": 30, "seeds": 2, "hyper": {"epochs": 3}}
  })");
}

Outcome toggles(Context& ctx) {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<std::pair<std::string, json>> variants;
  auto base = smoke_config();
  variants.emplace_back("nsp on, lang-id off, wordpiece", base);
  auto v = base;
  v["pretrain"]["nsp"] = false;
  variants.emplace_back("nsp off", v);
  v = base;
  v["pretrain"]["lang_id"] = true;
  variants.emplace_back("lang-id on", v);
  v = base;
  v["tokenizer"]["mode"] = "char";
  variants.emplace_back("char", v);
  v = base;
  v["tokenizer"]["mode"] = "word";
  variants.emplace_back("word", v);

  std::set<std::string> ids, hashes;
  bool complete = true;
  ctx.smoke.clear();
  ctx.smoke_configs.clear();
  for (const auto& [label, j] : variants) {
    ctx.smoke_configs.push_back(lab::ExperimentConfig::from_json(j));
    const auto r = run_config(ctx, "run", j);
    ids.insert(r.run_id);
    hashes.insert(r.config_hash);
    for (const char* k : {"mlm_loss_final", "top1", "xnli_acc", "ner_f1_mean", "ner_f1_std"}) complete = complete && r.metrics.contains(k);
    ctx.smoke.push_back(r);
  }

  // The NSP-off model keeps its NSP head exactly at initialization.
  const auto& off = ctx.smoke[1];
  const auto trained = lab::load_model(fs::path(off.run_dir) / "model.xlb");
  auto ec = ctx.smoke_configs[1].encoder;
  ec.vocab_size = trained.config.vocab_size;
  const auto init = encoder::build<float>(ec, stage_seed(ctx.smoke_configs[1].seed, "init"));
  bool head_frozen = true;
  for (const auto& name : encoder::nsp_param_names()) head_frozen = head_frozen && trained.at(name).data == init.at(name).data;
  const bool body_moved = trained.at("embeddings.token").data != init.at("embeddings.token").data;
  const auto on = lab::load_model(fs::path(ctx.smoke[0].run_dir) / "model.xlb");
  const bool head_moved_when_on = on.at("nsp.weight").data != init.at("nsp.weight").data;

  const double secs = seconds_since(t0);
  return {ids.size() == 5 && hashes.size() == 5 && complete && head_frozen && body_moved && head_moved_when_on && secs < 900.0,
          fmt("5 end-to-end runs (nsp on/off, lang-id on/off, char/wordpiece/word): %zu distinct records, %zu distinct "
              "hashes, probe metrics %s; NSP-off head at init %s (encoder moved %s, NSP-on head moved %s), %.0f s (< 900 s)",
              ids.size(), hashes.size(), complete ? "complete" : "MISSING", head_frozen ? "yes" : "NO",
              body_moved ? "yes" : "no", head_moved_when_on ? "yes" : "no", secs)};
}

Outcome reproducibility(Context& ctx) {
  if (ctx.smoke.empty()) {
    ctx.smoke_configs = {lab::ExperimentConfig::from_json(smoke_config())};
    ctx.smoke = {run_config(ctx, "run", smoke_config())};
  }
  const auto& first = ctx.smoke.front();
  const auto again = run_config(ctx, "run", smoke_config());
  const bool same_hash = again.config_hash == first.config_hash;
  const bool same_metrics = again.metrics == first.metrics;
  const bool same_artifacts = again.artifacts == first.artifacts;

  const fs::path ckpt = fs::path(again.run_dir) / "model.xlb";
  const std::string bytes = read_file(ckpt);
  const bool parse_stable = pretrain::serialize_checkpoint(pretrain::parse_checkpoint(bytes)) == bytes;
  const fs::path copy = ctx.runs / "roundtrip.xlb";
  pretrain::save_checkpoint(copy, pretrain::load_checkpoint(ckpt));
  const bool file_stable = read_file(copy) == bytes;
  return {same_hash && same_metrics && same_artifacts && parse_stable && file_stable,
          fmt("rerun of the smoke config: hash %s, metrics %s, %zu artifacts %s (model %s...); checkpoint "
              "parse/serialize %s, load/save %s",
              same_hash ? "equal" : "DIFFERS", same_metrics ? "identical" : "DIFFER", again.artifacts.size(),
              same_artifacts ? "bitwise identical" : "DIFFER",
              again.artifacts.value("model.xlb", std::string("?")).substr(0, 12).c_str(),
              parse_stable ? "bitwise stable" : "UNSTABLE", file_stable ? "bitwise stable" : "UNSTABLE")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::string runs = "acceptance_runs", report_path;
  bool quiet = false;
  std::vector<int> only;
  app.add_option("--runs", runs, "scratch runs root (wiped first)");
  app.add_option("--report", report_path, "also append the result lines to this file");
  app.add_flag("--quiet", quiet, "no progress on stderr");
  app.add_option("criteria", only, "criterion numbers to run (default all)")->check(CLI::Range(1, 12));
  CLI11_PARSE(app, argc, argv);

  Context ctx;
  ctx.runs = fs::absolute(runs);
  fs::remove_all(ctx.runs);
  fs::create_directories(ctx.runs);
  if (!quiet) {
    ctx.log = [t0 = std::chrono::steady_clock::now()](const std::string& m) {
      std::fprintf(stderr, "  [%7.1fs] %s\n", seconds_since(t0), m.c_str());
    };
  }

  const std::vector<std::pair<std::string, std::function<Outcome(Context&)>>> criteria{
      {"numerical core", numerical_core},
      {"parameter accounting", parameter_accounting},
      {"tokenizer oracle", tokenizer_oracle},
      {"CRF oracle", crf_oracle},
      {"fake-language invariants", fake_language},
      {"permutation invariants", permutation},
      {"frequency synthesis", frequency_synthesis},
      {"desk trend A (lexical overlap irrelevant)", trend_a},
      {"desk trend B (word order destroyed)", trend_b},
      {"desk trend C (frequency only)", trend_c},
      {"objective/input toggles", toggles},
      {"reproducibility", reproducibility}};

  std::ofstream report;
  if (!report_path.empty()) report.open(report_path, std::ios::app);
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int number = static_cast<int>(i + 1);
    if (!only.empty() && std::find(only.begin(), only.end(), number) == only.end()) continue;
    Outcome o;
    try {
      o = criteria[i].second(ctx);
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failures += !o.pass;
    const std::string line = fmt("%s [%2d] %s: ", o.pass ? "PASS" : "FAIL", number, criteria[i].first.c_str()) + o.detail;
    std::printf("%s\n", line.c_str());
    std::fflush(stdout);
    if (report) report << line << "\n" << std::flush;
  }
  return failures == 0 ? 0 : 1;
}
