#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "xlab/common/random.hpp"
#include "xlab/encoder/encoder.hpp"
#include "xlab/num/gradcheck.hpp"

using namespace xlab;
using namespace xlab::encoder;

namespace {

EncoderConfig tiny(std::size_t depth = 2) {
  EncoderConfig c;
  c.depth = depth;
  c.heads = 2;
  c.hidden = 8;
  c.vocab_size = 20;
  c.max_positions = 8;
  return c;
}

Batch random_batch(const EncoderConfig& c, std::size_t b, std::size_t s, std::uint64_t seed,
                   std::size_t pad_tail = 0) {
  Rng rng(seed);
  Batch batch{b, s, {}, {}, {}};
  for (std::size_t i = 0; i < b * s; ++i) {
    const bool pad = (i % s) >= s - pad_tail;
    batch.tokens.push_back(pad ? 0 : static_cast<std::int32_t>(rng.index(c.vocab_size)));
    batch.segments.push_back(static_cast<std::int32_t>((i % s) >= s / 2));
    batch.mask.push_back(pad ? 0 : 1);
  }
  return batch;
}

std::vector<double> hidden_of(ModelState<double>& m, const Batch& b) {
  num::Graph<double> g(false);
  auto P = bind(g, m);
  return forward(g, P, b).hidden.value().data;
}

}  // namespace

TEST_CASE("parameter count of the base configuration") {
  EncoderConfig c;
  c.depth = 12;
  c.heads = 12;
  c.hidden = 768;
  c.vocab_size = 60000;
  c.max_positions = 512;
  const std::size_t n = param_count(c);
  CHECK(n == 132775010);
  CHECK(n >= 131500000);
  CHECK(n <= 134100000);
  CHECK(std::abs(static_cast<double>(n) / 132.78e6 - 1.0) < 0.01);
}

TEST_CASE("closed-form count equals built tensors across a grid") {
  for (std::size_t depth : {1, 2, 3}) {
    for (std::size_t heads : {1, 2, 4}) {
      for (std::size_t hidden : {8, 16}) {
        EncoderConfig c = tiny(depth);
        c.heads = heads;
        c.hidden = hidden;
        c.intermediate = hidden == 16 ? 24 : 0;
        const auto m = build<float>(c, 1);
        CHECK(m.scalar_count() == param_count(c));
      }
    }
  }
}

TEST_CASE("per-layer size scales with the square of hidden") {
  EncoderConfig c;
  c.heads = 12;
  c.vocab_size = 60000;
  auto per_layer = [&](std::size_t h) {
    c.hidden = h;
    c.depth = 2;
    const auto two = param_count(c);
    c.depth = 1;
    return static_cast<double>(two - param_count(c));
  };
  CHECK(per_layer(1536) / per_layer(768) == doctest::Approx(4.0).epsilon(0.01));
}

TEST_CASE("hidden solver is optimal for the sweep grids") {
  struct Row {
    double millions;
    std::size_t depth, heads;
  };
  const Row rows[] = {{138.69, 1, 12}, {136.32, 2, 12}, {136.20, 4, 12}, {138.86, 6, 12}, {136.10, 18, 12},
                      {139.33, 24, 12}, {132.78, 12, 1},  {132.78, 12, 2},  {132.78, 12, 3},  {132.78, 12, 6},
                      {132.78, 12, 16}, {132.78, 12, 24}, {7.87, 3, 3},     {12.19, 3, 3},    {16.78, 3, 3},
                      {8.40, 6, 6},     {13.37, 6, 6},    {18.87, 6, 6},    {4.23, 12, 12},   {11.83, 12, 12},
                      {29.65, 12, 12},  {283.11, 12, 12}};
  for (const auto& r : rows) {
    EncoderConfig base;
    base.depth = r.depth;
    base.heads = r.heads;
    base.vocab_size = 60000;
    base.max_positions = 512;
    const auto target = static_cast<std::size_t>(r.millions * 1e6);
    const std::size_t h = solve_hidden(base, target);
    base.hidden = h;
    CHECK(base.violations().empty());
    const double err = std::abs(static_cast<double>(param_count(base)) - static_cast<double>(target));
    // Oracle: no other multiple of heads up to 4096 does better.
    for (std::size_t k = r.heads; k <= 4096; k += r.heads) {
      base.hidden = k;
      CHECK(std::abs(static_cast<double>(param_count(base)) - static_cast<double>(target)) >= err);
    }
    // The residual is at most half of one hidden step.
    base.hidden = h + r.heads;
    const double step = static_cast<double>(param_count(base));
    base.hidden = h;
    CHECK(err <= 0.5 * (step - static_cast<double>(param_count(base))));
    if (r.depth <= 18) CHECK(err / static_cast<double>(target) < 0.01);
  }
}

TEST_CASE("config validation lists every violation") {
  EncoderConfig c = tiny();
  c.depth = 0;
  c.heads = 3;
  try {
    c.validate();
    FAIL("expected an exception");
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    CHECK(msg.find("depth") != std::string::npos);
    CHECK(msg.find("divisible") != std::string::npos);
  }
  CHECK_THROWS_AS(build<float>(c, 0), std::invalid_argument);
  CHECK(EncoderConfig::from_json(tiny().to_json()) == tiny());
}

TEST_CASE("build is deterministic per seed") {
  const auto a = build<float>(tiny(), 3);
  const auto b = build<float>(tiny(), 3);
  const auto c = build<float>(tiny(), 4);
  for (std::size_t i = 0; i < a.tensors.size(); ++i) CHECK(a.tensors[i].data == b.tensors[i].data);
  CHECK(a.at("embeddings.token").data != c.at("embeddings.token").data);
  CHECK(a.at("layer.0.attn.ln.gamma").data == std::vector<float>(8, 1.0f));
  for (float x : a.at("embeddings.token").data) CHECK(std::abs(x) <= 0.04f);
}

TEST_CASE("forward shapes and masking") {
  auto m = build<double>(tiny(1), 5);
  const Batch b = random_batch(m.config, 2, 6, 1, 2);
  num::Graph<double> g(false);
  auto P = bind(g, m);
  AttentionTrace<double> trace;
  const auto out = forward(g, P, b, &trace);
  CHECK(out.hidden.shape() == num::Shape{12, 8});
  CHECK(out.pooled.shape() == num::Shape{2, 8});
  REQUIRE(trace.size() == 1);
  const auto& probs = trace[0].probs;
  for (std::size_t row = 0; row < probs.size() / 6; ++row) {
    double sum = 0;
    for (std::size_t j = 0; j < 6; ++j) sum += probs[row * 6 + j];
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(probs[row * 6 + 4] == 0.0);
    CHECK(probs[row * 6 + 5] == 0.0);
  }

  Batch bad = b;
  bad.tokens[3] = 20;
  CHECK_THROWS_WITH_AS(forward(g, P, bad), doctest::Contains("token id 20"), std::invalid_argument);
  Batch long_batch = random_batch(m.config, 1, 9, 1);
  CHECK_THROWS_WITH_AS(forward(g, P, long_batch), doctest::Contains("max_positions"), std::invalid_argument);
}

TEST_CASE("all-padding input stays finite") {
  auto m = build<double>(tiny(), 5);
  const Batch b = random_batch(m.config, 2, 4, 2, 4);
  for (double x : hidden_of(m, b)) CHECK(std::isfinite(x));
}

TEST_CASE("permuting the padding tail leaves real positions unchanged") {
  auto m = build<double>(tiny(), 6);
  Batch a = random_batch(m.config, 1, 8, 3, 3);
  Batch b = a;
  a.tokens[5] = 3, a.tokens[6] = 7, a.tokens[7] = 11;
  b.tokens[5] = 11, b.tokens[6] = 3, b.tokens[7] = 7;
  const auto ha = hidden_of(m, a);
  const auto hb = hidden_of(m, b);
  for (std::size_t i = 0; i < 5 * 8; ++i) CHECK(ha[i] == doctest::Approx(hb[i]).epsilon(1e-12));
}

TEST_CASE("without position embeddings the encoder is permutation equivariant") {
  auto m = build<double>(tiny(2), 7);
  std::fill(m.at("embeddings.position").data.begin(), m.at("embeddings.position").data.end(), 0.0);
  const Batch a = random_batch(m.config, 1, 6, 4);
  const std::vector<std::size_t> perm{3, 0, 5, 1, 4, 2};
  Batch b = a;
  for (std::size_t i = 0; i < 6; ++i) {
    b.tokens[i] = a.tokens[perm[i]];
    b.segments[i] = a.segments[perm[i]];
  }
  const auto ha = hidden_of(m, a);
  const auto hb = hidden_of(m, b);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t d = 0; d < 8; ++d) CHECK(hb[i * 8 + d] == doctest::Approx(ha[perm[i] * 8 + d]).epsilon(1e-10));

  // With positions the same permutation is not equivariant.
  auto m2 = build<double>(tiny(2), 7);
  const auto pa = hidden_of(m2, a);
  const auto pb = hidden_of(m2, b);
  double diff = 0;
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t d = 0; d < 8; ++d) diff = std::max(diff, std::abs(pb[i * 8 + d] - pa[perm[i] * 8 + d]));
  CHECK(diff > 1e-3);
}

TEST_CASE("heads: untrained MLM loss is near ln V and gradients reach embeddings") {
  EncoderConfig c;
  c.depth = 2;
  c.heads = 4;
  c.hidden = 64;
  c.vocab_size = 1000;
  c.max_positions = 32;
  auto m = build<float>(c, 9);
  const Batch b = random_batch(c, 4, 32, 5);
  std::vector<std::size_t> rows;
  std::vector<std::int32_t> targets;
  for (std::size_t r = 0; r < b.tokens.size(); r += 3) rows.push_back(r), targets.push_back(b.tokens[r]);
  num::Graph<float> g;
  auto P = bind(g, m);
  const auto enc = forward(g, P, b);
  const auto heads = mlm_nsp_logits(g, P, enc, rows);
  CHECK(heads.mlm_logits.shape() == num::Shape{rows.size(), 1000});
  CHECK(heads.nsp_logits.shape() == num::Shape{4, 2});
  auto loss = num::cross_entropy(heads.mlm_logits, std::span<const std::int32_t>(targets));
  CHECK(loss.value().data[0] == doctest::Approx(std::log(1000.0)).epsilon(0.05));
  g.backward(loss);
  double norm = 0;
  for (float x : m.at("embeddings.token").grad) norm += x * x;
  CHECK(norm > 0);
  for (float x : m.at("nsp.weight").grad) CHECK(x == 0.0f);

  num::Graph<float> g2(false);
  auto P2 = bind(g2, m);
  const auto none = mlm_nsp_logits(g2, P2, forward(g2, P2, b), {});
  CHECK(none.mlm_logits.value().size() == 0);
  CHECK(none.nsp_logits.shape() == num::Shape{4, 2});
  const std::size_t out_of_range[] = {4 * 32};
  CHECK_THROWS_AS(mlm_nsp_logits(g2, P2, forward(g2, P2, b), out_of_range), std::invalid_argument);
}

TEST_CASE("float and double forwards agree") {
  auto md = build<double>(tiny(), 11);
  auto mf = cast_model<float>(md);
  const Batch b = random_batch(md.config, 2, 5, 6, 1);
  const auto hd = hidden_of(md, b);
  num::Graph<float> g(false);
  auto P = bind(g, mf);
  const auto hf = forward(g, P, b).hidden.value().data;
  for (std::size_t i = 0; i < hd.size(); ++i) CHECK(hf[i] == doctest::Approx(hd[i]).epsilon(1e-4));
}

TEST_CASE("gradient check of the two-layer MLM and NSP loss") {
  auto m = build<double>(tiny(2), 13);
  // Larger weights make the check sensitive to every path.
  Rng rng(1);
  for (auto& t : m.tensors)
    for (auto& x : t.data) x += 0.3 * rng.normal();
  const Batch b = random_batch(m.config, 2, 5, 7, 1);
  const std::vector<std::size_t> rows{1, 3, 6, 8};
  const std::vector<std::int32_t> targets{4, 9, 0, 17};
  const std::vector<std::int32_t> nsp{1, 0};
  auto loss = [&](bool with_backward) {
    num::Graph<double> g(with_backward);
    auto P = bind(g, m);
    const auto enc = forward(g, P, b);
    const auto h = mlm_nsp_logits(g, P, enc, rows);
    auto l = num::add(num::cross_entropy(h.mlm_logits, std::span<const std::int32_t>(targets)),
                      num::cross_entropy(h.nsp_logits, std::span<const std::int32_t>(nsp)));
    if (with_backward) g.backward(l);
    return l.value().data[0];
  };
  auto params = m.params();
  num::GradCheckOptions opt;
  opt.samples = 400;
  const auto report = num::grad_check(loss, params, opt);
  INFO(report.summary());
  CHECK(report.passed());
  CHECK(report.checked >= 300);
}
