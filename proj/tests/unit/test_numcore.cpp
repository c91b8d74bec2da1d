#include <cmath>
#include <functional>
#include <vector>

#include "doctest.h"
#include "xlab/common/random.hpp"
#include "xlab/num/gradcheck.hpp"
#include "xlab/num/ops.hpp"
#include "xlab/num/optim.hpp"

using namespace xlab;
using namespace xlab::num;

namespace {

Tensor<double> random_tensor(Rng& rng, Shape shape, double scale = 1.0) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.data) v = (rng.uniform() * 2.0 - 1.0) * scale;
  return t;
}

std::vector<double> random_weights(Rng& rng, std::size_t n) {
  std::vector<double> w(n);
  for (auto& v : w) v = rng.uniform() * 2.0 - 1.0;
  return w;
}

using Builder = std::function<Var<double>(Graph<double>&, std::vector<Var<double>>&)>;

/// Grad-checks `build` (which maps parameter vars to an arbitrary-shaped
/// output) through a fixed random projection to a scalar.
GradCheckReport check_op(std::vector<Tensor<double>>& tensors, const Builder& build,
                         double tol = 1e-4) {
  Rng rng(99);
  std::vector<double> weights;
  std::vector<ParamRef<double>> refs;
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    refs.push_back({"p" + std::to_string(i), &tensors[i]});
  }
  auto loss = [&](bool with_backward) {
    Graph<double> g(with_backward);
    std::vector<Var<double>> vars;
    for (auto& t : tensors) vars.push_back(g.param(t));
    auto out = build(g, vars);
    if (weights.size() != out.value().size()) weights = random_weights(rng, out.value().size());
    auto l = weighted_sum<double>(out, weights);
    if (with_backward) g.backward(l);
    return l.value().data[0];
  };
  GradCheckOptions opt;
  opt.tol = tol;
  return grad_check(loss, refs, opt);
}

}  // namespace

TEST_CASE("softmax of equal logits is uniform and rows normalize") {
  Graph<double> g(false);
  auto x = g.constant(Tensor<double>({1, 2}, {0.0, 0.0}));
  auto y = softmax(x);
  CHECK(y.value().data[0] == doctest::Approx(0.5));
  CHECK(y.value().data[1] == doctest::Approx(0.5));

  Rng rng(1);
  auto big = g.constant(random_tensor(rng, {16, 33}, 20.0));
  auto p = softmax(big);
  for (std::size_t i = 0; i < 16; ++i) {
    double s = 0;
    for (std::size_t j = 0; j < 33; ++j) s += p.value().row(i)[j];
    CHECK(std::abs(s - 1.0) < 1e-6);
  }
}

TEST_CASE("layer_norm rows have zero mean and unit variance") {
  Graph<float> g(false);
  Rng rng(2);
  Tensor<float> x({8, 64});
  for (auto& v : x.data) v = static_cast<float>(rng.normal() * 3.0 + 5.0);
  auto y = layer_norm(g.constant(x), g.constant(Tensor<float>({64}, 1.0f)),
                      g.constant(Tensor<float>({64}, 0.0f)));
  for (std::size_t i = 0; i < 8; ++i) {
    double mu = 0, var = 0;
    for (std::size_t j = 0; j < 64; ++j) mu += y.value().row(i)[j];
    mu /= 64;
    for (std::size_t j = 0; j < 64; ++j) var += std::pow(y.value().row(i)[j] - mu, 2);
    var /= 64;
    CHECK(std::abs(mu) < 1e-5);
    CHECK(std::abs(var - 1.0) < 1e-4);
  }
}

TEST_CASE("cross_entropy of a peaked matching logit is near zero") {
  Graph<double> g(false);
  Tensor<double> logits({2, 4}, {20, 0, 0, 0, 0, 0, 25, 0});
  std::vector<std::int32_t> targets{0, 2};
  auto l = cross_entropy(g.constant(logits), targets);
  CHECK(l.value().data[0] < 1e-3);
  std::vector<std::int32_t> none;
  auto empty = cross_entropy(g.constant(Tensor<double>({0, 4})), none);
  CHECK(empty.value().data[0] == 0.0);
}

TEST_CASE("every primitive passes grad_check in 64-bit mode") {
  Rng rng(5);
  SUBCASE("matmul") {
    std::vector<Tensor<double>> ts{random_tensor(rng, {4, 5}), random_tensor(rng, {5, 3})};
    auto r = check_op(ts, [](auto&, auto& v) { return matmul(v[0], v[1]); });
    CHECK_MESSAGE(r.passed(), r.summary());
  }
  SUBCASE("matmul_nt") {
    std::vector<Tensor<double>> ts{random_tensor(rng, {4, 5}), random_tensor(rng, {6, 5})};
    auto r = check_op(ts, [](auto&, auto& v) { return matmul_nt(v[0], v[1]); });
    CHECK_MESSAGE(r.passed(), r.summary());
  }
  SUBCASE("add and add_bias and scale") {
    std::vector<Tensor<double>> ts{random_tensor(rng, {3, 4}), random_tensor(rng, {3, 4}),
                                   random_tensor(rng, {4})};
    auto r = check_op(ts, [](auto&, auto& v) {
      return scale(add_bias(add(v[0], v[1]), v[2]), 0.7);
    });
    CHECK_MESSAGE(r.passed(), r.summary());
  }
  SUBCASE("gelu and tanh") {
    std::vector<Tensor<double>> ts{random_tensor(rng, {5, 6}, 3.0)};
    auto r = check_op(ts, [](auto&, auto& v) { return tanh(gelu(v[0])); });
    CHECK_MESSAGE(r.passed(), r.summary());
  }
  SUBCASE("layer_norm") {
    std::vector<Tensor<double>> ts{random_tensor(rng, {4, 7}, 2.0), random_tensor(rng, {7}),
                                   random_tensor(rng, {7})};
    auto r = check_op(ts, [](auto&, auto& v) { return layer_norm(v[0], v[1], v[2]); });
    CHECK_MESSAGE(r.passed(), r.summary());
  }
  SUBCASE("softmax") {
    std::vector<Tensor<double>> ts{random_tensor(rng, {3, 6}, 2.0)};
    auto r = check_op(ts, [](auto&, auto& v) { return softmax(v[0]); });
    CHECK_MESSAGE(r.passed(), r.summary());
  }
  SUBCASE("embedding_lookup and gather_rows") {
    std::vector<Tensor<double>> ts{random_tensor(rng, {6, 4})};
    auto r = check_op(ts, [](auto&, auto& v) {
      static const std::vector<std::int32_t> ids{0, 3, 3, 5, 1};
      static const std::vector<std::size_t> rows{4, 1, 1};
      return gather_rows(embedding_lookup(v[0], ids), rows);
    });
    CHECK_MESSAGE(r.passed(), r.summary());
  }
  SUBCASE("cross_entropy") {
    std::vector<Tensor<double>> ts{random_tensor(rng, {4, 5}, 2.0)};
    auto r = check_op(ts, [](auto&, auto& v) {
      static const std::vector<std::int32_t> t{0, 4, 2, 2};
      return cross_entropy(v[0], t);
    });
    CHECK_MESSAGE(r.passed(), r.summary());
  }
  SUBCASE("attention with padding mask") {
    // batch 2, seq 4, heads 2, width 6; second sequence has two padded keys
    std::vector<Tensor<double>> ts{random_tensor(rng, {8, 6}), random_tensor(rng, {8, 6}),
                                   random_tensor(rng, {8, 6})};
    auto r = check_op(ts, [](auto&, auto& v) {
      static const std::vector<std::uint8_t> mask{1, 1, 1, 1, 1, 1, 0, 0};
      return attention(v[0], v[1], v[2], AttentionShape{2, 4, 2}, mask);
    });
    CHECK_MESSAGE(r.passed(), r.summary());
  }
}

TEST_CASE("matmul backward matches finite-difference Jacobian-vector products") {
  Rng rng(8);
  Tensor<double> a = random_tensor(rng, {6, 4});
  Tensor<double> b = random_tensor(rng, {4, 5});
  const auto w = random_weights(rng, 30);
  const auto ua = random_weights(rng, a.size());
  const auto ub = random_weights(rng, b.size());

  auto project = [&](const Tensor<double>& av, const Tensor<double>& bv) {
    Graph<double> g(false);
    return weighted_sum<double>(matmul(g.constant(av), g.constant(bv)), w).value().data[0];
  };
  Graph<double> g;
  auto l = weighted_sum<double>(matmul(g.param(a), g.param(b)), w);
  g.backward(l);
  double analytic = 0;
  for (std::size_t i = 0; i < a.size(); ++i) analytic += a.grad[i] * ua[i];
  for (std::size_t i = 0; i < b.size(); ++i) analytic += b.grad[i] * ub[i];

  const double eps = 1e-5;
  auto shifted = [&](double s) {
    Tensor<double> ap = a, bp = b;
    for (std::size_t i = 0; i < a.size(); ++i) ap.data[i] += s * ua[i];
    for (std::size_t i = 0; i < b.size(); ++i) bp.data[i] += s * ub[i];
    return project(ap, bp);
  };
  const double numeric = (shifted(eps) - shifted(-eps)) / (2 * eps);
  CHECK(std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic)) < 1e-4);
}

TEST_CASE("grad_check on a constant loss sees zero gradients") {
  Rng rng(4);
  Tensor<double> p = random_tensor(rng, {3, 3});
  std::vector<ParamRef<double>> refs{{"p", &p}};
  auto loss = [&](bool with_backward) {
    Graph<double> g(with_backward);
    auto pv = g.param(p);
    auto zero = scale(pv, 0.0);
    auto l = add(mean(zero), g.constant(Tensor<double>({1}, 3.0)));
    if (with_backward) g.backward(l);
    return l.value().data[0];
  };
  auto r = grad_check(loss, refs);
  CHECK(r.passed());
  CHECK(r.checked == 9);
  for (double v : p.grad) CHECK(v == 0.0);
}

TEST_CASE("grad_check catches a sign-flipped backward") {
  Rng rng(6);
  Tensor<double> p = random_tensor(rng, {4, 4});
  std::vector<ParamRef<double>> refs{{"p", &p}};
  auto loss = [&](bool with_backward) {
    Graph<double> g(with_backward);
    auto x = g.param(p);
    Tensor<double> sq(x.value().shape);
    for (std::size_t i = 0; i < sq.size(); ++i) sq.data[i] = x.value().data[i] * x.value().data[i];
    auto y = g.op(std::move(sq), true, [x](Graph<double>& gr, Var<double> self) {
      const auto& dy = gr.grad(self);
      auto& dx = gr.grad(x);
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] -= 2 * x.value().data[i] * dy[i];
    });
    auto l = mean(y);
    if (with_backward) g.backward(l);
    return l.value().data[0];
  };
  auto r = grad_check(loss, refs);
  CHECK_FALSE(r.passed());
  CHECK(r.failures.size() > 0);
  CHECK(r.failures.front().param == "p");
}

TEST_CASE("shape mismatches name the op and both shapes") {
  Graph<float> g;
  auto a = g.constant(Tensor<float>({2, 3}));
  auto b = g.constant(Tensor<float>({4, 5}));
  try {
    matmul(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("matmul") != std::string::npos);
    CHECK(msg.find("[2,3]") != std::string::npos);
    CHECK(msg.find("[4,5]") != std::string::npos);
  }
  CHECK_THROWS_AS(add(a, b), ShapeError);
  std::vector<std::int32_t> bad{7};
  CHECK_THROWS_AS(embedding_lookup(a, bad), std::out_of_range);
}

TEST_CASE("attention with every key masked outputs zeros without NaN") {
  Graph<float> g;
  Rng rng(7);
  Tensor<float> x({3, 4});
  for (auto& v : x.data) v = static_cast<float>(rng.normal());
  auto xv = g.constant(x);
  std::vector<std::uint8_t> mask{0, 0, 0};
  auto y = attention(xv, xv, xv, AttentionShape{1, 3, 2}, mask);
  for (float v : y.value().data) CHECK(v == 0.0f);
}

TEST_CASE("adam: zero gradient leaves parameters unchanged and counts the step") {
  Tensor<float> p({3}, {1.0f, -2.0f, 0.5f});
  p.ensure_grad();
  const auto before = p.data;
  std::vector<ParamRef<float>> refs{{"w", &p}};
  AdamState<float> st;
  st.lr = 0.1;
  adam_step<float>(refs, st);
  CHECK(st.step == 1);
  CHECK(p.data == before);
}

TEST_CASE("adam: first step on a scalar matches the closed form") {
  // m1 = (1-b1) g, v1 = (1-b2) g^2, mhat = g, vhat = g^2,
  // x1 = x0 - lr * g / (|g| + eps)
  Tensor<double> p({1}, {2.0});
  p.grad = {0.3};
  std::vector<ParamRef<double>> refs{{"x", &p}};
  AdamState<double> st;
  st.lr = 0.01;
  adam_step<double>(refs, st);
  const double expected = 2.0 - 0.01 * 0.3 / (0.3 + 1e-8);
  CHECK(p.data[0] == doctest::Approx(expected).epsilon(1e-12));
  CHECK(st.m[0].data[0] == doctest::Approx(0.1 * 0.3));
  CHECK(st.v[0].data[0] == doctest::Approx(0.001 * 0.09));
}

TEST_CASE("adam converges on a quadratic bowl") {
  Tensor<double> p({2}, {3.0, -4.0});
  std::vector<ParamRef<double>> refs{{"x", &p}};
  AdamState<double> st;
  st.lr = 0.05;
  const double cx = 1.0, cy = 2.0;
  int steps = 0;
  for (; steps < 2000; ++steps) {
    p.grad = {2 * (p.data[0] - cx), 2 * 3 * (p.data[1] - cy)};
    adam_step<double>(refs, st);
  }
  CHECK(std::abs(p.data[0] - cx) < 1e-3);
  CHECK(std::abs(p.data[1] - cy) < 1e-3);
}

TEST_CASE("adam rejects non-finite gradients before updating anything") {
  Tensor<float> a({1}, {1.0f}), b({1}, {1.0f});
  a.grad = {0.5f};
  b.grad = {std::nanf("")};
  std::vector<ParamRef<float>> refs{{"a", &a}, {"b", &b}};
  AdamState<float> st;
  try {
    adam_step<float>(refs, st);
    FAIL("expected NonFiniteError");
  } catch (const NonFiniteError& e) {
    CHECK(e.param() == "b");
  }
  CHECK(a.data[0] == 1.0f);
  CHECK(st.step == 0);
}

TEST_CASE("clip_grad_norm bounds the global norm") {
  Tensor<double> a({2}), b({1});
  a.grad = {3.0, 0.0};
  b.grad = {4.0};
  std::vector<ParamRef<double>> refs{{"a", &a}, {"b", &b}};
  CHECK(clip_grad_norm<double>(refs, 1.0) == doctest::Approx(5.0));
  CHECK(a.grad[0] == doctest::Approx(0.6));
  CHECK(b.grad[0] == doctest::Approx(0.8));
}
