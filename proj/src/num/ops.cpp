#include "xlab/num/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "xlab/num/kernels.hpp"

namespace xlab::num {

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

namespace {

template <class T>
[[noreturn]] void shape_fail(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a.shape) + " and " +
                   shape_str(b.shape));
}

template <class T>
bool any_grad(Graph<T>& g, std::initializer_list<Var<T>> vs) {
  for (auto v : vs) {
    if (g.requires_grad(v)) return true;
  }
  return false;
}

template <class T>
Shape out_shape_like(const Tensor<T>& t) {
  return t.shape.empty() ? Shape{1} : t.shape;
}

}  // namespace

template <class T>
Var<T> matmul(Var<T> a, Var<T> b) {
  auto& g = a.graph();
  const auto& av = a.value();
  const auto& bv = b.value();
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  if (bv.rows() != k) shape_fail("matmul", av, bv);
  Tensor<T> out({m, n});
  gemm_nn<T>(m, n, k, av.data.data(), k, bv.data.data(), n, out.data.data(), n);
  return g.op(std::move(out), any_grad(g, {a, b}), [a, b, m, n, k](Graph<T>& gr, Var<T> self) {
    const T* dy = gr.grad(self).data();
    if (gr.requires_grad(a)) {
      // dA = dY B^T
      gemm_nt<T>(m, k, n, dy, n, b.value().data.data(), n, gr.grad(a).data(), k);
    }
    if (gr.requires_grad(b)) {
      // dB = A^T dY
      gemm_tn<T>(k, n, m, a.value().data.data(), k, dy, n, gr.grad(b).data(), n);
    }
  });
}

template <class T>
Var<T> matmul_nt(Var<T> a, Var<T> b) {
  auto& g = a.graph();
  const auto& av = a.value();
  const auto& bv = b.value();
  const std::size_t m = av.rows(), k = av.cols(), n = bv.rows();
  if (bv.cols() != k) shape_fail("matmul_nt", av, bv);
  Tensor<T> out({m, n});
  gemm_nt<T>(m, n, k, av.data.data(), k, bv.data.data(), k, out.data.data(), n);
  return g.op(std::move(out), any_grad(g, {a, b}), [a, b, m, n, k](Graph<T>& gr, Var<T> self) {
    const T* dy = gr.grad(self).data();
    if (gr.requires_grad(a)) {
      // dA = dY B
      gemm_nn<T>(m, k, n, dy, n, b.value().data.data(), k, gr.grad(a).data(), k);
    }
    if (gr.requires_grad(b)) {
      // dB = dY^T A
      gemm_tn<T>(n, k, m, dy, n, a.value().data.data(), k, gr.grad(b).data(), k);
    }
  });
}

template <class T>
Var<T> add(Var<T> a, Var<T> b) {
  auto& g = a.graph();
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.size() != bv.size() || av.rows() != bv.rows()) shape_fail("add", av, bv);
  Tensor<T> out(out_shape_like(av), av.data);
  kernels<T>().add(bv.data.data(), out.data.data(), out.size());
  return g.op(std::move(out), any_grad(g, {a, b}), [a, b](Graph<T>& gr, Var<T> self) {
    const auto& dy = gr.grad(self);
    const auto& kt = kernels<T>();
    if (gr.requires_grad(a)) kt.add(dy.data(), gr.grad(a).data(), dy.size());
    if (gr.requires_grad(b)) kt.add(dy.data(), gr.grad(b).data(), dy.size());
  });
}

template <class T>
Var<T> add_bias(Var<T> x, Var<T> bias) {
  auto& g = x.graph();
  const auto& xv = x.value();
  const auto& bv = bias.value();
  const std::size_t m = xv.rows(), n = xv.cols();
  if (bv.size() != n) shape_fail("add_bias", xv, bv);
  Tensor<T> out(xv.shape, xv.data);
  const auto& kt = kernels<T>();
  for (std::size_t i = 0; i < m; ++i) kt.add(bv.data.data(), out.row(i), n);
  return g.op(std::move(out), any_grad(g, {x, bias}), [x, bias, m, n](Graph<T>& gr, Var<T> self) {
    const auto& dy = gr.grad(self);
    const auto& kt = kernels<T>();
    if (gr.requires_grad(x)) kt.add(dy.data(), gr.grad(x).data(), dy.size());
    if (gr.requires_grad(bias)) {
      T* db = gr.grad(bias).data();
      for (std::size_t i = 0; i < m; ++i) kt.add(dy.data() + i * n, db, n);
    }
  });
}

template <class T>
Var<T> scale(Var<T> x, T factor) {
  auto& g = x.graph();
  Tensor<T> out(out_shape_like(x.value()), x.value().data);
  kernels<T>().scale(factor, out.data.data(), out.size());
  return g.op(std::move(out), g.requires_grad(x), [x, factor](Graph<T>& gr, Var<T> self) {
    const auto& dy = gr.grad(self);
    kernels<T>().axpy(factor, dy.data(), gr.grad(x).data(), dy.size());
  });
}

template <class T>
Var<T> gelu(Var<T> x) {
  auto& g = x.graph();
  const auto& xv = x.value();
  Tensor<T> out(xv.shape);
  constexpr T kInvSqrt2 = T(0.70710678118654752440);
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const T v = xv.data[i];
    out.data[i] = T(0.5) * v * (T(1) + std::erf(v * kInvSqrt2));
  }
  return g.op(std::move(out), g.requires_grad(x), [x](Graph<T>& gr, Var<T> self) {
    const auto& dy = gr.grad(self);
    const auto& xv = x.value();
    auto& dx = gr.grad(x);
    constexpr T kInvSqrt2 = T(0.70710678118654752440);
    const T kInvSqrt2Pi = T(0.5) * T(std::numbers::inv_sqrtpi) * T(std::numbers::sqrt2);
    for (std::size_t i = 0; i < xv.size(); ++i) {
      const T v = xv.data[i];
      const T cdf = T(0.5) * (T(1) + std::erf(v * kInvSqrt2));
      const T pdf = kInvSqrt2Pi * std::exp(T(-0.5) * v * v);
      dx[i] += dy[i] * (cdf + v * pdf);
    }
  });
}

template <class T>
Var<T> tanh(Var<T> x) {
  auto& g = x.graph();
  const auto& xv = x.value();
  Tensor<T> out(xv.shape);
  for (std::size_t i = 0; i < xv.size(); ++i) out.data[i] = std::tanh(xv.data[i]);
  return g.op(std::move(out), g.requires_grad(x), [x](Graph<T>& gr, Var<T> self) {
    const auto& dy = gr.grad(self);
    const auto& y = self.value();
    auto& dx = gr.grad(x);
    for (std::size_t i = 0; i < y.size(); ++i) dx[i] += dy[i] * (T(1) - y.data[i] * y.data[i]);
  });
}

template <class T>
Var<T> layer_norm(Var<T> x, Var<T> gamma, Var<T> beta, T eps) {
  auto& g = x.graph();
  const auto& xv = x.value();
  const std::size_t m = xv.rows(), n = xv.cols();
  if (gamma.value().size() != n) shape_fail("layer_norm", xv, gamma.value());
  if (beta.value().size() != n) shape_fail("layer_norm", xv, beta.value());
  const T* gv = gamma.value().data.data();
  const T* bv = beta.value().data.data();
  Tensor<T> out(xv.shape);
  // Saved per row: normalized values and 1/sigma.
  std::vector<T> xhat(xv.size());
  std::vector<T> inv_std(m);
  for (std::size_t i = 0; i < m; ++i) {
    const T* row = xv.row(i);
    T mu = 0;
    for (std::size_t j = 0; j < n; ++j) mu += row[j];
    mu /= T(n);
    T var = 0;
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= T(n);
    const T is = T(1) / std::sqrt(var + eps);
    inv_std[i] = is;
    T* xh = xhat.data() + i * n;
    T* o = out.row(i);
    for (std::size_t j = 0; j < n; ++j) {
      xh[j] = (row[j] - mu) * is;
      o[j] = xh[j] * gv[j] + bv[j];
    }
  }
  return g.op(std::move(out), any_grad(g, {x, gamma, beta}),
              [x, gamma, beta, m, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](
                  Graph<T>& gr, Var<T> self) {
                const auto& dy = gr.grad(self);
                const T* gv = gamma.value().data.data();
                if (gr.requires_grad(gamma)) {
                  T* dg = gr.grad(gamma).data();
                  for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t j = 0; j < n; ++j) dg[j] += dy[i * n + j] * xhat[i * n + j];
                  }
                }
                if (gr.requires_grad(beta)) {
                  T* db = gr.grad(beta).data();
                  for (std::size_t i = 0; i < m; ++i) kernels<T>().add(dy.data() + i * n, db, n);
                }
                if (gr.requires_grad(x)) {
                  T* dx = gr.grad(x).data();
                  for (std::size_t i = 0; i < m; ++i) {
                    const T* d = dy.data() + i * n;
                    const T* xh = xhat.data() + i * n;
                    T mean_d = 0, mean_dx = 0;
                    for (std::size_t j = 0; j < n; ++j) {
                      const T dxh = d[j] * gv[j];
                      mean_d += dxh;
                      mean_dx += dxh * xh[j];
                    }
                    mean_d /= T(n);
                    mean_dx /= T(n);
                    for (std::size_t j = 0; j < n; ++j) {
                      const T dxh = d[j] * gv[j];
                      dx[i * n + j] += inv_std[i] * (dxh - mean_d - xh[j] * mean_dx);
                    }
                  }
                }
              });
}

namespace {

template <class T>
void softmax_row(const T* in, T* out, std::size_t n) {
  T mx = -std::numeric_limits<T>::infinity();
  for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, in[j]);
  T sum = 0;
  for (std::size_t j = 0; j < n; ++j) {
    out[j] = std::exp(in[j] - mx);
    sum += out[j];
  }
  const T inv = T(1) / sum;
  for (std::size_t j = 0; j < n; ++j) out[j] *= inv;
}

}  // namespace

template <class T>
Var<T> softmax(Var<T> x) {
  auto& g = x.graph();
  const auto& xv = x.value();
  const std::size_t m = xv.rows(), n = xv.cols();
  Tensor<T> out(xv.shape);
  for (std::size_t i = 0; i < m; ++i) softmax_row(xv.row(i), out.row(i), n);
  return g.op(std::move(out), g.requires_grad(x), [x, m, n](Graph<T>& gr, Var<T> self) {
    const auto& dy = gr.grad(self);
    const auto& y = self.value();
    T* dx = gr.grad(x).data();
    for (std::size_t i = 0; i < m; ++i) {
      const T* yr = y.row(i);
      const T* dr = dy.data() + i * n;
      const T dotv = kernels<T>().dot(yr, dr, n);
      for (std::size_t j = 0; j < n; ++j) dx[i * n + j] += yr[j] * (dr[j] - dotv);
    }
  });
}

template <class T>
Var<T> embedding_lookup(Var<T> table, std::span<const std::int32_t> ids) {
  auto& g = table.graph();
  const auto& tv = table.value();
  const std::size_t vocab = tv.rows(), d = tv.cols();
  Tensor<T> out({ids.size(), d});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab) {
      throw std::out_of_range("embedding_lookup: id " + std::to_string(ids[i]) +
                              " outside table of " + std::to_string(vocab) + " rows");
    }
    std::copy_n(tv.row(static_cast<std::size_t>(ids[i])), d, out.row(i));
  }
  std::vector<std::int32_t> saved(ids.begin(), ids.end());
  return g.op(std::move(out), g.requires_grad(table),
              [table, d, saved = std::move(saved)](Graph<T>& gr, Var<T> self) {
                const auto& dy = gr.grad(self);
                T* dt = gr.grad(table).data();
                for (std::size_t i = 0; i < saved.size(); ++i) {
                  kernels<T>().add(dy.data() + i * d, dt + static_cast<std::size_t>(saved[i]) * d, d);
                }
              });
}

template <class T>
Var<T> gather_rows(Var<T> x, std::span<const std::size_t> rows) {
  auto& g = x.graph();
  const auto& xv = x.value();
  const std::size_t m = xv.rows(), n = xv.cols();
  Tensor<T> out({rows.size(), n});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= m) {
      throw std::out_of_range("gather_rows: row " + std::to_string(rows[i]) + " outside " +
                              std::to_string(m) + " rows");
    }
    std::copy_n(xv.row(rows[i]), n, out.row(i));
  }
  std::vector<std::size_t> saved(rows.begin(), rows.end());
  return g.op(std::move(out), g.requires_grad(x),
              [x, n, saved = std::move(saved)](Graph<T>& gr, Var<T> self) {
                const auto& dy = gr.grad(self);
                T* dx = gr.grad(x).data();
                for (std::size_t i = 0; i < saved.size(); ++i) {
                  kernels<T>().add(dy.data() + i * n, dx + saved[i] * n, n);
                }
              });
}

template <class T>
Var<T> cross_entropy(Var<T> logits, std::span<const std::int32_t> targets) {
  auto& g = logits.graph();
  const auto& lv = logits.value();
  const std::size_t m = lv.rows(), c = lv.cols();
  if (targets.size() != m) {
    throw ShapeError("cross_entropy: " + std::to_string(targets.size()) + " targets for logits " +
                     shape_str(lv.shape));
  }
  if (m == 0) return g.constant(Tensor<T>({1}));
  std::vector<T> probs(m * c);
  T loss = 0;
  for (std::size_t i = 0; i < m; ++i) {
    const auto t = targets[i];
    if (t < 0 || static_cast<std::size_t>(t) >= c) {
      throw std::out_of_range("cross_entropy: target " + std::to_string(t) + " outside " +
                              std::to_string(c) + " classes");
    }
    const T* row = lv.row(i);
    T* p = probs.data() + i * c;
    softmax_row(row, p, c);
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t j = 0; j < c; ++j) mx = std::max(mx, row[j]);
    T sum = 0;
    for (std::size_t j = 0; j < c; ++j) sum += std::exp(row[j] - mx);
    loss += mx + std::log(sum) - row[static_cast<std::size_t>(t)];
  }
  Tensor<T> out({1}, T(loss / T(m)));
  std::vector<std::int32_t> saved(targets.begin(), targets.end());
  return g.op(std::move(out), g.requires_grad(logits),
              [logits, m, c, probs = std::move(probs), saved = std::move(saved)](Graph<T>& gr,
                                                                                  Var<T> self) {
                const T dl = gr.grad(self)[0] / T(m);
                T* dx = gr.grad(logits).data();
                for (std::size_t i = 0; i < m; ++i) {
                  for (std::size_t j = 0; j < c; ++j) dx[i * c + j] += dl * probs[i * c + j];
                  dx[i * c + static_cast<std::size_t>(saved[i])] -= dl;
                }
              });
}

template <class T>
Var<T> mean(Var<T> x) {
  auto& g = x.graph();
  const auto& xv = x.value();
  if (xv.size() == 0) throw ShapeError("mean: empty tensor " + shape_str(xv.shape));
  T s = 0;
  for (T v : xv.data) s += v;
  Tensor<T> out({1}, T(s / T(xv.size())));
  return g.op(std::move(out), g.requires_grad(x), [x](Graph<T>& gr, Var<T> self) {
    auto& dx = gr.grad(x);
    const T d = gr.grad(self)[0] / T(dx.size());
    for (auto& v : dx) v += d;
  });
}

template <class T>
Var<T> weighted_sum(Var<T> x, std::span<const T> weights) {
  auto& g = x.graph();
  const auto& xv = x.value();
  if (weights.size() != xv.size()) {
    throw ShapeError("weighted_sum: " + std::to_string(weights.size()) + " weights for shape " +
                     shape_str(xv.shape));
  }
  Tensor<T> out({1}, kernels<T>().dot(xv.data.data(), weights.data(), xv.size()));
  std::vector<T> w(weights.begin(), weights.end());
  return g.op(std::move(out), g.requires_grad(x), [x, w = std::move(w)](Graph<T>& gr, Var<T> self) {
    kernels<T>().axpy(gr.grad(self)[0], w.data(), gr.grad(x).data(), w.size());
  });
}

template <class T>
Var<T> attention(Var<T> q, Var<T> k, Var<T> v, AttentionShape shape,
                 std::span<const std::uint8_t> key_mask, AttentionProbs<T>* capture) {
  auto& g = q.graph();
  const auto& qv = q.value();
  const auto& kv = k.value();
  const auto& vv = v.value();
  const std::size_t B = shape.batch, S = shape.seq, H = shape.heads;
  const std::size_t N = B * S;
  const std::size_t D = qv.cols();
  if (qv.rows() != N || kv.rows() != N || vv.rows() != N || kv.cols() != D || vv.cols() != D) {
    shape_fail("attention", qv, kv);
  }
  if (H == 0 || D % H != 0) {
    throw ShapeError("attention: width " + std::to_string(D) + " not divisible by " +
                     std::to_string(H) + " heads");
  }
  if (key_mask.size() != N) {
    throw ShapeError("attention: key mask of length " + std::to_string(key_mask.size()) +
                     " for " + std::to_string(N) + " positions");
  }
  const std::size_t dh = D / H;
  const T inv_scale = T(1) / std::sqrt(T(dh));
  const auto& kt = kernels<T>();

  std::vector<T> probs(B * H * S * S, T(0));
  Tensor<T> out({N, D});
  std::vector<T> scores(S);
  for (std::size_t b = 0; b < B; ++b) {
    const std::uint8_t* mask = key_mask.data() + b * S;
    for (std::size_t h = 0; h < H; ++h) {
      const std::size_t off = h * dh;
      for (std::size_t i = 0; i < S; ++i) {
        const T* qi = qv.data.data() + (b * S + i) * D + off;
        T* p = probs.data() + ((b * H + h) * S + i) * S;
        T mx = -std::numeric_limits<T>::infinity();
        for (std::size_t j = 0; j < S; ++j) {
          if (!mask[j]) continue;
          scores[j] = kt.dot(qi, kv.data.data() + (b * S + j) * D + off, dh) * inv_scale;
          mx = std::max(mx, scores[j]);
        }
        if (mx == -std::numeric_limits<T>::infinity()) continue;
        T sum = 0;
        for (std::size_t j = 0; j < S; ++j) {
          if (!mask[j]) continue;
          p[j] = std::exp(scores[j] - mx);
          sum += p[j];
        }
        const T inv = T(1) / sum;
        T* o = out.data.data() + (b * S + i) * D + off;
        for (std::size_t j = 0; j < S; ++j) {
          if (!mask[j]) continue;
          p[j] *= inv;
          kt.axpy(p[j], vv.data.data() + (b * S + j) * D + off, o, dh);
        }
      }
    }
  }
  if (capture) {
    capture->probs = probs;
    capture->shape = shape;
  }
  return g.op(
      std::move(out), any_grad(g, {q, k, v}),
      [q, k, v, B, S, H, D, dh, inv_scale, probs = std::move(probs)](Graph<T>& gr, Var<T> self) {
        const auto& kt = kernels<T>();
        const T* dy = gr.grad(self).data();
        const T* qd = q.value().data.data();
        const T* kd = k.value().data.data();
        const T* vd = v.value().data.data();
        T* dq = gr.requires_grad(q) ? gr.grad(q).data() : nullptr;
        T* dk = gr.requires_grad(k) ? gr.grad(k).data() : nullptr;
        T* dv = gr.requires_grad(v) ? gr.grad(v).data() : nullptr;
        std::vector<T> dp(S);
        for (std::size_t b = 0; b < B; ++b) {
          for (std::size_t h = 0; h < H; ++h) {
            const std::size_t off = h * dh;
            for (std::size_t i = 0; i < S; ++i) {
              const T* p = probs.data() + ((b * H + h) * S + i) * S;
              const T* dyi = dy + (b * S + i) * D + off;
              // dP_ij = dy_i . v_j ; dS = P * (dP - sum_j P dP)
              T row_dot = 0;
              for (std::size_t j = 0; j < S; ++j) {
                if (p[j] == T(0)) {
                  dp[j] = 0;
                  continue;
                }
                dp[j] = kt.dot(dyi, vd + (b * S + j) * D + off, dh);
                row_dot += p[j] * dp[j];
                if (dv) kt.axpy(p[j], dyi, dv + (b * S + j) * D + off, dh);
              }
              for (std::size_t j = 0; j < S; ++j) {
                if (p[j] == T(0)) continue;
                const T ds = p[j] * (dp[j] - row_dot) * inv_scale;
                if (dq) kt.axpy(ds, kd + (b * S + j) * D + off, dq + (b * S + i) * D + off, dh);
                if (dk) kt.axpy(ds, qd + (b * S + i) * D + off, dk + (b * S + j) * D + off, dh);
              }
            }
          }
        }
      });
}

#define XLAB_INSTANTIATE_OPS(T)                                                                   \
  template Var<T> matmul<T>(Var<T>, Var<T>);                                                      \
  template Var<T> matmul_nt<T>(Var<T>, Var<T>);                                                   \
  template Var<T> add<T>(Var<T>, Var<T>);                                                         \
  template Var<T> add_bias<T>(Var<T>, Var<T>);                                                    \
  template Var<T> scale<T>(Var<T>, T);                                                            \
  template Var<T> gelu<T>(Var<T>);                                                                \
  template Var<T> tanh<T>(Var<T>);                                                                \
  template Var<T> layer_norm<T>(Var<T>, Var<T>, Var<T>, T);                                       \
  template Var<T> softmax<T>(Var<T>);                                                             \
  template Var<T> embedding_lookup<T>(Var<T>, std::span<const std::int32_t>);                     \
  template Var<T> gather_rows<T>(Var<T>, std::span<const std::size_t>);                           \
  template Var<T> cross_entropy<T>(Var<T>, std::span<const std::int32_t>);                        \
  template Var<T> mean<T>(Var<T>);                                                                \
  template Var<T> weighted_sum<T>(Var<T>, std::span<const T>);                                    \
  template Var<T> attention<T>(Var<T>, Var<T>, Var<T>, AttentionShape,                            \
                               std::span<const std::uint8_t>, AttentionProbs<T>*);

XLAB_INSTANTIATE_OPS(float)
XLAB_INSTANTIATE_OPS(double)

#undef XLAB_INSTANTIATE_OPS

}  // namespace xlab::num
