#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "xlab/num/graph.hpp"

namespace xlab::num {

// All matrix ops treat a tensor as [rows, cols] with cols = product of the
// trailing dimensions. Shape mismatches throw ShapeError naming the op.

/// [m,k] x [k,n] -> [m,n]
template <class T>
Var<T> matmul(Var<T> a, Var<T> b);

/// [m,k] x [n,k]^T -> [m,n]
template <class T>
Var<T> matmul_nt(Var<T> a, Var<T> b);

/// Elementwise sum of equal shapes.
template <class T>
Var<T> add(Var<T> a, Var<T> b);

/// [m,n] + bias[n] broadcast over rows.
template <class T>
Var<T> add_bias(Var<T> x, Var<T> bias);

template <class T>
Var<T> scale(Var<T> x, T factor);

/// Exact (erf) GELU.
template <class T>
Var<T> gelu(Var<T> x);

template <class T>
Var<T> tanh(Var<T> x);

/// Per-row normalization with affine gamma/beta of length cols.
template <class T>
Var<T> layer_norm(Var<T> x, Var<T> gamma, Var<T> beta, T eps = T(1e-12));

/// Row-wise softmax.
template <class T>
Var<T> softmax(Var<T> x);

/// table[V,d], ids -> [len(ids), d]. Throws on ids outside [0, V).
template <class T>
Var<T> embedding_lookup(Var<T> table, std::span<const std::int32_t> ids);

/// x[m,n] -> x[rows] as [len(rows), n].
template <class T>
Var<T> gather_rows(Var<T> x, std::span<const std::size_t> rows);

/// Mean over rows of (logsumexp(logits_i) - logits_i[target_i]). Zero rows
/// yields a constant 0.
template <class T>
Var<T> cross_entropy(Var<T> logits, std::span<const std::int32_t> targets);

/// Mean of all elements as a scalar.
template <class T>
Var<T> mean(Var<T> x);

/// Sum of all elements times `weights` (same size), as a scalar. Handy for
/// building random projections in gradient checks.
template <class T>
Var<T> weighted_sum(Var<T> x, std::span<const T> weights);

struct AttentionShape {
  std::size_t batch = 1;
  std::size_t seq = 1;
  std::size_t heads = 1;
};

/// Probabilities captured by an instrumented forward, [batch, heads, seq, seq].
template <class T>
struct AttentionProbs {
  std::vector<T> probs;
  AttentionShape shape;
};

/// Scaled dot-product multi-head attention on packed [batch*seq, d] inputs.
/// `key_mask[b*seq + j]` == 0 removes key j of sequence b; a query whose
/// every key is masked attends to nothing and outputs zeros.
template <class T>
Var<T> attention(Var<T> q, Var<T> k, Var<T> v, AttentionShape shape,
                 std::span<const std::uint8_t> key_mask, AttentionProbs<T>* capture = nullptr);

}  // namespace xlab::num
