#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "xlab/num/ops.hpp"
#include "xlab/num/optim.hpp"

namespace xlab::encoder {

using num::Graph;
using num::Tensor;
using num::Var;

struct EncoderConfig {
  std::size_t depth = 2;
  std::size_t heads = 2;
  std::size_t hidden = 64;
  std::size_t intermediate = 0;  // 0 means 4 * hidden
  std::size_t vocab_size = 0;
  std::size_t max_positions = 128;
  std::size_t segment_types = 2;
  bool language_id = false;

  std::size_t intermediate_size() const { return intermediate ? intermediate : 4 * hidden; }
  /// Every violated invariant, empty when valid.
  std::vector<std::string> violations() const;
  /// Throws std::invalid_argument listing all violations.
  void validate() const;

  nlohmann::json to_json() const;
  static EncoderConfig from_json(const nlohmann::json& j);
  bool operator==(const EncoderConfig&) const = default;
};

/// Closed-form count of trainable scalars.
std::size_t param_count(const EncoderConfig& config);

/// Smallest-error hidden width (a multiple of heads, intermediate = 4x) for a
/// target parameter count, other fields taken from `base`.
std::size_t solve_hidden(const EncoderConfig& base, std::size_t target_params);

/// Named parameters in a fixed order. Tensors never move after build.
template <class T>
struct ModelState {
  EncoderConfig config;
  std::vector<std::string> names;
  std::vector<Tensor<T>> tensors;
  std::map<std::string, std::size_t, std::less<>> by_name;

  void add(std::string name, Tensor<T> t);
  Tensor<T>& at(std::string_view name);
  const Tensor<T>& at(std::string_view name) const;
  std::size_t index(std::string_view name) const;
  std::vector<num::ParamRef<T>> params();
  std::size_t scalar_count() const;
};

/// Truncated-normal (sigma 0.02) weights and embeddings, zero biases, unit
/// layer-norm gains. Each tensor draws from its own stream keyed by name, so
/// float and double builds from one seed hold the same values up to rounding.
template <class T>
ModelState<T> build(const EncoderConfig& config, std::uint64_t seed);

template <class To, class From>
ModelState<To> cast_model(const ModelState<From>& m) {
  ModelState<To> out;
  out.config = m.config;
  out.names = m.names;
  out.by_name = m.by_name;
  for (const auto& t : m.tensors) out.tensors.push_back(num::tensor_cast<To>(t));
  return out;
}

/// Packed batch of equal-length sequences, row-major [batch, seq].
struct Batch {
  std::size_t batch = 0;
  std::size_t seq = 0;
  std::vector<std::int32_t> tokens;
  std::vector<std::int32_t> segments;
  std::vector<std::uint8_t> mask;  // 1 for real tokens

  /// Throws std::invalid_argument on inconsistent sizes or ids.
  void validate(const EncoderConfig& config) const;
};

/// Parameters bound as graph leaves, one per tensor.
template <class T>
struct Bound {
  ModelState<T>* model = nullptr;
  std::vector<Var<T>> vars;
  Var<T> operator[](std::string_view name) const { return vars[model->index(name)]; }
};

template <class T>
Bound<T> bind(Graph<T>& g, ModelState<T>& model);

template <class T>
struct EncoderOutput {
  Var<T> hidden;  // [batch*seq, hidden]
  Var<T> pooled;  // [batch, hidden]
};

/// Attention probabilities per layer, filled when passed to forward.
template <class T>
using AttentionTrace = std::vector<num::AttentionProbs<T>>;

template <class T>
EncoderOutput<T> forward(Graph<T>& g, const Bound<T>& params, const Batch& batch,
                         AttentionTrace<T>* trace = nullptr);

template <class T>
struct HeadOutput {
  Var<T> mlm_logits;  // [n_masked, vocab]
  Var<T> nsp_logits;  // [batch, 2]
};

/// `masked_rows` index the packed [batch*seq] rows. Throws on out-of-range.
template <class T>
HeadOutput<T> mlm_nsp_logits(Graph<T>& g, const Bound<T>& params, const EncoderOutput<T>& enc,
                             std::span<const std::size_t> masked_rows);

/// Names of the NSP classifier tensors.
inline const std::vector<std::string>& nsp_param_names() {
  static const std::vector<std::string> names{"nsp.weight", "nsp.bias"};
  return names;
}

}  // namespace xlab::encoder
