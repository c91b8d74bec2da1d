#include "xlab/encoder/encoder.hpp"

#include <cmath>
#include <stdexcept>

#include "xlab/common/random.hpp"

namespace xlab::encoder {

using num::ParamRef;

std::vector<std::string> EncoderConfig::violations() const {
  std::vector<std::string> v;
  if (depth < 1) v.push_back("depth must be >= 1");
  if (heads < 1) v.push_back("heads must be >= 1");
  if (hidden < 1) v.push_back("hidden must be >= 1");
  if (heads >= 1 && hidden % heads != 0) {
    v.push_back("hidden (" + std::to_string(hidden) + ") must be divisible by heads (" + std::to_string(heads) + ")");
  }
  if (vocab_size < 1) v.push_back("vocab_size must be >= 1");
  if (max_positions < 1) v.push_back("max_positions must be >= 1");
  if (segment_types < 1) v.push_back("segment_types must be >= 1");
  return v;
}

void EncoderConfig::validate() const {
  const auto v = violations();
  if (v.empty()) return;
  std::string msg = "invalid encoder config:";
  for (const auto& s : v) msg += " " + s + ";";
  msg.pop_back();
  throw std::invalid_argument(msg);
}

nlohmann::json EncoderConfig::to_json() const {
  return {{"depth", depth},           {"heads", heads},
          {"hidden", hidden},         {"intermediate", intermediate_size()},
          {"vocab_size", vocab_size}, {"max_positions", max_positions},
          {"segment_types", segment_types}, {"language_id", language_id}};
}

EncoderConfig EncoderConfig::from_json(const nlohmann::json& j) {
  EncoderConfig c;
  c.depth = j.value("depth", c.depth);
  c.heads = j.value("heads", c.heads);
  c.hidden = j.value("hidden", c.hidden);
  c.intermediate = j.value("intermediate", std::size_t{0});
  c.vocab_size = j.value("vocab_size", c.vocab_size);
  c.max_positions = j.value("max_positions", c.max_positions);
  c.segment_types = j.value("segment_types", c.segment_types);
  c.language_id = j.value("language_id", c.language_id);
  if (c.intermediate == 4 * c.hidden) c.intermediate = 0;
  return c;
}

std::size_t param_count(const EncoderConfig& c) {
  const std::size_t H = c.hidden, I = c.intermediate_size(), V = c.vocab_size;
  const std::size_t embeddings = (V + c.max_positions + c.segment_types) * H + 2 * H;
  const std::size_t attention = 4 * (H * H + H) + 2 * H;
  const std::size_t ffn = H * I + I + I * H + H + 2 * H;
  const std::size_t pooler = H * H + H;
  const std::size_t mlm = H * H + H + 2 * H + V;
  const std::size_t nsp = 2 * H + 2;
  return embeddings + c.depth * (attention + ffn) + pooler + mlm + nsp;
}

std::size_t solve_hidden(const EncoderConfig& base, std::size_t target) {
  EncoderConfig c = base;
  c.intermediate = 0;
  if (c.heads < 1) throw std::invalid_argument("solve_hidden: heads must be >= 1");
  std::size_t best = c.heads;
  double best_err = INFINITY;
  // param_count grows monotonically with hidden; stop once past the target.
  for (std::size_t h = c.heads;; h += c.heads) {
    c.hidden = h;
    const std::size_t n = param_count(c);
    const double err = std::abs(static_cast<double>(n) - static_cast<double>(target));
    if (err < best_err) best_err = err, best = h;
    if (n > target) break;
  }
  return best;
}

template <class T>
void ModelState<T>::add(std::string name, Tensor<T> t) {
  if (!by_name.emplace(name, tensors.size()).second) throw std::logic_error("duplicate parameter " + name);
  names.push_back(std::move(name));
  tensors.push_back(std::move(t));
}

template <class T>
std::size_t ModelState<T>::index(std::string_view name) const {
  const auto it = by_name.find(name);
  if (it == by_name.end()) throw std::out_of_range("no parameter named '" + std::string(name) + "'");
  return it->second;
}

template <class T>
Tensor<T>& ModelState<T>::at(std::string_view name) {
  return tensors[index(name)];
}

template <class T>
const Tensor<T>& ModelState<T>::at(std::string_view name) const {
  return tensors[index(name)];
}

template <class T>
std::vector<ParamRef<T>> ModelState<T>::params() {
  std::vector<ParamRef<T>> out;
  for (std::size_t i = 0; i < tensors.size(); ++i) out.push_back({names[i], &tensors[i]});
  return out;
}

template <class T>
std::size_t ModelState<T>::scalar_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.size();
  return n;
}

namespace {

enum class Init { normal, zeros, ones };

template <class T>
Tensor<T> make(num::Shape shape, Init init, std::uint64_t seed, const std::string& name) {
  Tensor<T> t(std::move(shape));
  if (init == Init::ones) {
    std::fill(t.data.begin(), t.data.end(), T(1));
  } else if (init == Init::normal) {
    Rng rng(derive_seed(seed, {fnv1a64(name)}));
    for (auto& x : t.data) x = static_cast<T>(rng.truncated_normal(0.02));
  }
  return t;
}

}  // namespace

template <class T>
ModelState<T> build(const EncoderConfig& c, std::uint64_t seed) {
  c.validate();
  ModelState<T> m;
  m.config = c;
  const std::size_t H = c.hidden, I = c.intermediate_size();
  auto add = [&](const std::string& name, num::Shape shape, Init init) {
    m.add(name, make<T>(std::move(shape), init, seed, name));
  };
  auto layer_norm = [&](const std::string& prefix) {
    add(prefix + ".gamma", {H}, Init::ones);
    add(prefix + ".beta", {H}, Init::zeros);
  };
  auto linear = [&](const std::string& prefix, std::size_t in, std::size_t out) {
    add(prefix + ".weight", {in, out}, Init::normal);
    add(prefix + ".bias", {out}, Init::zeros);
  };

  add("embeddings.token", {c.vocab_size, H}, Init::normal);
  add("embeddings.position", {c.max_positions, H}, Init::normal);
  add("embeddings.segment", {c.segment_types, H}, Init::normal);
  layer_norm("embeddings.ln");
  for (std::size_t l = 0; l < c.depth; ++l) {
    const std::string p = "layer." + std::to_string(l);
    for (const char* w : {"q", "k", "v", "o"}) linear(p + ".attn." + w, H, H);
    layer_norm(p + ".attn.ln");
    linear(p + ".ffn.in", H, I);
    linear(p + ".ffn.out", I, H);
    layer_norm(p + ".ffn.ln");
  }
  linear("pooler", H, H);
  linear("mlm.transform", H, H);
  layer_norm("mlm.ln");
  add("mlm.output_bias", {c.vocab_size}, Init::zeros);
  linear("nsp", H, 2);
  return m;
}

void Batch::validate(const EncoderConfig& c) const {
  const std::size_t n = batch * seq;
  if (batch == 0 || seq == 0) throw std::invalid_argument("batch: empty batch");
  if (tokens.size() != n || segments.size() != n || mask.size() != n) {
    throw std::invalid_argument("batch: expected " + std::to_string(n) + " tokens, segments and mask entries");
  }
  if (seq > c.max_positions) {
    throw std::invalid_argument("batch: sequence length " + std::to_string(seq) + " exceeds max_positions " +
                                std::to_string(c.max_positions));
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (tokens[i] < 0 || static_cast<std::size_t>(tokens[i]) >= c.vocab_size) {
      throw std::invalid_argument("batch: token id " + std::to_string(tokens[i]) + " at position " +
                                  std::to_string(i) + " outside vocabulary of " + std::to_string(c.vocab_size));
    }
    if (segments[i] < 0 || static_cast<std::size_t>(segments[i]) >= c.segment_types) {
      throw std::invalid_argument("batch: segment id " + std::to_string(segments[i]) + " at position " +
                                  std::to_string(i) + " out of range");
    }
  }
}

template <class T>
Bound<T> bind(Graph<T>& g, ModelState<T>& model) {
  Bound<T> b;
  b.model = &model;
  for (auto& t : model.tensors) b.vars.push_back(g.param(t));
  return b;
}

template <class T>
EncoderOutput<T> forward(Graph<T>& g, const Bound<T>& P, const Batch& batch, AttentionTrace<T>* trace) {
  const EncoderConfig& c = P.model->config;
  batch.validate(c);
  std::vector<std::int32_t> positions(batch.batch * batch.seq);
  for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = static_cast<std::int32_t>(i % batch.seq);

  Var<T> x = num::add(num::embedding_lookup(P["embeddings.token"], std::span<const std::int32_t>(batch.tokens)),
                      num::embedding_lookup(P["embeddings.position"], std::span<const std::int32_t>(positions)));
  x = num::add(x, num::embedding_lookup(P["embeddings.segment"], std::span<const std::int32_t>(batch.segments)));
  x = num::layer_norm(x, P["embeddings.ln.gamma"], P["embeddings.ln.beta"]);

  auto linear = [&](Var<T> in, const std::string& prefix) {
    return num::add_bias(num::matmul(in, P[prefix + ".weight"]), P[prefix + ".bias"]);
  };
  const num::AttentionShape shape{batch.batch, batch.seq, c.heads};
  if (trace) trace->assign(c.depth, {});
  for (std::size_t l = 0; l < c.depth; ++l) {
    const std::string p = "layer." + std::to_string(l);
    Var<T> a = num::attention(linear(x, p + ".attn.q"), linear(x, p + ".attn.k"), linear(x, p + ".attn.v"), shape,
                              std::span<const std::uint8_t>(batch.mask), trace ? &(*trace)[l] : nullptr);
    x = num::layer_norm(num::add(x, linear(a, p + ".attn.o")), P[p + ".attn.ln.gamma"], P[p + ".attn.ln.beta"]);
    Var<T> f = linear(num::gelu(linear(x, p + ".ffn.in")), p + ".ffn.out");
    x = num::layer_norm(num::add(x, f), P[p + ".ffn.ln.gamma"], P[p + ".ffn.ln.beta"]);
  }

  std::vector<std::size_t> first(batch.batch);
  for (std::size_t b = 0; b < batch.batch; ++b) first[b] = b * batch.seq;
  Var<T> pooled = num::tanh(linear(num::gather_rows(x, std::span<const std::size_t>(first)), "pooler"));
  return {x, pooled};
}

template <class T>
HeadOutput<T> mlm_nsp_logits(Graph<T>&, const Bound<T>& P, const EncoderOutput<T>& enc,
                             std::span<const std::size_t> masked_rows) {
  const std::size_t rows = enc.hidden.value().rows();
  for (std::size_t r : masked_rows) {
    if (r >= rows) {
      throw std::invalid_argument("masked position " + std::to_string(r) + " outside " + std::to_string(rows) +
                                  " rows");
    }
  }
  HeadOutput<T> out;
  Var<T> h = num::gather_rows(enc.hidden, masked_rows);
  h = num::gelu(num::add_bias(num::matmul(h, P["mlm.transform.weight"]), P["mlm.transform.bias"]));
  h = num::layer_norm(h, P["mlm.ln.gamma"], P["mlm.ln.beta"]);
  out.mlm_logits = num::add_bias(num::matmul_nt(h, P["embeddings.token"]), P["mlm.output_bias"]);
  out.nsp_logits = num::add_bias(num::matmul(enc.pooled, P["nsp.weight"]), P["nsp.bias"]);
  return out;
}

#define XLAB_INSTANTIATE(T)                                                                                   \
  template struct ModelState<T>;                                                                              \
  template ModelState<T> build<T>(const EncoderConfig&, std::uint64_t);                                       \
  template Bound<T> bind<T>(Graph<T>&, ModelState<T>&);                                                       \
  template EncoderOutput<T> forward<T>(Graph<T>&, const Bound<T>&, const Batch&, AttentionTrace<T>*);         \
  template HeadOutput<T> mlm_nsp_logits<T>(Graph<T>&, const Bound<T>&, const EncoderOutput<T>&,              \
                                           std::span<const std::size_t>);

XLAB_INSTANTIATE(float)
XLAB_INSTANTIATE(double)

}  // namespace xlab::encoder
