#include <bit>
#include <cstring>

#include "xlab/common/digest.hpp"
#include "xlab/pretrain/pretrain.hpp"

namespace xlab::pretrain {

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'X', 'L', 'B', '1'};

class Writer {
 public:
  template <class T>
  void put(T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.append(buf, sizeof(T));
  }
  void put_bytes(std::string_view s) { out.append(s); }
  void put_string(std::string_view s) {
    put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    put_bytes(s);
  }
  void put_floats(const std::vector<float>& v) {
    out.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(float));
  }
  std::string out;
};

class Reader {
 public:
  explicit Reader(std::string_view b) : bytes_(b) {}
  void context(std::string c) { context_ = std::move(c); }

  template <class T>
  T get() {
    T v;
    std::memcpy(&v, take(sizeof(T)).data(), sizeof(T));
    return v;
  }
  std::string get_string(std::size_t limit) {
    const auto n = get<std::uint32_t>();
    if (n > limit) fail("string length " + std::to_string(n) + " is implausible");
    return std::string(take(n));
  }
  std::vector<float> get_floats(std::uint64_t n) {
    if (n > remaining() / sizeof(float)) fail("truncated data (" + std::to_string(n) + " floats expected)");
    std::vector<float> v(static_cast<std::size_t>(n));
    std::memcpy(v.data(), take(v.size() * sizeof(float)).data(), v.size() * sizeof(float));
    return v;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  [[noreturn]] void fail(const std::string& what) const {
    throw CheckpointError("checkpoint: " + what + (context_.empty() ? "" : " while reading " + context_));
  }

 private:
  std::string_view take(std::size_t n) {
    if (n > remaining()) fail("unexpected end of file");
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
  std::string context_;
};

void put_tensor(Writer& w, const num::Tensor<float>& t) {
  w.put<std::uint32_t>(static_cast<std::uint32_t>(t.shape.size()));
  for (auto d : t.shape) w.put<std::uint64_t>(d);
  w.put_floats(t.data);
}

num::Tensor<float> get_tensor(Reader& r) {
  const auto ndim = r.get<std::uint32_t>();
  if (ndim > 8) r.fail("rank " + std::to_string(ndim) + " is implausible");
  num::Shape shape;
  std::uint64_t n = 1;
  for (std::uint32_t i = 0; i < ndim; ++i) {
    const auto d = r.get<std::uint64_t>();
    if (d != 0 && n > (std::uint64_t{1} << 40) / d) r.fail("shape is implausibly large");
    n *= d;
    shape.push_back(static_cast<std::size_t>(d));
  }
  return num::Tensor<float>(std::move(shape), r.get_floats(n));
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& c) {
  if (c.names.size() != c.tensors.size()) throw std::invalid_argument("checkpoint: names and tensors differ in count");
  Writer w;
  w.put_bytes(std::string_view(kMagic, 4));
  w.put_string(c.config.dump());
  w.put<std::uint32_t>(static_cast<std::uint32_t>(c.tensors.size()));
  for (std::size_t i = 0; i < c.tensors.size(); ++i) {
    w.put_string(c.names[i]);
    put_tensor(w, c.tensors[i]);
  }
  w.put<std::uint64_t>(c.adam.step);
  w.put<double>(c.adam.lr);
  w.put<double>(c.adam.beta1);
  w.put<double>(c.adam.beta2);
  w.put<double>(c.adam.eps);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(c.adam.m.size()));
  for (std::size_t i = 0; i < c.adam.m.size(); ++i) {
    put_tensor(w, c.adam.m[i]);
    put_tensor(w, c.adam.v[i]);
  }
  w.put<std::uint64_t>(c.step);
  return std::move(w.out);
}

Checkpoint parse_checkpoint(std::string_view bytes) {
  Reader r(bytes);
  Checkpoint c;
  r.context("header");
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) r.fail("bad magic (expected XLB1)");
  (void)r.get<std::uint32_t>();
  r.context("config");
  const std::string cfg = r.get_string(1u << 24);
  try {
    c.config = nlohmann::json::parse(cfg);
  } catch (const nlohmann::json::exception& e) {
    r.fail(std::string("config is not valid JSON: ") + e.what());
  }
  r.context("tensor table");
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    r.context("tensor #" + std::to_string(i));
    std::string name = r.get_string(4096);
    r.context("tensor '" + name + "'");
    c.tensors.push_back(get_tensor(r));
    c.names.push_back(std::move(name));
  }
  r.context("optimizer state");
  c.adam.step = r.get<std::uint64_t>();
  c.adam.lr = r.get<double>();
  c.adam.beta1 = r.get<double>();
  c.adam.beta2 = r.get<double>();
  c.adam.eps = r.get<double>();
  const auto moments = r.get<std::uint32_t>();
  if (moments != 0 && moments != count) r.fail("moment count does not match tensor count");
  for (std::uint32_t i = 0; i < moments; ++i) {
    r.context("optimizer moments of '" + c.names[i] + "'");
    c.adam.m.push_back(get_tensor(r));
    c.adam.v.push_back(get_tensor(r));
    if (c.adam.m.back().shape != c.tensors[i].shape || c.adam.v.back().shape != c.tensors[i].shape) {
      r.fail("moment shape differs from the parameter");
    }
  }
  r.context("trailer");
  c.step = r.get<std::uint64_t>();
  if (r.remaining() != 0) r.fail(std::to_string(r.remaining()) + " trailing bytes");
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  write_file_atomic(path, serialize_checkpoint(c));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  try {
    return parse_checkpoint(read_file(path));
  } catch (const CheckpointError& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  }
}

Checkpoint make_checkpoint(const encoder::ModelState<float>& model, const num::AdamState<float>& adam,
                           std::uint64_t step, nlohmann::json meta) {
  Checkpoint c;
  c.config = std::move(meta);
  c.config["encoder"] = model.config.to_json();
  c.names = model.names;
  c.tensors.reserve(model.tensors.size());
  for (const auto& t : model.tensors) c.tensors.emplace_back(t.shape, t.data);
  c.adam = adam;
  c.step = step;
  return c;
}

void restore_model(const Checkpoint& c, encoder::ModelState<float>& model) {
  for (std::size_t i = 0; i < model.names.size(); ++i) {
    const auto& name = model.names[i];
    const auto it = std::find(c.names.begin(), c.names.end(), name);
    if (it == c.names.end()) throw CheckpointError("checkpoint has no tensor '" + name + "'");
    const auto& src = c.tensors[static_cast<std::size_t>(it - c.names.begin())];
    if (src.shape != model.tensors[i].shape) {
      throw CheckpointError("tensor '" + name + "' has shape " + num::shape_str(src.shape) + " in the checkpoint but " +
                            num::shape_str(model.tensors[i].shape) + " in the model");
    }
  }
  if (c.names.size() != model.names.size()) {
    throw CheckpointError("checkpoint holds " + std::to_string(c.names.size()) + " tensors, model expects " +
                          std::to_string(model.names.size()));
  }
  for (std::size_t i = 0; i < model.names.size(); ++i) {
    const auto it = std::find(c.names.begin(), c.names.end(), model.names[i]);
    model.tensors[i].data = c.tensors[static_cast<std::size_t>(it - c.names.begin())].data;
  }
}

encoder::ModelState<float> model_from_checkpoint(const Checkpoint& c) {
  if (!c.config.contains("encoder")) throw CheckpointError("checkpoint config lacks an encoder section");
  auto model = encoder::build<float>(encoder::EncoderConfig::from_json(c.config["encoder"]), 0);
  restore_model(c, model);
  return model;
}

}  // namespace xlab::pretrain
