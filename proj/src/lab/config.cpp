#include "xlab/lab/config.hpp"

#include <set>
#include <stdexcept>

#include "xlab/common/digest.hpp"
#include "xlab/corpuslab/ablations.hpp"

namespace xlab::lab {

namespace fs = std::filesystem;

namespace {

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& section) {
  if (!j.is_object()) throw std::invalid_argument("config: " + section + " must be an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [k, v] : j.items()) {
    if (!ok.contains(k)) throw std::invalid_argument("config: unknown key '" + k + "' in " + section);
  }
}

// Keys of a section that has its own JSON form, minus the ones the lab owns.
void check_keys_like(const json& j, const json& reference, const std::set<std::string>& owned,
                     const std::string& section) {
  if (!j.is_object()) throw std::invalid_argument("config: " + section + " must be an object");
  for (const auto& [k, v] : j.items()) {
    if (owned.contains(k)) {
      throw std::invalid_argument("config: '" + k + "' in " + section + " is derived, not configurable");
    }
    if (!reference.contains(k)) throw std::invalid_argument("config: unknown key '" + k + "' in " + section);
  }
}

template <class T>
T get(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw std::invalid_argument(std::string("config: '") + key + "' has the wrong type");
  }
}

std::optional<fs::path> get_path(const json& j, const char* key, const fs::path& base) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  fs::path p = get<std::string>(j, key, "");
  if (p.is_relative() && !base.empty()) p = base / p;
  return p.lexically_normal();
}

json path_json(const std::optional<fs::path>& p) { return p ? json(p->string()) : json(nullptr); }

std::map<std::string, fs::path> get_path_map(const json& j, const char* key, const fs::path& base) {
  std::map<std::string, fs::path> out;
  if (!j.contains(key)) return out;
  for (const auto& [lang, v] : j.at(key).items()) {
    fs::path p = v.get<std::string>();
    if (p.is_relative() && !base.empty()) p = base / p;
    out[lang] = p.lexically_normal();
  }
  return out;
}

ToySource toy_from_json(const json& j) {
  check_keys(j, {"language", "language_seed", "adjective_after_noun", "verb_final", "docs", "doc_len", "seed"},
             "toy source");
  ToySource t;
  t.language = get(j, "language", t.language);
  t.language_seed = get(j, "language_seed", t.language_seed);
  t.adjective_after_noun = get(j, "adjective_after_noun", t.adjective_after_noun);
  t.verb_final = get(j, "verb_final", t.verb_final);
  t.docs = get(j, "docs", t.docs);
  t.doc_len = get(j, "doc_len", t.doc_len);
  t.seed = get(j, "seed", t.seed);
  return t;
}

json toy_to_json(const ToySource& t) {
  return {{"language", t.language},   {"language_seed", t.language_seed},
          {"adjective_after_noun", t.adjective_after_noun}, {"verb_final", t.verb_final},
          {"docs", t.docs},           {"doc_len", t.doc_len},
          {"seed", t.seed}};
}

LanguageSpec language_from_json(const json& j, const fs::path& base) {
  check_keys(j, {"code", "path", "toy", "fake_shift", "permute", "frequency_only", "frequency_sentences"},
             "language");
  LanguageSpec l;
  l.code = get<std::string>(j, "code", "");
  l.path = get_path(j, "path", base);
  if (j.contains("toy") && !j.at("toy").is_null()) l.toy = toy_from_json(j.at("toy"));
  l.fake_shift = get(j, "fake_shift", l.fake_shift);
  l.permute = get(j, "permute", l.permute);
  l.frequency_only = get(j, "frequency_only", l.frequency_only);
  l.frequency_sentences = get(j, "frequency_sentences", l.frequency_sentences);
  return l;
}

json language_to_json(const LanguageSpec& l) {
  return {{"code", l.code},
          {"path", path_json(l.path)},
          {"toy", l.toy ? toy_to_json(*l.toy) : json(nullptr)},
          {"fake_shift", l.fake_shift},
          {"permute", l.permute},
          {"frequency_only", l.frequency_only},
          {"frequency_sentences", l.frequency_sentences}};
}

json entailment_hyper_json(const probes::EntailmentHyper& h) {
  return {{"epochs", h.epochs}, {"lr", h.lr}, {"batch_size", h.batch_size}, {"max_seq", h.max_seq},
          {"clip_norm", h.clip_norm}};
}

probes::EntailmentHyper entailment_hyper_from_json(const json& j) {
  check_keys(j, {"epochs", "lr", "batch_size", "max_seq", "clip_norm"}, "xnli.hyper");
  probes::EntailmentHyper h;
  h.epochs = get(j, "epochs", h.epochs);
  h.lr = get(j, "lr", h.lr);
  h.batch_size = get(j, "batch_size", h.batch_size);
  h.max_seq = get(j, "max_seq", h.max_seq);
  h.clip_norm = get(j, "clip_norm", h.clip_norm);
  return h;
}

json tagger_hyper_json(const probes::TaggerHyper& h) {
  return {{"epochs", h.epochs}, {"lr", h.lr}, {"batch_size", h.batch_size}};
}

probes::TaggerHyper tagger_hyper_from_json(const json& j) {
  check_keys(j, {"epochs", "lr", "batch_size"}, "ner.hyper");
  probes::TaggerHyper h;
  h.epochs = get(j, "epochs", h.epochs);
  h.lr = get(j, "lr", h.lr);
  h.batch_size = get(j, "batch_size", h.batch_size);
  return h;
}

json path_map_json(const std::map<std::string, fs::path>& m) {
  json out = json::object();
  for (const auto& [k, v] : m) out[k] = v.string();
  return out;
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const json& j, const fs::path& base) {
  check_keys(j, {"name", "labels", "seed", "languages", "tokenizer", "encoder", "pretrain", "checkpoint",
                 "retrieval", "xnli", "ner", "transform"},
             "config");
  ExperimentConfig c;
  c.name = get<std::string>(j, "name", "");
  if (j.contains("labels")) {
    c.labels = j.at("labels");
    if (!c.labels.is_object()) throw std::invalid_argument("config: labels must be an object");
  }
  c.seed = get(j, "seed", c.seed);
  if (j.contains("languages")) {
    if (!j.at("languages").is_array()) throw std::invalid_argument("config: languages must be an array");
    for (const auto& l : j.at("languages")) c.languages.push_back(language_from_json(l, base));
  }
  if (j.contains("tokenizer")) {
    const auto& t = j.at("tokenizer");
    check_keys(t, {"mode", "size", "path"}, "tokenizer");
    if (t.contains("mode")) c.tokenizer.mode = tokenizers::parse_mode(t.at("mode").get<std::string>());
    c.tokenizer.size = get(t, "size", c.tokenizer.size);
    c.tokenizer.path = get_path(t, "path", base);
  }
  if (j.contains("encoder")) {
    check_keys_like(j.at("encoder"), encoder::EncoderConfig{}.to_json(), {"vocab_size", "language_id"}, "encoder");
    c.encoder = encoder::EncoderConfig::from_json(j.at("encoder"));
  }
  if (j.contains("pretrain")) {
    check_keys_like(j.at("pretrain"), pretrain::PretrainConfig{}.to_json(), {"seed"}, "pretrain");
    c.pretrain = pretrain::PretrainConfig::from_json(j.at("pretrain"));
  }
  c.checkpoint = get_path(j, "checkpoint", base);
  if (j.contains("retrieval") && !j.at("retrieval").is_null()) {
    const auto& r = j.at("retrieval");
    check_keys(r, {"source", "target", "pairs", "k", "path"}, "retrieval");
    RetrievalSpec s;
    s.source = get<std::string>(r, "source", "");
    s.target = get<std::string>(r, "target", "");
    s.pairs = get(r, "pairs", s.pairs);
    s.k = get(r, "k", s.k);
    s.path = get_path(r, "path", base);
    c.retrieval = s;
  }
  if (j.contains("xnli") && !j.at("xnli").is_null()) {
    const auto& x = j.at("xnli");
    check_keys(x, {"source", "target", "train_size", "test_size", "hyper", "train_path", "test_paths", "classifier"},
               "xnli");
    XnliSpec s;
    s.source = get<std::string>(x, "source", "");
    s.target = get<std::string>(x, "target", "");
    s.train_size = get(x, "train_size", s.train_size);
    s.test_size = get(x, "test_size", s.test_size);
    if (x.contains("hyper")) s.hyper = entailment_hyper_from_json(x.at("hyper"));
    s.train_path = get_path(x, "train_path", base);
    s.test_paths = get_path_map(x, "test_paths", base);
    s.classifier = get_path(x, "classifier", base);
    c.xnli = s;
  }
  if (j.contains("ner") && !j.at("ner").is_null()) {
    const auto& n = j.at("ner");
    check_keys(n, {"source", "target", "train_size", "test_size", "surnames", "seeds", "hyper", "train_path",
                   "test_paths"},
               "ner");
    NerSpec s;
    s.source = get<std::string>(n, "source", "");
    s.target = get<std::string>(n, "target", "");
    s.train_size = get(n, "train_size", s.train_size);
    s.test_size = get(n, "test_size", s.test_size);
    s.surnames = get(n, "surnames", s.surnames);
    s.seeds = get(n, "seeds", s.seeds);
    if (n.contains("hyper")) s.hyper = tagger_hyper_from_json(n.at("hyper"));
    s.train_path = get_path(n, "train_path", base);
    s.test_paths = get_path_map(n, "test_paths", base);
    c.ner = s;
  }
  if (j.contains("transform") && !j.at("transform").is_null()) {
    const auto& t = j.at("transform");
    check_keys(t, {"input", "shift", "p", "sentences"}, "transform");
    TransformSpec s;
    s.input = get_path(t, "input", base).value_or(fs::path{});
    s.shift = get(t, "shift", s.shift);
    s.p = get(t, "p", s.p);
    s.sentences = get(t, "sentences", s.sentences);
    c.transform = s;
  }
  return c;
}

json ExperimentConfig::to_json() const {
  json j;
  j["name"] = name;
  j["labels"] = labels;
  j["seed"] = seed;
  j["languages"] = json::array();
  for (const auto& l : languages) j["languages"].push_back(language_to_json(l));
  j["tokenizer"] = {{"mode", tokenizers::mode_name(tokenizer.mode)}, {"size", tokenizer.size},
                    {"path", path_json(tokenizer.path)}};
  auto enc = encoder.to_json();
  enc.erase("vocab_size");
  enc.erase("language_id");
  j["encoder"] = enc;
  auto pre = pretrain.to_json();
  pre.erase("seed");
  j["pretrain"] = pre;
  j["checkpoint"] = path_json(checkpoint);
  j["retrieval"] = retrieval ? json{{"source", retrieval->source}, {"target", retrieval->target},
                                    {"pairs", retrieval->pairs}, {"k", retrieval->k},
                                    {"path", path_json(retrieval->path)}}
                             : json(nullptr);
  j["xnli"] = xnli ? json{{"source", xnli->source},
                          {"target", xnli->target},
                          {"train_size", xnli->train_size},
                          {"test_size", xnli->test_size},
                          {"hyper", entailment_hyper_json(xnli->hyper)},
                          {"train_path", path_json(xnli->train_path)},
                          {"test_paths", path_map_json(xnli->test_paths)},
                          {"classifier", path_json(xnli->classifier)}}
                   : json(nullptr);
  j["ner"] = ner ? json{{"source", ner->source},
                        {"target", ner->target},
                        {"train_size", ner->train_size},
                        {"test_size", ner->test_size},
                        {"surnames", ner->surnames},
                        {"seeds", ner->seeds},
                        {"hyper", tagger_hyper_json(ner->hyper)},
                        {"train_path", path_json(ner->train_path)},
                        {"test_paths", path_map_json(ner->test_paths)}}
                 : json(nullptr);
  j["transform"] = transform ? json{{"input", transform->input.string()},
                                    {"shift", transform->shift},
                                    {"p", transform->p},
                                    {"sentences", transform->sentences}}
                             : json(nullptr);
  return j;
}

const LanguageSpec* ExperimentConfig::language(std::string_view code) const {
  for (const auto& l : languages) {
    if (l.code == code) return &l;
  }
  return nullptr;
}

std::vector<std::string> ExperimentConfig::violations() const {
  std::vector<std::string> v;
  auto need_file = [&](const std::optional<fs::path>& p, const std::string& what) {
    if (p && !fs::is_regular_file(*p)) v.push_back(what + " does not exist: " + p->string());
  };
  std::set<std::string> codes;
  for (const auto& l : languages) {
    const std::string where = "language '" + l.code + "'";
    if (l.code.empty()) v.push_back("a language has an empty code");
    if (!codes.insert(l.code).second) v.push_back("duplicate language code '" + l.code + "'");
    if (l.path.has_value() == l.toy.has_value()) v.push_back(where + " needs exactly one of path and toy");
    need_file(l.path, where + " corpus");
    if (l.toy && l.toy->language != "english" && l.toy->language != "pseudo") {
      v.push_back(where + " toy language must be english or pseudo");
    }
    if (l.toy && (l.toy->docs == 0 || l.toy->doc_len == 0)) v.push_back(where + " toy corpus is empty");
    if (!(l.permute >= 0.0 && l.permute <= 1.0)) v.push_back(where + " permute must lie in [0,1]");
    if (l.fake_shift != 0) {
      try {
        corpuslab::CharBijection{.shift = l.fake_shift}.validate();
      } catch (const std::exception& e) {
        v.push_back(where + " fake_shift: " + e.what());
      }
    }
  }
  need_file(tokenizer.path, "tokenizer");
  need_file(checkpoint, "checkpoint");
  if (tokenizer.mode != tokenizers::TokenizerMode::character && !tokenizer.path && tokenizer.size == 0) {
    v.push_back("tokenizer size must be positive");
  }
  try {
    pretrain.validate();
  } catch (const std::exception& e) {
    v.push_back(e.what());
  }
  auto enc = encoder;
  enc.vocab_size = std::max<std::size_t>(enc.vocab_size, 1);
  for (const auto& e : enc.violations()) v.push_back("encoder: " + e);
  if (encoder.max_positions < pretrain.max_seq) v.push_back("encoder max_positions is below pretrain max_seq");

  // Generated probe data needs a toy-world language to render from.
  auto known = [&](const std::string& code, const std::string& what) {
    const auto* l = language(code);
    if (!l) {
      v.push_back(what + " language '" + code + "' is not among the languages");
    } else if (!l->toy) {
      v.push_back(what + " language '" + code + "' has no toy source, so its probe data must be given as files");
    }
  };
  if (retrieval) {
    if (!retrieval->path) known(retrieval->source, "retrieval source"), known(retrieval->target, "retrieval target");
    need_file(retrieval->path, "retrieval pairs");
    if (retrieval->k == 0) v.push_back("retrieval k must be positive");
  }
  if (xnli) {
    if (!xnli->train_path && !xnli->classifier) known(xnli->source, "xnli source");
    if (!xnli->test_paths.contains(xnli->source)) known(xnli->source, "xnli source");
    if (!xnli->test_paths.contains(xnli->target)) known(xnli->target, "xnli target");
    need_file(xnli->train_path, "xnli train set");
    need_file(xnli->classifier, "xnli classifier");
    for (const auto& [lang, p] : xnli->test_paths) need_file(p, "xnli test set for " + lang);
    if (xnli->hyper.batch_size == 0) v.push_back("xnli batch_size must be positive");
  }
  if (ner) {
    if (!ner->train_path) known(ner->source, "ner source");
    if (!ner->test_paths.contains(ner->source)) known(ner->source, "ner source");
    if (!ner->test_paths.contains(ner->target)) known(ner->target, "ner target");
    need_file(ner->train_path, "ner train set");
    for (const auto& [lang, p] : ner->test_paths) need_file(p, "ner test set for " + lang);
    if (ner->seeds == 0) v.push_back("ner seeds must be positive");
  }
  if (transform) {
    if (!fs::is_regular_file(transform->input)) v.push_back("transform input does not exist: " + transform->input.string());
    if (!(transform->p >= 0.0 && transform->p <= 1.0)) v.push_back("transform p must lie in [0,1]");
  }
  return v;
}

void ExperimentConfig::validate() const {
  const auto v = violations();
  if (v.empty()) return;
  std::string msg = "invalid config:";
  for (const auto& s : v) msg += "\n  - " + s;
  throw std::invalid_argument(msg);
}

ExperimentConfig load_config(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("config " + path.string() + ": " + e.what());
  }
  return ExperimentConfig::from_json(j, path.parent_path());
}

std::string canonical_json(const ExperimentConfig& config) { return config.to_json().dump(); }

std::string config_hash(const ExperimentConfig& config) { return sha256_hex(canonical_json(config)); }

}  // namespace xlab::lab
