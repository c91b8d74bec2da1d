#include "xlab/lab/pipeline.hpp"

#include <chrono>
#include <set>
#include <stdexcept>

#include "xlab/common/digest.hpp"
#include "xlab/common/random.hpp"
#include "xlab/corpuslab/ablations.hpp"

namespace xlab::lab {

namespace fs = std::filesystem;
namespace toy = corpuslab::toy;

namespace {

double percent(double x) { return 100.0 * x; }

// Mean over the last tenth of the curve, between 1 and 50 points.
double tail_mean(const std::vector<pretrain::LossPoint>& curve, bool nsp) {
  const std::size_t n = std::clamp<std::size_t>(curve.size() / 10, 1, 50);
  double s = 0.0;
  for (std::size_t i = curve.size() - n; i < curve.size(); ++i) {
    s += nsp ? curve[i].nsp_loss.value_or(0.0) : curve[i].mlm_loss;
  }
  return s / static_cast<double>(n);
}

corpuslab::Segmenter whitespace_segmenter() {
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

std::vector<std::pair<std::string, std::string>> parse_pairs(const fs::path& path) {
  std::vector<std::pair<std::string, std::string>> out;
  const std::string text = read_file(path);
  std::size_t pos = 0, line_no = 0;
  while (pos < text.size()) {
    const std::size_t nl = std::min(text.find('\n', pos), text.size());
    const std::string line = text.substr(pos, nl - pos);
    ++line_no;
    pos = nl + 1;
    if (line.empty()) continue;
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos) {
      throw std::invalid_argument(path.string() + ":" + std::to_string(line_no) + ": expected two tab-separated fields");
    }
    out.emplace_back(line.substr(0, tab), line.substr(tab + 1));
  }
  return out;
}

}  // namespace

probes::Model load_model(const fs::path& path) {
  const auto ckpt = pretrain::load_checkpoint(path);
  if (!ckpt.config.contains("encoder")) throw pretrain::CheckpointError(path.string() + " lacks an encoder config");
  auto model = encoder::build<float>(encoder::EncoderConfig::from_json(ckpt.config["encoder"]), 0);
  for (std::size_t i = 0; i < ckpt.names.size(); ++i) {
    if (!model.by_name.contains(ckpt.names[i])) model.add(ckpt.names[i], ckpt.tensors[i]);
  }
  pretrain::restore_model(ckpt, model);
  return model;
}

Pipeline::Pipeline(ExperimentConfig config, fs::path run_dir, Log log)
    : config_(std::move(config)), run_dir_(std::move(run_dir)), log_(std::move(log)) {
  for (const auto& l : config_.languages) {
    if (!l.toy) continue;
    const auto& t = *l.toy;
    toy_langs_.emplace(l.code, t.language == "english"
                                   ? toy::Language::english(world_)
                                   : toy::Language::pseudo(world_, l.code, t.language_seed, t.adjective_after_noun,
                                                           t.verb_final));
  }
}

void Pipeline::log(const std::string& msg) const {
  if (log_) log_(msg);
}

void Pipeline::record_artifact(const std::string& file) { artifacts_[file] = sha256_file(run_dir_ / file); }

const toy::Language& Pipeline::toy_language(const std::string& code) const {
  const auto it = toy_langs_.find(code);
  if (it == toy_langs_.end()) throw std::invalid_argument("language '" + code + "' has no toy source");
  return it->second;
}

std::string Pipeline::render(const std::string& code, const toy::Proposition& p) const {
  std::string s = toy_language(code).render(p);
  const auto* l = config_.language(code);
  if (l && l->fake_shift) s = corpuslab::map_text(s, corpuslab::CharBijection{.shift = l->fake_shift});
  return s;
}

probes::TaggedSentence Pipeline::render_tagged(const std::string& code, const toy::Proposition& p,
                                               bool surnames) const {
  auto [tokens, tags] = toy_language(code).render_tagged(p, surnames);
  const auto* l = config_.language(code);
  if (l && l->fake_shift) {
    const corpuslab::CharBijection bij{.shift = l->fake_shift};
    for (auto& t : tokens) t = corpuslab::map_text(t, bij);
  }
  return {std::move(tokens), std::move(tags)};
}

const std::vector<pretrain::LanguageCorpus>& Pipeline::base_corpora() {
  if (base_) return *base_;
  std::vector<pretrain::LanguageCorpus> out;
  for (const auto& l : config_.languages) {
    corpuslab::Corpus c;
    std::size_t doc_size = 8;
    if (l.path) {
      c = corpuslab::read_corpus(*l.path);
    } else {
      doc_size = l.toy->doc_len;
      c = toy::render_corpus(toy_language(l.code), world_.sample_documents(l.toy->docs, l.toy->doc_len, l.toy->seed));
    }
    if (l.frequency_only) {
      const auto table = corpuslab::collect_unigram_table(c);
      const std::size_t n = l.frequency_sentences ? l.frequency_sentences : c.sentence_count();
      c = corpuslab::synthesize_frequency_corpus(table, n, stage_seed(config_.seed, "frequency:" + l.code), doc_size);
    }
    if (l.fake_shift) c = corpuslab::make_fake_language(c, corpuslab::CharBijection{.shift = l.fake_shift});
    log("corpus " + l.code + ": " + std::to_string(c.sentence_count()) + " sentences");
    out.push_back({l.code, std::move(c)});
  }
  base_ = std::move(out);
  return *base_;
}

const std::vector<pretrain::LanguageCorpus>& Pipeline::pretraining_corpora() {
  if (permuted_) return *permuted_;
  auto out = base_corpora();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double p = config_.languages[i].permute;
    if (p <= 0.0) continue;
    out[i].corpus = corpuslab::permute_corpus(out[i].corpus, tokenizer().segmenter(),
                                              {p, stage_seed(config_.seed, "permute:" + out[i].code)});
  }
  permuted_ = std::move(out);
  return *permuted_;
}

const tokenizers::Tokenizer& Pipeline::tokenizer() {
  if (tokenizer_) return *tokenizer_;
  if (config_.tokenizer.path) {
    tokenizer_ = tokenizers::Tokenizer::load(config_.tokenizer.mode, *config_.tokenizer.path);
  } else {
    corpuslab::Corpus all;
    std::vector<std::string> codes;
    for (const auto& lc : base_corpora()) {
      codes.push_back(lc.code);
      all.documents.insert(all.documents.end(), lc.corpus.documents.begin(), lc.corpus.documents.end());
    }
    log("training " + tokenizers::mode_name(config_.tokenizer.mode) + " tokenizer");
    tokenizer_ = tokenizers::Tokenizer::train(config_.tokenizer.mode, all, config_.tokenizer.size, codes);
  }
  fs::create_directories(run_dir_);
  tokenizer_->save(run_dir_ / "vocab.txt");
  record_artifact("vocab.txt");
  metrics_["vocab_size"] = tokenizer_->vocab().size();
  return *tokenizer_;
}

void Pipeline::run_tokenizer_stage() {
  const auto& tok = tokenizer();
  // Pieces in use by each language; shared means used by two or more.
  std::map<std::int32_t, std::size_t> users;
  for (const auto& lc : base_corpora()) {
    std::set<std::int32_t> used;
    for (auto s : lc.corpus.sentences()) {
      for (auto id : tok.encode(s)) used.insert(id);
    }
    for (auto id : used) {
      if (static_cast<std::size_t>(id) >= tok.vocab().special_count()) ++users[id];
    }
  }
  std::size_t shared = 0;
  for (const auto& [id, n] : users) shared += n >= 2;
  metrics_["shared_pieces"] = shared;
}

probes::Model& Pipeline::model() {
  if (model_) return *model_;
  const auto& tok = tokenizer();
  if (config_.checkpoint) {
    model_ = load_model(*config_.checkpoint);
    if (model_->config.vocab_size != tok.vocab().size()) {
      throw std::invalid_argument("checkpoint vocabulary (" + std::to_string(model_->config.vocab_size) +
                                  ") does not match the tokenizer (" + std::to_string(tok.vocab().size()) + ")");
    }
    return *model_;
  }
  auto ec = config_.encoder;
  ec.vocab_size = tok.vocab().size();
  ec.language_id = config_.pretrain.lang_id;
  auto pc = config_.pretrain;
  pc.seed = stage_seed(config_.seed, "pretrain");
  pretrain::ExampleBuilder examples(pretraining_corpora(), tok, pc);
  pretrain::TrainState state{encoder::build<float>(ec, stage_seed(config_.seed, "init")), {}, 0};

  pretrain::TrainOptions opt;
  opt.checkpoint_path = run_dir_ / "model.xlb";
  opt.loss_curve_path = run_dir_ / "loss.jsonl";
  opt.meta = {{"config_hash", config_hash(config_)},
              {"tokenizer_mode", tokenizers::mode_name(config_.tokenizer.mode)}};
  const std::size_t every = std::max<std::size_t>(1, pc.steps / 10);
  opt.on_step = [&](const pretrain::LossPoint& p) {
    if (p.step % every == 0) log("step " + std::to_string(p.step) + " mlm " + std::to_string(p.mlm_loss));
  };
  log("pretraining " + std::to_string(encoder::param_count(ec)) + " parameters for " + std::to_string(pc.steps) +
      " steps");
  const auto result = pretrain::train(state, examples, pc, opt);
  if (result.aborted) throw std::runtime_error("pretraining aborted: " + result.abort_reason);
  if (result.curve.empty()) throw std::runtime_error("pretraining ran no steps");

  metrics_["steps"] = state.step;
  metrics_["param_count"] = encoder::param_count(ec);
  metrics_["mlm_loss_initial"] = result.curve.front().mlm_loss;
  metrics_["mlm_loss_final"] = tail_mean(result.curve, false);
  if (pc.nsp) metrics_["nsp_loss_final"] = tail_mean(result.curve, true);
  record_artifact("model.xlb");
  record_artifact("loss.jsonl");
  model_ = std::move(state.model);
  return *model_;
}

void Pipeline::run_pretrain_stage() { model(); }

probes::EntailmentClassifier& Pipeline::classifier() {
  if (classifier_) return *classifier_;
  if (!config_.xnli) throw std::invalid_argument("config has no xnli section");
  const auto& x = *config_.xnli;
  auto hyper = x.hyper;
  hyper.seed = config_.seed;
  hyper.language_separators = config_.pretrain.lang_id;
  if (x.classifier) {
    tokenizer();
    classifier_ = probes::EntailmentClassifier{load_model(*x.classifier), hyper};
    return *classifier_;
  }
  std::vector<probes::EntailmentExample> train;
  if (x.train_path) {
    train = probes::load_entailment_tsv(*x.train_path, x.source);
  } else {
    for (const auto& p : toy::sample_entailment(world_, x.train_size, stage_seed(config_.seed, "xnli-train"))) {
      train.push_back({render(x.source, p.premise), render(x.source, p.hypothesis), p.label, x.source, x.source});
    }
  }
  auto& encoder = model();
  log("fine-tuning entailment on " + std::to_string(train.size()) + " " + x.source + " examples");
  classifier_ = probes::finetune_entailment(encoder, tokenizer(), train, hyper);
  pretrain::save_checkpoint(run_dir_ / "classifier.xlb",
                            pretrain::make_checkpoint(classifier_->model, {}, 0,
                                                      {{"config_hash", config_hash(config_)}}));
  record_artifact("classifier.xlb");
  metrics_["xnli_train_size"] = train.size();
  return *classifier_;
}

void Pipeline::run_finetune_stage() { classifier(); }

void Pipeline::run_xnli() {
  const auto& x = *config_.xnli;
  auto& clf = classifier();
  std::map<std::string, std::vector<probes::EntailmentExample>> by_lang;
  const auto test = x.test_paths.empty() || !x.test_paths.contains(x.source) || !x.test_paths.contains(x.target)
                        ? toy::sample_entailment(world_, x.test_size, stage_seed(config_.seed, "xnli-test"))
                        : std::vector<toy::EntailmentPair>{};
  for (const auto& lang : {x.source, x.target}) {
    if (by_lang.contains(lang)) continue;
    if (const auto it = x.test_paths.find(lang); it != x.test_paths.end()) {
      by_lang[lang] = probes::load_entailment_tsv(it->second, lang);
    } else {
      auto& v = by_lang[lang];
      for (const auto& p : test) v.push_back({render(lang, p.premise), render(lang, p.hypothesis), p.label, lang, lang});
    }
  }
  const auto set = probes::align_entailment(by_lang);
  std::vector<std::pair<std::string, std::string>> combos{{x.source, x.source}};
  if (x.target != x.source) combos.insert(combos.end(), {{x.target, x.target}, {x.source, x.target}, {x.target, x.source}});
  for (const auto& [pl, hl] : combos) {
    const auto ev = probes::eval_entailment(clf, tokenizer(), set, pl, hl);
    const std::string tag = pl + "_" + hl;
    metrics_["xnli_" + tag] = percent(ev.accuracy);
    write_file_atomic(run_dir_ / ("predictions_" + tag + ".tsv"), probes::format_prediction_dump(ev));
    record_artifact("predictions_" + tag + ".tsv");
    log("xnli " + pl + "/" + hl + " " + std::to_string(percent(ev.accuracy)));
  }
  const auto gap = probes::cross_lingual_gap(metrics_["xnli_" + x.source + "_" + x.source].get<double>(),
                                             metrics_["xnli_" + x.target + "_" + x.target].get<double>());
  metrics_["xnli_src_acc"] = gap.perf_source;
  metrics_["xnli_acc"] = gap.perf_target;
  metrics_["delta"] = gap.delta;
}

void Pipeline::run_ner() {
  if (!config_.ner) throw std::invalid_argument("config has no ner section");
  const auto& n = *config_.ner;
  auto toy_sentences = [&](const std::string& lang, std::size_t count, const char* stage) {
    Rng rng(stage_seed(config_.seed, stage));
    std::vector<probes::TaggedSentence> out;
    for (std::size_t i = 0; i < count; ++i) out.push_back(render_tagged(lang, world_.sample(rng), n.surnames));
    return out;
  };
  const auto train = n.train_path ? probes::load_conll(*n.train_path) : toy_sentences(n.source, n.train_size, "ner-train");
  std::vector<std::string> langs{n.source};
  if (n.target != n.source) langs.push_back(n.target);
  // Toy test sets share propositions, so source and target are translations.
  std::vector<std::vector<probes::TaggedSentence>> tests;
  for (const auto& lang : langs) {
    const auto it = n.test_paths.find(lang);
    tests.push_back(it != n.test_paths.end() ? probes::load_conll(it->second)
                                             : toy_sentences(lang, n.test_size, "ner-test"));
  }
  auto& encoder = model();
  auto words = [](const std::vector<probes::TaggedSentence>& s) {
    std::vector<std::vector<std::string>> out;
    for (const auto& t : s) out.push_back(t.tokens);
    return out;
  };
  const auto train_features = probes::extract_word_features(encoder, tokenizer(), words(train));
  std::vector<std::vector<num::Tensor<float>>> test_features;
  for (const auto& t : tests) test_features.push_back(probes::extract_word_features(encoder, tokenizer(), words(t)));
  std::vector<probes::TaggerTestSet> sets;
  for (std::size_t i = 0; i < tests.size(); ++i) sets.push_back({&test_features[i], &tests[i]});
  auto hyper = n.hyper;
  hyper.seed = stage_seed(config_.seed, "ner");
  log("training " + std::to_string(n.seeds) + " taggers on " + std::to_string(train.size()) + " sentences");
  const auto reports = probes::tagger_reports(train_features, train, sets, hyper, n.seeds);
  const auto& src = reports.front();
  const auto& tgt = reports.back();
  metrics_["ner_src_f1_mean"] = percent(src.mean);
  metrics_["ner_src_f1_std"] = percent(src.stdev);
  metrics_["ner_f1_mean"] = percent(tgt.mean);
  metrics_["ner_f1_std"] = percent(tgt.stdev);
  metrics_["ner_delta"] = probes::cross_lingual_gap(percent(src.mean), percent(tgt.mean)).delta;
  if (!metrics_.contains("xnli_acc")) metrics_["delta"] = metrics_["ner_delta"];
}

void Pipeline::run_retrieval() {
  if (!config_.retrieval) throw std::invalid_argument("config has no retrieval section");
  const auto& r = *config_.retrieval;
  std::vector<std::pair<std::string, std::string>> pairs;
  if (r.path) {
    pairs = parse_pairs(*r.path);
  } else {
    Rng rng(stage_seed(config_.seed, "retrieval-data"));
    for (std::size_t i = 0; i < r.pairs; ++i) {
      const auto p = world_.sample(rng);
      pairs.emplace_back(render(r.source, p), render(r.target, p));
    }
  }
  const auto rep = probes::intrinsic_retrieval(model(), tokenizer(), pairs, r.k);
  metrics_["top1"] = percent(rep.top1);
  metrics_["top3"] = percent(rep.top3);
  metrics_["topk"] = percent(rep.topk);
  metrics_["retrieval_pairs"] = rep.n;
  metrics_["retrieval_chance"] = percent(1.0 / static_cast<double>(rep.n));
  log("retrieval top1 " + std::to_string(percent(rep.top1)));
}

void Pipeline::run_all() {
  run_tokenizer_stage();
  run_pretrain_stage();
  if (config_.retrieval) run_retrieval();
  if (config_.xnli) run_xnli();
  if (config_.ner) run_ner();
  std::vector<std::string> required{"mlm_loss_final"};
  if (config_.checkpoint) required.clear();
  if (config_.retrieval) required.insert(required.end(), {"top1", "top3"});
  if (config_.xnli) required.insert(required.end(), {"xnli_acc", "delta"});
  if (config_.ner) required.insert(required.end(), {"ner_f1_mean", "ner_f1_std"});
  for (const auto& k : required) {
    if (!metrics_.contains(k)) throw std::logic_error("run finished without metric '" + k + "'");
  }
}

void Pipeline::run_fakeify() {
  const auto& t = *config_.transform;
  const auto out = corpuslab::make_fake_language(corpuslab::read_corpus(t.input), corpuslab::CharBijection{.shift = t.shift});
  corpuslab::write_corpus(run_dir_ / "corpus.txt", out);
  artifacts_["input"] = sha256_file(t.input);
  record_artifact("corpus.txt");
  metrics_["sentences"] = out.sentence_count();
}

void Pipeline::run_permute() {
  const auto& t = *config_.transform;
  const auto segmenter = config_.tokenizer.path ? tokenizer().segmenter() : whitespace_segmenter();
  const auto out =
      corpuslab::permute_corpus(corpuslab::read_corpus(t.input), segmenter, {t.p, stage_seed(config_.seed, "permute")});
  corpuslab::write_corpus(run_dir_ / "corpus.txt", out);
  artifacts_["input"] = sha256_file(t.input);
  record_artifact("corpus.txt");
  metrics_["sentences"] = out.sentence_count();
}

void Pipeline::run_freqgen() {
  const auto& t = *config_.transform;
  const auto in = corpuslab::read_corpus(t.input);
  const auto table = corpuslab::collect_unigram_table(in);
  const std::size_t n = t.sentences ? t.sentences : in.sentence_count();
  const auto out = corpuslab::synthesize_frequency_corpus(table, n, stage_seed(config_.seed, "frequency"));
  corpuslab::write_corpus(run_dir_ / "corpus.txt", out);
  artifacts_["input"] = sha256_file(t.input);
  record_artifact("corpus.txt");
  metrics_["sentences"] = out.sentence_count();
  metrics_["types"] = table.counts.size();
}

const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names{"fakeify",  "permute",   "freqgen",     "tok-train",       "pretrain",
                                              "finetune", "probe-ner", "probe-retrieval", "eval-xnli", "run"};
  return names;
}

namespace {

void require(const ExperimentConfig& c, const std::string& sub) {
  std::vector<std::string> missing;
  const bool transform = sub == "fakeify" || sub == "permute" || sub == "freqgen";
  if (transform && !c.transform) missing.push_back("transform");
  if (!transform && !c.tokenizer.path && c.languages.empty()) missing.push_back("languages");
  if ((sub == "finetune" || sub == "eval-xnli") && !c.xnli) missing.push_back("xnli");
  if (sub == "probe-ner" && !c.ner) missing.push_back("ner");
  if (sub == "probe-retrieval" && !c.retrieval) missing.push_back("retrieval");
  if (sub == "pretrain" && c.checkpoint) missing.push_back("no checkpoint (pretrain always trains from scratch)");
  if (!missing.empty()) {
    std::string msg = sub + " needs:";
    for (const auto& m : missing) msg += " " + m;
    throw std::invalid_argument(msg);
  }
}

}  // namespace

RunRecord execute(const std::string& subcommand, const ExperimentConfig& config, const RunOptions& options) {
  const auto& subs = subcommands();
  if (std::find(subs.begin(), subs.end(), subcommand) == subs.end()) {
    throw std::invalid_argument("unknown subcommand '" + subcommand + "'");
  }
  config.validate();
  require(config, subcommand);

  RunRecord r;
  r.subcommand = subcommand;
  r.config_hash = config_hash(config);
  r.run_id = new_run_id(r.config_hash);
  r.name = config.name;
  r.labels = config.labels;
  r.seed = config.seed;
  r.version = version_stamp();
  const fs::path root = runs_root(options.root);
  const fs::path dir = root / r.run_id;
  fs::create_directories(dir);
  r.run_dir = dir.string();
  write_file_atomic(dir / "config.json", config.to_json().dump(2) + "\n");

  const auto t0 = std::chrono::steady_clock::now();
  Pipeline p(config, dir, options.log);
  try {
    if (subcommand == "fakeify") p.run_fakeify();
    else if (subcommand == "permute") p.run_permute();
    else if (subcommand == "freqgen") p.run_freqgen();
    else if (subcommand == "tok-train") p.run_tokenizer_stage();
    else if (subcommand == "pretrain") p.run_pretrain_stage();
    else if (subcommand == "finetune") p.run_finetune_stage();
    else if (subcommand == "eval-xnli") p.run_xnli();
    else if (subcommand == "probe-ner") p.run_ner();
    else if (subcommand == "probe-retrieval") p.run_retrieval();
    else p.run_all();
  } catch (const std::exception& e) {
    r.status = "failed";
    r.error = e.what();
    write_file_atomic(dir / "FAILED", r.error + "\n");
  }
  r.metrics = p.metrics();
  r.artifacts = p.artifacts();
  r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  Ledger(root).append(r);
  return r;
}

}  // namespace xlab::lab
