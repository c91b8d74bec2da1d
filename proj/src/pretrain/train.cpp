#include <cmath>
#include <fstream>
#include <sstream>

#include "xlab/common/digest.hpp"
#include "xlab/pretrain/pretrain.hpp"

namespace xlab::pretrain {

namespace {

struct Losses {
  num::Var<float> total;
  double mlm = 0.0;
  std::optional<double> nsp;
};

Losses build_loss(num::Graph<float>& g, encoder::ModelState<float>& model, const CollatedBatch& cb) {
  auto P = encoder::bind(g, model);
  const auto enc = encoder::forward(g, P, cb.batch);
  const auto heads = encoder::mlm_nsp_logits(g, P, enc, cb.masked_rows);
  Losses l;
  l.total = num::cross_entropy(heads.mlm_logits, std::span<const std::int32_t>(cb.masked_labels));
  l.mlm = l.total.value().data[0];
  if (!cb.nsp_labels.empty()) {
    auto nsp = num::cross_entropy(heads.nsp_logits, std::span<const std::int32_t>(cb.nsp_labels));
    l.nsp = nsp.value().data[0];
    l.total = num::add(l.total, nsp);
  }
  return l;
}

// Keeps curve lines for steps <= `upto`, so a resumed run appends cleanly.
void truncate_curve(const std::filesystem::path& path, std::uint64_t upto) {
  std::string kept;
  if (upto > 0 && std::filesystem::exists(path)) {
    std::istringstream in(read_file(path));
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto j = nlohmann::json::parse(line, nullptr, false);
      if (!j.is_discarded() && j.value("step", std::uint64_t{0}) <= upto) kept += line + "\n";
    }
  }
  write_file_atomic(path, kept);
}

}  // namespace

std::string loss_point_json(const LossPoint& p) {
  nlohmann::json j{{"step", p.step}, {"mlm_loss", p.mlm_loss}};
  if (p.nsp_loss) j["nsp_loss"] = *p.nsp_loss;
  return j.dump();
}

LossPoint evaluate_loss(encoder::ModelState<float>& model, const CollatedBatch& batch) {
  num::Graph<float> g(false);
  const auto l = build_loss(g, model, batch);
  return {0, l.mlm, l.nsp};
}

TrainResult train(TrainState& st, const ExampleBuilder& examples, const PretrainConfig& cfg,
                  const TrainOptions& opt) {
  cfg.validate();
  if (examples.vocab_size() != st.model.config.vocab_size) {
    throw std::invalid_argument("train: tokenizer vocabulary (" + std::to_string(examples.vocab_size()) +
                                ") does not match the model (" + std::to_string(st.model.config.vocab_size) + ")");
  }
  if (cfg.max_seq > st.model.config.max_positions) {
    throw std::invalid_argument("train: max_seq exceeds the model's max_positions");
  }
  TrainResult result;
  std::ofstream curve;
  if (!opt.loss_curve_path.empty()) {
    truncate_curve(opt.loss_curve_path, st.step);
    curve.open(opt.loss_curve_path, std::ios::app);
    if (!curve) throw std::runtime_error("cannot open loss curve " + opt.loss_curve_path.string());
  }
  auto save = [&] {
    if (!opt.checkpoint_path.empty()) save_checkpoint(opt.checkpoint_path, make_checkpoint(st.model, st.adam, st.step, opt.meta));
  };

  auto params = st.model.params();
  const std::span<const num::ParamRef<float>> pspan(params);
  const auto warmup = static_cast<std::uint64_t>(std::ceil(cfg.warmup_fraction * static_cast<double>(cfg.steps)));
  for (std::uint64_t step = st.step; step < cfg.steps; ++step) {
    const auto cb = collate(examples.batch(step * cfg.batch_size, cfg.batch_size), 0);
    num::zero_grads(pspan);
    num::Graph<float> g;
    const auto l = build_loss(g, st.model, cb);
    const double total = l.total.value().data[0];
    if (!std::isfinite(total)) {
      result.aborted = true;
      result.abort_reason = "non-finite loss at step " + std::to_string(step + 1);
      break;
    }
    g.backward(l.total);
    if (cfg.clip_norm > 0) num::clip_grad_norm(pspan, cfg.clip_norm);
    st.adam.lr = cfg.lr * (warmup ? std::min(1.0, static_cast<double>(step + 1) / static_cast<double>(warmup)) : 1.0);
    try {
      num::adam_step(pspan, st.adam);
    } catch (const num::NonFiniteError& e) {
      result.aborted = true;
      result.abort_reason = std::string(e.what()) + " at step " + std::to_string(step + 1);
      break;
    }
    st.step = step + 1;
    const LossPoint p{st.step, l.mlm, l.nsp};
    result.curve.push_back(p);
    if (curve) curve << loss_point_json(p) << "\n" << std::flush;
    if (opt.on_step) opt.on_step(p);
    if (cfg.checkpoint_every && st.step % cfg.checkpoint_every == 0 && st.step < cfg.steps) save();
  }
  if (!result.aborted) save();
  return result;
}

}  // namespace xlab::pretrain
