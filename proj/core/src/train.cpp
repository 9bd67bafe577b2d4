// Copyright 2026 The fplab Authors
// SPDX-License-Identifier: Apache-2.0

#include "fplab/train.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include "fplab/errors.hpp"

namespace fplab {

std::string to_string(ParamSelector s) { return s == ParamSelector::All ? "all" : "adapter-only"; }

ParamSelector parse_selector(std::string_view text) {
  if (text == "all") return ParamSelector::All;
  if (text == "adapter-only") return ParamSelector::AdapterOnly;
  throw ArgumentError("unknown parameter selector '" + std::string(text) + "'");
}

void TrainConfig::validate() const {
  if (!(base_lr > 0.0)) throw ArgumentError("train config: base_lr must be > 0");
  if (!(warmup_ratio >= 0.0 && warmup_ratio < 1.0)) {
    throw ArgumentError("train config: warmup_ratio must be in [0, 1)");
  }
  if (epochs < 0) throw ArgumentError("train config: epochs must be >= 0");
  if (batch_size < 1) throw ArgumentError("train config: batch_size must be >= 1");
}

template <typename T>
BackwardResult<T> backward_pass(const TensorMap<T>& params, const LowRankOverlay<T>& overlay,
                                const ModelConfig& cfg, std::span<const TokenSeq> batch,
                                ParamSelector selector, T loss_scale) {
  if (batch.empty()) throw DegenerateError("backward: empty batch");
  const bool base_grad = selector == ParamSelector::All;
  const bool overlay_grad = selector == ParamSelector::AdapterOnly;
  if (overlay_grad && (overlay.factors == nullptr || overlay.factors->empty())) {
    throw ArgumentError("backward: adapter-only selection but no adapter factors given");
  }

  std::vector<LossInputs> inputs;
  inputs.reserve(batch.size());
  std::size_t count = 0;
  for (const auto& seq : batch) {
    inputs.push_back(loss_inputs(seq, cfg));
    count += inputs.back().count;
  }

  BackwardResult<T> result;
  const TensorMap<T>& trainable = base_grad ? params : *overlay.factors;
  const T seed = loss_scale / static_cast<T>(count);
  double total = 0.0;
  for (const auto& li : inputs) {
    Tape<T> tape(true);
    VarMap<T> leaves;
    auto logits = build_logits(tape, params, overlay, cfg, li.inputs, base_grad, overlay_grad, &leaves);
    auto ce = tape.cross_entropy_sum(logits, li.targets, li.mask);
    total += static_cast<double>(tape.value(ce)[0]);
    tape.backward(ce, seed);
    for (const auto& [name, var] : leaves) {
      if (!trainable.count(name) || !tape.has_grad(var)) continue;
      auto it = result.grads.find(name);
      if (it == result.grads.end()) {
        result.grads.emplace(name, tape.grad(var));
      } else {
        axpy(it->second, tape.grad(var), T{1});
      }
    }
  }
  // Parameters that received no gradient (e.g. unused embedding rows) still
  // get an entry so the key set equals the selection.
  for (const auto& [name, t] : trainable) {
    if (!result.grads.count(name)) result.grads.emplace(name, BasicTensor<T>(t.shape()));
  }
  result.loss = total / static_cast<double>(count);
  return result;
}

template BackwardResult<float> backward_pass(const TensorMap<float>&, const LowRankOverlay<float>&,
                                             const ModelConfig&, std::span<const TokenSeq>,
                                             ParamSelector, float);
template BackwardResult<double> backward_pass(const TensorMap<double>&, const LowRankOverlay<double>&,
                                              const ModelConfig&, std::span<const TokenSeq>,
                                              ParamSelector, double);

BackwardResult<float> backward(const Checkpoint& ckpt, const ModelConfig& cfg,
                               std::span<const TokenSeq> batch, ParamSelector selector,
                               const LowRankOverlay<float>& overlay) {
  check_architecture(ckpt, cfg);
  return backward_pass(ckpt.tensors, overlay, cfg, batch, selector, 1.0f);
}

template <typename T>
void adam_step(TensorMap<T>& params, const TensorMap<T>& grads, AdamState<T>& state, double lr,
               const AdamHyper& hyper) {
  for (const auto& [name, g] : grads) {
    auto it = params.find(name);
    if (it == params.end()) throw ArgumentError("adam_step: gradient for unknown parameter '" + name + "'");
    if (it->second.shape() != g.shape()) {
      throw ShapeError("adam_step: parameter '" + name + "' is " + shape_str(it->second.shape()) +
                       " but gradient is " + shape_str(g.shape()));
    }
    auto& m = state.m[name];
    auto& v = state.v[name];
    if (m.empty()) m = BasicTensor<T>(g.shape());
    if (v.empty()) v = BasicTensor<T>(g.shape());
    if (m.shape() != g.shape() || v.shape() != g.shape()) {
      throw ShapeError("adam_step: optimizer state for '" + name + "' has the wrong shape");
    }
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(state.step));
  for (const auto& [name, g] : grads) {
    auto p = params[name].data();
    auto m = state.m[name].data();
    auto v = state.v[name].data();
    const auto gd = g.data();
    for (std::size_t i = 0; i < gd.size(); ++i) {
      const double gi = gd[i];
      const double mi = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * gi;
      const double vi = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double update = lr * (mi / bc1) / (std::sqrt(vi / bc2) + hyper.eps);
      p[i] = static_cast<T>(static_cast<double>(p[i]) - update);
    }
  }
}

template void adam_step(TensorMap<float>&, const TensorMap<float>&, AdamState<float>&, double,
                        const AdamHyper&);
template void adam_step(TensorMap<double>&, const TensorMap<double>&, AdamState<double>&, double,
                        const AdamHyper&);

std::size_t warmup_steps(long total_steps, const TrainConfig& cfg) {
  return static_cast<std::size_t>(std::ceil(cfg.warmup_ratio * static_cast<double>(total_steps)));
}

double lr_at(long step, long total_steps, const TrainConfig& cfg) {
  if (total_steps < 1) throw ArgumentError("lr_at: total_steps must be >= 1");
  if (step < 0 || step > total_steps) {
    throw ArgumentError("lr_at: step " + std::to_string(step) + " outside [0, " +
                        std::to_string(total_steps) + "]");
  }
  if (step == total_steps) return 0.0;
  const auto warm = static_cast<long>(warmup_steps(total_steps, cfg));
  if (step < warm) return cfg.base_lr * static_cast<double>(step) / static_cast<double>(warm);
  const double progress =
      static_cast<double>(step - warm) / static_cast<double>(total_steps - warm);
  return cfg.base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

TrainResult train(const Checkpoint& ckpt, const ModelConfig& cfg, const TrainConfig& tcfg,
                  std::span<const TokenSeq> dataset, const TensorMap<float>& factors,
                  double overlay_scale) {
  tcfg.validate();
  if (dataset.empty()) throw DegenerateError("train: empty dataset");
  check_architecture(ckpt, cfg);
  if (tcfg.selector == ParamSelector::AdapterOnly && factors.empty()) {
    throw ArgumentError("train: adapter-only selection needs adapter factors");
  }

  TrainResult result;
  result.ckpt = ckpt;
  result.factors = factors;
  const bool adapter_only = tcfg.selector == ParamSelector::AdapterOnly;
  TensorMap<float>& trainable = adapter_only ? result.factors : result.ckpt.tensors;
  for (const auto& [name, t] : trainable) result.trained_parameters += t.numel();

  const auto batch = static_cast<std::size_t>(tcfg.batch_size);
  const long steps_per_epoch = static_cast<long>((dataset.size() + batch - 1) / batch);
  const long total = steps_per_epoch * tcfg.epochs;
  AdamState<float> state;
  std::vector<std::size_t> order(dataset.size());
  std::vector<TokenSeq> mb;
  long step = 0;
  for (int epoch = 0; epoch < tcfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    SeededRng rng(derive_seed(tcfg.seed, static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.uniform_int(i)]);

    for (std::size_t begin = 0; begin < order.size(); begin += batch, ++step) {
      mb.clear();
      for (std::size_t j = begin; j < std::min(begin + batch, order.size()); ++j) {
        mb.push_back(dataset[order[j]]);
      }
      LowRankOverlay<float> overlay;
      if (!result.factors.empty()) overlay = {&result.factors, static_cast<float>(overlay_scale)};
      auto br = backward_pass(result.ckpt.tensors, overlay, cfg, mb, tcfg.selector, 1.0f);
      if (!std::isfinite(br.loss)) {
        throw DivergenceError("train: non-finite loss at step " + std::to_string(step), step);
      }
      const double lr = lr_at(step, total, tcfg);
      result.history.push_back({step, epoch, lr, br.loss});
      adam_step(trainable, br.grads, state, lr, tcfg.adam);
    }
  }
  if (!adapter_only && total > 0) append_lineage(result.ckpt.metadata, "train(all, epochs=" + std::to_string(tcfg.epochs) + ")");
  result.reached_loss_target = !result.history.empty() && result.history.back().loss <= tcfg.loss_target;
  return result;
}

std::string loss_csv(const std::vector<LossRecord>& history) {
  std::ostringstream os;
  os << "step,epoch,lr,loss\n";
  os.precision(9);
  for (const auto& r : history) os << r.step << ',' << r.epoch << ',' << r.lr << ',' << r.loss << '\n';
  return os.str();
}

void write_loss_csv(const std::vector<LossRecord>& history, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << loss_csv(history);
}

}  // namespace fplab
