// Copyright 2026 The fplab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fplab/checkpoint.hpp"
#include "fplab/model.hpp"

namespace fplab {

enum class ParamSelector { All, AdapterOnly };

std::string to_string(ParamSelector s);
ParamSelector parse_selector(std::string_view text);

// Learning rate the schedule shape was published with, for full-scale models.
// The toy default below is ten times larger.
inline constexpr double kFullScaleBaseLr = 5e-5;

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct TrainConfig {
  double base_lr = 5e-4;
  double warmup_ratio = 0.1;
  int epochs = 30;
  int batch_size = 4;
  AdamHyper adam;
  ParamSelector selector = ParamSelector::All;
  std::uint64_t seed = 0;
  // Reported as reached/not reached; training always runs the full schedule.
  double loss_target = 0.05;

  void validate() const;
};

template <typename T>
struct BackwardResult {
  double loss = 0.0;
  // Keys are parameter names (selector All) or "<target>.lora_A/B" factor
  // names (selector AdapterOnly).
  TensorMap<T> grads;
};

// Loss and gradients of seq_loss over `batch`, multiplied by loss_scale.
template <typename T>
BackwardResult<T> backward_pass(const TensorMap<T>& params, const LowRankOverlay<T>& overlay,
                                const ModelConfig& cfg, std::span<const TokenSeq> batch,
                                ParamSelector selector, T loss_scale = T{1});

BackwardResult<float> backward(const Checkpoint& ckpt, const ModelConfig& cfg,
                               std::span<const TokenSeq> batch, ParamSelector selector,
                               const LowRankOverlay<float>& overlay = {});

template <typename T>
struct AdamState {
  TensorMap<T> m;
  TensorMap<T> v;
  long step = 0;
};

// One bias-corrected Adam update of every parameter that has a gradient.
template <typename T>
void adam_step(TensorMap<T>& params, const TensorMap<T>& grads, AdamState<T>& state, double lr,
               const AdamHyper& hyper = {});

std::size_t warmup_steps(long total_steps, const TrainConfig& cfg);

// Linear ramp 0 -> base_lr over the warmup steps, then cosine decay to 0 at
// total_steps.
double lr_at(long step, long total_steps, const TrainConfig& cfg);

struct LossRecord {
  long step = 0;
  int epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
};

struct TrainResult {
  Checkpoint ckpt;
  // Trained low-rank factors (selector AdapterOnly); empty otherwise.
  TensorMap<float> factors;
  std::vector<LossRecord> history;
  std::size_t trained_parameters = 0;
  bool reached_loss_target = false;
};

// Runs epochs * ceil(|dataset| / batch_size) Adam steps. With AdapterOnly the
// base checkpoint is returned untouched and `factors` are trained.
TrainResult train(const Checkpoint& ckpt, const ModelConfig& cfg, const TrainConfig& tcfg,
                  std::span<const TokenSeq> dataset, const TensorMap<float>& factors = {},
                  double overlay_scale = 0.0);

void write_loss_csv(const std::vector<LossRecord>& history, const std::filesystem::path& path);
std::string loss_csv(const std::vector<LossRecord>& history);

}  // namespace fplab
