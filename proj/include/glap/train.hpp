// Copyright 2026 The GLAP Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "glap/data.hpp"
#include "glap/loss.hpp"
#include "glap/model.hpp"
#include "json.hpp"

namespace glap {

// ---------------------------------------------------------------------------
// Learning-rate schedule

/// Linear warmup from 0 to peak_lr, then half-cosine decay to floor_lr.
struct ScheduleConfig {
  double peak_lr = 1e-4;
  double floor_lr = 1e-5;
  std::uint64_t warmup_steps = 20000;
  std::uint64_t total_steps = 200000;

  void validate() const;
};

/// Steps past total_steps clamp to floor_lr.
double lr_at(std::uint64_t step, const ScheduleConfig& cfg);

// ---------------------------------------------------------------------------
// Adam

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamMoments {
  std::vector<double> m;
  std::vector<double> v;
};

/// Optimizer state. `step` counts completed updates; moments are keyed by tensor name.
struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::map<std::string, AdamMoments> moments;
};

/// One tensor's parameters and gradient. `lr_scale` multiplies the step's lr.
template <typename T>
struct ParamGrad {
  std::string name;
  std::span<T> param;
  std::span<const T> grad;
  double lr_scale = 1.0;
};

/// Standard Adam with bias correction. Every gradient is checked first; a
/// non-finite value throws NumericError and leaves params and state untouched.
void adam_step(std::span<const ParamGrad<float>> tensors,
               std::span<const ParamGrad<double>> scalars, AdamState& opt, double lr);

/// Adam over every trainable tower tensor plus log tau and beta.
void adam_step(TowerParams& params, const TowerParams& grads, AdamState& opt, double lr,
               double loss_param_lr_scale);

/// Scales grads in place so their global L2 norm is at most max_norm. Returns the pre-clip norm.
double clip_global_norm(TowerParams& grads, double max_norm);

// ---------------------------------------------------------------------------
// Training

enum class LossKind { kSigmoid, kInfonce };
enum class ScheduleKind { kCosine, kConstant };

std::string to_string(LossKind k);
LossKind parse_loss_kind(std::string_view name);
std::string to_string(ScheduleKind k);
ScheduleKind parse_schedule_kind(std::string_view name);

struct TrainConfig {
  std::size_t batch_size = 64;
  std::size_t epochs = 20;
  std::size_t steps_per_epoch = 10000;
  std::uint64_t seed = 0;
  LossKind loss = LossKind::kSigmoid;
  LogitForm logit_form = LogitForm::kSiglipConsistent;
  double loss_param_lr_scale = 1.0;
  SamplingStrategy strategy = SamplingStrategy::kPerExampleUniform;

  ScheduleKind schedule = ScheduleKind::kCosine;
  double peak_lr = 1e-4;
  double floor_lr = 1e-5;
  std::optional<std::uint64_t> warmup_steps;  // unset: two epochs (see resolved_schedule)
  double lr = 1e-3;                           // used by ScheduleKind::kConstant
  double clip_norm = 0.0;                     // 0 disables clipping

  std::size_t embed_dim = 256;
  EncoderKind audio_encoder = EncoderKind::kMeanpoolLinear;
  std::size_t audio_hidden = 256;
  bool train_audio_encoder = true;
  EncoderKind text_encoder = EncoderKind::kByteTrigramHash;
  std::size_t text_buckets = 1024;
  std::size_t text_hidden = 256;
  bool train_text_encoder = true;
  Activation activation = Activation::kGelu;

  std::uint64_t total_steps() const noexcept { return std::uint64_t(epochs) * steps_per_epoch; }

  /// Cosine schedule with defaults filled in. The default warmup is two
  /// epochs; runs too short for that warm up over the first tenth instead.
  ScheduleConfig resolved_schedule() const;

  /// Encoder/head shapes for a manifest whose audio features are `feature_dim` wide.
  ModelConfig model_config(std::size_t feature_dim) const;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& cfg);
/// Missing keys keep their defaults; unknown keys are a configuration error.
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});
std::string config_hash(const TrainConfig& cfg);

double learning_rate(const TrainConfig& cfg, std::uint64_t step);

struct StepMetrics {
  std::uint64_t step = 0;
  double lr = 0.0;
  double loss = 0.0;
  double tau = 0.0;
  double beta = 0.0;
};

nlohmann::json to_json(const StepMetrics& m);

/// Loss and parameter gradients of one batch, without updating anything.
struct StepResult {
  double loss = 0.0;
  TowerParams grads;
};

StepResult compute_step(const TowerParams& params, const TowerInputs<float>& inputs,
                        LossKind loss, LogitForm form);

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<StepMetrics> log;
};

/// Where train() writes artifacts; an empty path keeps everything in memory.
struct TrainOutputs {
  std::filesystem::path dir;
};

/// Runs epochs x steps_per_epoch updates of sample -> forward -> loss ->
/// backward -> Adam. With an output dir, appends one JSON line per step to
/// metrics.jsonl, saves epoch-NNN/ after each epoch and final/ at the end.
TrainResult train(const std::vector<ManifestRecord>& manifest, const TrainConfig& cfg,
                  const TrainOutputs& outputs = {});

}  // namespace glap
