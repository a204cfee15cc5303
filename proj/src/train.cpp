// Copyright 2026 The GLAP Authors
// SPDX-License-Identifier: Apache-2.0

#include "glap/train.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

#include "glap/linalg.hpp"

namespace glap {

using nlohmann::json;

void ScheduleConfig::validate() const {
  if (!(floor_lr >= 0.0) || !(floor_lr <= peak_lr) || !std::isfinite(peak_lr)) {
    throw Error(ErrorCode::kConfig, "schedule needs 0 <= floor_lr <= peak_lr");
  }
  if (warmup_steps == 0 || warmup_steps >= total_steps) {
    throw Error(ErrorCode::kConfig, "schedule needs 0 < warmup_steps < total_steps (warmup " +
                                        std::to_string(warmup_steps) + ", total " +
                                        std::to_string(total_steps) + ")");
  }
}

double lr_at(std::uint64_t step, const ScheduleConfig& cfg) {
  if (step > cfg.total_steps) return cfg.floor_lr;
  if (step < cfg.warmup_steps) {
    return cfg.peak_lr * double(step) / double(cfg.warmup_steps);
  }
  const double progress =
      double(step - cfg.warmup_steps) / double(cfg.total_steps - cfg.warmup_steps);
  return cfg.floor_lr +
         (cfg.peak_lr - cfg.floor_lr) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

// ---------------------------------------------------------------------------
// Adam

namespace {

template <typename T>
void check_finite(std::span<const ParamGrad<T>> groups) {
  for (const auto& g : groups) {
    if (g.param.size() != g.grad.size()) {
      throw Error(ErrorCode::kShape, "gradient shape differs from parameter " + g.name);
    }
    for (std::size_t k = 0; k < g.grad.size(); ++k) {
      if (!std::isfinite(g.grad[k])) {
        throw NumericError("non-finite gradient in " + g.name + "[" + std::to_string(k) +
                               "]; Adam step aborted",
                           std::make_pair(k, std::size_t{0}));
      }
    }
  }
}

template <typename T>
void apply(std::span<const ParamGrad<T>> groups, AdamState& opt, double lr, double bc1,
           double bc2) {
  const auto& c = opt.config;
  for (const auto& g : groups) {
    auto& mom = opt.moments[g.name];
    if (mom.m.empty()) {
      mom.m.assign(g.param.size(), 0.0);
      mom.v.assign(g.param.size(), 0.0);
    }
    if (mom.m.size() != g.param.size()) {
      throw Error(ErrorCode::kShape, "optimizer moments do not match " + g.name);
    }
    const double step_lr = lr * g.lr_scale;
    for (std::size_t k = 0; k < g.param.size(); ++k) {
      const double grad = g.grad[k];
      mom.m[k] = c.beta1 * mom.m[k] + (1.0 - c.beta1) * grad;
      mom.v[k] = c.beta2 * mom.v[k] + (1.0 - c.beta2) * grad * grad;
      const double m_hat = mom.m[k] / bc1;
      const double v_hat = mom.v[k] / bc2;
      g.param[k] = T(double(g.param[k]) - step_lr * m_hat / (std::sqrt(v_hat) + c.eps));
    }
  }
}

}  // namespace

void adam_step(std::span<const ParamGrad<float>> tensors,
               std::span<const ParamGrad<double>> scalars, AdamState& opt, double lr) {
  check_finite(tensors);
  check_finite(scalars);
  const std::uint64_t t = opt.step + 1;
  const double bc1 = 1.0 - std::pow(opt.config.beta1, double(t));
  const double bc2 = 1.0 - std::pow(opt.config.beta2, double(t));
  apply(tensors, opt, lr, bc1, bc2);
  apply(scalars, opt, lr, bc1, bc2);
  opt.step = t;
}

namespace {

std::vector<ParamGrad<float>> tower_groups(TowerParams& params, TowerParams& grads) {
  auto pv = param_views(params);
  auto gv = param_views(grads);
  std::vector<ParamGrad<float>> out;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    if (!pv[i].trainable) continue;
    out.push_back({pv[i].name, pv[i].values, gv[i].values, 1.0});
  }
  return out;
}

}  // namespace

void adam_step(TowerParams& params, const TowerParams& grads, AdamState& opt, double lr,
               double loss_param_lr_scale) {
  TowerParams g = grads;
  const auto tensors = tower_groups(params, g);
  const std::vector<ParamGrad<double>> scalars = {
      {"loss.log_tau", std::span(&params.loss_params.log_tau, 1),
       std::span<const double>(&g.loss_params.log_tau, 1), loss_param_lr_scale},
      {"loss.beta", std::span(&params.loss_params.beta, 1),
       std::span<const double>(&g.loss_params.beta, 1), loss_param_lr_scale},
  };
  adam_step(tensors, scalars, opt, lr);
}

double clip_global_norm(TowerParams& grads, double max_norm) {
  auto views = param_views(grads);
  double sq = grads.loss_params.log_tau * grads.loss_params.log_tau +
              grads.loss_params.beta * grads.loss_params.beta;
  for (const auto& v : views)
    for (float x : v.values) sq += double(x) * double(x);
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (auto& v : views)
      for (float& x : v.values) x = float(double(x) * scale);
    grads.loss_params.log_tau *= scale;
    grads.loss_params.beta *= scale;
  }
  return norm;
}

// ---------------------------------------------------------------------------
// Config

std::string to_string(LossKind k) { return k == LossKind::kSigmoid ? "sigmoid" : "infonce"; }

LossKind parse_loss_kind(std::string_view name) {
  if (name == "sigmoid") return LossKind::kSigmoid;
  if (name == "infonce") return LossKind::kInfonce;
  throw Error(ErrorCode::kConfig, "unknown loss: " + std::string(name));
}

std::string to_string(ScheduleKind k) { return k == ScheduleKind::kCosine ? "cosine" : "constant"; }

ScheduleKind parse_schedule_kind(std::string_view name) {
  if (name == "cosine") return ScheduleKind::kCosine;
  if (name == "constant") return ScheduleKind::kConstant;
  throw Error(ErrorCode::kConfig, "unknown schedule: " + std::string(name));
}

ScheduleConfig TrainConfig::resolved_schedule() const {
  ScheduleConfig s;
  s.peak_lr = peak_lr;
  s.floor_lr = floor_lr;
  s.total_steps = total_steps();
  if (warmup_steps) {
    s.warmup_steps = *warmup_steps;
  } else {
    const std::uint64_t two_epochs = 2 * std::uint64_t(steps_per_epoch);
    s.warmup_steps = two_epochs < s.total_steps ? two_epochs
                                                : std::max<std::uint64_t>(1, s.total_steps / 10);
  }
  return s;
}

ModelConfig TrainConfig::model_config(std::size_t feature_dim) const {
  ModelConfig m;
  m.audio = {audio_encoder, feature_dim,
             audio_encoder == EncoderKind::kPassthrough ? feature_dim : audio_hidden,
             audio_encoder != EncoderKind::kPassthrough && train_audio_encoder};
  m.text = {text_encoder, text_buckets,
            text_encoder == EncoderKind::kPassthrough ? text_buckets : text_hidden,
            text_encoder != EncoderKind::kPassthrough && train_text_encoder};
  m.embed_dim = embed_dim;
  m.activation = activation;
  return m;
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::kConfig, what); };
  if (batch_size < kMinBatch) fail("batch_size must be at least " + std::to_string(kMinBatch));
  if (steps_per_epoch == 0) fail("steps_per_epoch must be at least 1");
  if (!(loss_param_lr_scale >= 0.0) || !std::isfinite(loss_param_lr_scale)) {
    fail("loss_param_lr_scale must be a non-negative finite number");
  }
  if (!(lr >= 0.0) || !std::isfinite(lr)) fail("lr must be a non-negative finite number");
  if (!(clip_norm >= 0.0)) fail("clip_norm must be non-negative");
  if (embed_dim == 0 || audio_hidden == 0 || text_buckets == 0 || text_hidden == 0) {
    fail("model dimensions must be positive");
  }
  if (audio_encoder == EncoderKind::kByteTrigramHash) fail("audio encoder cannot be byte_trigram_hash");
  if (text_encoder == EncoderKind::kMeanpoolLinear) fail("text encoder cannot be meanpool_linear");
  if (schedule == ScheduleKind::kCosine && total_steps() >= 2) resolved_schedule().validate();
}

json to_json(const TrainConfig& c) {
  return {
      {"batch_size", c.batch_size},
      {"epochs", c.epochs},
      {"steps_per_epoch", c.steps_per_epoch},
      {"seed", c.seed},
      {"loss", to_string(c.loss)},
      {"logit_form", to_string(c.logit_form)},
      {"loss_param_lr_scale", c.loss_param_lr_scale},
      {"strategy", to_string(c.strategy)},
      {"schedule", to_string(c.schedule)},
      {"peak_lr", c.peak_lr},
      {"floor_lr", c.floor_lr},
      {"warmup_steps", c.warmup_steps ? json(*c.warmup_steps) : json(nullptr)},
      {"lr", c.lr},
      {"clip_norm", c.clip_norm},
      {"embed_dim", c.embed_dim},
      {"audio_encoder", to_string(c.audio_encoder)},
      {"audio_hidden", c.audio_hidden},
      {"train_audio_encoder", c.train_audio_encoder},
      {"text_encoder", to_string(c.text_encoder)},
      {"text_buckets", c.text_buckets},
      {"text_hidden", c.text_hidden},
      {"train_text_encoder", c.train_text_encoder},
      {"activation", to_string(c.activation)},
  };
}

TrainConfig train_config_from_json(const json& j, TrainConfig c) {
  if (!j.is_object()) throw Error(ErrorCode::kConfig, "train config must be a JSON object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "batch_size") c.batch_size = v.get<std::size_t>();
      else if (key == "epochs") c.epochs = v.get<std::size_t>();
      else if (key == "steps_per_epoch") c.steps_per_epoch = v.get<std::size_t>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "loss") c.loss = parse_loss_kind(v.get<std::string>());
      else if (key == "logit_form") c.logit_form = parse_logit_form(v.get<std::string>());
      else if (key == "loss_param_lr_scale") c.loss_param_lr_scale = v.get<double>();
      else if (key == "strategy") c.strategy = parse_strategy(v.get<std::string>());
      else if (key == "schedule") c.schedule = parse_schedule_kind(v.get<std::string>());
      else if (key == "peak_lr") c.peak_lr = v.get<double>();
      else if (key == "floor_lr") c.floor_lr = v.get<double>();
      else if (key == "warmup_steps") {
        c.warmup_steps = v.is_null() ? std::nullopt
                                     : std::optional<std::uint64_t>(v.get<std::uint64_t>());
      } else if (key == "lr") c.lr = v.get<double>();
      else if (key == "clip_norm") c.clip_norm = v.get<double>();
      else if (key == "embed_dim") c.embed_dim = v.get<std::size_t>();
      else if (key == "audio_encoder") c.audio_encoder = parse_encoder_kind(v.get<std::string>());
      else if (key == "audio_hidden") c.audio_hidden = v.get<std::size_t>();
      else if (key == "train_audio_encoder") c.train_audio_encoder = v.get<bool>();
      else if (key == "text_encoder") c.text_encoder = parse_encoder_kind(v.get<std::string>());
      else if (key == "text_buckets") c.text_buckets = v.get<std::size_t>();
      else if (key == "text_hidden") c.text_hidden = v.get<std::size_t>();
      else if (key == "train_text_encoder") c.train_text_encoder = v.get<bool>();
      else if (key == "activation") c.activation = parse_activation(v.get<std::string>());
      else throw Error(ErrorCode::kConfig, "unknown train config key '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfig, std::string("train config: ") + e.what());
  }
  return c;
}

std::string config_hash(const TrainConfig& cfg) {
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << fnv1a64(to_json(cfg).dump());
  return out.str();
}

double learning_rate(const TrainConfig& cfg, std::uint64_t step) {
  if (cfg.schedule == ScheduleKind::kConstant) return cfg.lr;
  if (cfg.total_steps() < 2) return 0.0;
  return lr_at(step, cfg.resolved_schedule());
}

json to_json(const StepMetrics& m) {
  return {{"step", m.step}, {"lr", m.lr}, {"loss", m.loss}, {"tau", m.tau}, {"beta", m.beta}};
}

// ---------------------------------------------------------------------------
// Loop

StepResult compute_step(const TowerParams& params, const TowerInputs<float>& inputs,
                        LossKind loss, LogitForm form) {
  const auto fwd = forward_towers(params, inputs);
  const auto sim = cosine_similarity_matrix(fwd.audio, fwd.text);
  const LossOutput out = loss == LossKind::kSigmoid
                             ? siglip_loss(sim, params.loss_params, form)
                             : infonce_loss(sim, params.loss_params.tau());
  if (!std::isfinite(out.loss)) throw NumericError("non-finite training loss");

  // s_ij = <a_i, t_j> for unit rows: dL/da = G t, dL/dt = G^T a.
  const Matrix g = out.grad_s.cast<float>();
  StepResult result{out.loss,
                    backward_towers(params, fwd, linalg::matmul(g, fwd.text),
                                    linalg::matmul_tn(g, fwd.audio))};
  result.grads.loss_params = {out.grad_u, out.grad_beta};
  return result;
}

namespace {

std::string epoch_dir(std::size_t epoch) {
  std::ostringstream name;
  name << "epoch-" << std::setw(3) << std::setfill('0') << epoch;
  return name.str();
}

}  // namespace

TrainResult train(const std::vector<ManifestRecord>& manifest, const TrainConfig& cfg,
                  const TrainOutputs& outputs) {
  cfg.validate();
  if (manifest.empty()) throw Error(ErrorCode::kConfig, "training manifest is empty");
  const GroupIndex index(manifest);
  index.require_all_groups();

  FeatureStore store;
  std::size_t feature_dim = 0;
  try {
    feature_dim = store.row(manifest.front().feature_ref).cols();
  } catch (const Error& e) {
    throw Error(e.code(), "record '" + manifest.front().id + "': " + e.what());
  }

  TrainResult result;
  result.checkpoint.params = init_tower_params(cfg.model_config(feature_dim), cfg.seed);
  result.checkpoint.meta.config_hash = config_hash(cfg);
  result.checkpoint.meta.logit_form = cfg.logit_form;
  auto& params = result.checkpoint.params;

  std::ofstream metrics;
  if (!outputs.dir.empty()) {
    std::filesystem::create_directories(outputs.dir);
    metrics.open(outputs.dir / "metrics.jsonl", std::ios::trunc);
    if (!metrics) throw Error(ErrorCode::kIo, "cannot write metrics log in " + outputs.dir.string());
  }

  AdamState opt;
  SamplerState sampler = SamplerState::create(cfg.seed, cfg.strategy);
  std::uint64_t step = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    EpochIterator batches(index, sampler, cfg.batch_size, cfg.steps_per_epoch);
    while (!batches.done()) {
      const Batch batch = batches.next();
      const auto inputs = prepare_inputs(manifest, batch.records, params, store);
      StepResult sr = compute_step(params, inputs, cfg.loss, cfg.logit_form);
      if (cfg.clip_norm > 0.0) clip_global_norm(sr.grads, cfg.clip_norm);

      const StepMetrics m{step, learning_rate(cfg, step), sr.loss, params.loss_params.tau(),
                          params.loss_params.beta};
      adam_step(params, sr.grads, opt, m.lr, cfg.loss_param_lr_scale);
      result.log.push_back(m);
      if (metrics.is_open()) metrics << to_json(m).dump() << '\n';
      ++step;
    }
    sampler = batches.state();
    result.checkpoint.meta.step = step;
    if (!outputs.dir.empty()) save_checkpoint(result.checkpoint, outputs.dir / epoch_dir(epoch));
  }
  result.checkpoint.meta.step = step;
  if (!outputs.dir.empty()) save_checkpoint(result.checkpoint, outputs.dir / "final");
  return result;
}

}  // namespace glap
