// Copyright 2026 The GLAP Authors
// SPDX-License-Identifier: Apache-2.0

#include "glap/model.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "glap/linalg.hpp"
#include "glap/tensor_file.hpp"
#include "json.hpp"

namespace glap {

using nlohmann::json;

std::string to_string(EncoderKind kind) {
  switch (kind) {
    case EncoderKind::kMeanpoolLinear: return "meanpool_linear";
    case EncoderKind::kByteTrigramHash: return "byte_trigram_hash";
    case EncoderKind::kPassthrough: return "passthrough";
  }
  return "?";
}

EncoderKind parse_encoder_kind(std::string_view name) {
  if (name == "meanpool_linear") return EncoderKind::kMeanpoolLinear;
  if (name == "byte_trigram_hash") return EncoderKind::kByteTrigramHash;
  if (name == "passthrough") return EncoderKind::kPassthrough;
  throw Error(ErrorCode::kConfig, "unknown encoder kind: " + std::string(name));
}

std::string to_string(Activation a) { return a == Activation::kGelu ? "gelu" : "identity"; }

Activation parse_activation(std::string_view name) {
  if (name == "gelu") return Activation::kGelu;
  if (name == "identity") return Activation::kIdentity;
  throw Error(ErrorCode::kConfig, "unknown activation: " + std::string(name));
}

void EncoderSpec::validate() const {
  if (input_dim == 0 || output_dim == 0) {
    throw Error(ErrorCode::kConfig, "encoder dims must be positive");
  }
  if (kind == EncoderKind::kPassthrough && (input_dim != output_dim || trainable)) {
    throw Error(ErrorCode::kConfig,
                "passthrough encoder needs input_dim == output_dim and trainable = false");
  }
}

template <typename T>
void BasicProjectionMLP<T>::validate() const {
  if (w1.empty() || w2.empty() || w1.cols() != w2.rows() || b1.size() != w1.cols() ||
      b2.size() != w2.cols()) {
    throw Error(ErrorCode::kShape, "projection MLP shapes do not chain");
  }
}

template <typename T>
BasicProjectionMLP<T> BasicProjectionMLP<T>::identity(std::size_t d) {
  BasicProjectionMLP mlp;
  mlp.w1 = BasicMatrix<T>(d, 2 * d);
  mlp.w2 = BasicMatrix<T>(2 * d, d);
  for (std::size_t i = 0; i < d; ++i) {
    mlp.w1(i, i) = T{1};
    mlp.w2(i, i) = T{1};
  }
  mlp.b1.assign(2 * d, T{0});
  mlp.b2.assign(d, T{0});
  mlp.activation = Activation::kIdentity;
  return mlp;
}

namespace {

template <typename T>
void validate_encoder(const BasicEncoder<T>& enc, const char* which) {
  enc.spec.validate();
  const bool needs_weight = enc.spec.kind != EncoderKind::kPassthrough;
  if (needs_weight &&
      (enc.weight.rows() != enc.spec.input_dim || enc.weight.cols() != enc.spec.output_dim)) {
    throw Error(ErrorCode::kShape, std::string(which) + " encoder weight shape mismatch");
  }
  if (!needs_weight && !enc.weight.empty()) {
    throw Error(ErrorCode::kShape, std::string(which) + " passthrough encoder has weights");
  }
}

}  // namespace

template <typename T>
void BasicTowerParams<T>::validate() const {
  validate_encoder(audio_encoder, "audio");
  validate_encoder(text_encoder, "text");
  if (audio_encoder.spec.kind == EncoderKind::kByteTrigramHash) {
    throw Error(ErrorCode::kConfig, "audio tower cannot use the byte trigram encoder");
  }
  if (text_encoder.spec.kind == EncoderKind::kMeanpoolLinear) {
    throw Error(ErrorCode::kConfig, "text tower cannot use the mean-pool encoder");
  }
  proj_a.validate();
  proj_t.validate();
  if (proj_a.in_dim() != audio_encoder.spec.output_dim ||
      proj_t.in_dim() != text_encoder.spec.output_dim) {
    throw Error(ErrorCode::kShape, "projection input width differs from encoder output");
  }
  if (proj_a.out_dim() != proj_t.out_dim()) {
    throw Error(ErrorCode::kShape, "audio and text projections disagree on embedding dim");
  }
}

template <typename T>
template <typename U>
BasicTowerParams<U> BasicTowerParams<T>::cast() const {
  auto enc = [](const BasicEncoder<T>& e) {
    return BasicEncoder<U>{e.spec, e.weight.template cast<U>()};
  };
  auto mlp = [](const BasicProjectionMLP<T>& m) {
    return BasicProjectionMLP<U>{m.w1.template cast<U>(),
                                 std::vector<U>(m.b1.begin(), m.b1.end()),
                                 m.w2.template cast<U>(),
                                 std::vector<U>(m.b2.begin(), m.b2.end()), m.activation};
  };
  return {enc(audio_encoder), enc(text_encoder), mlp(proj_a), mlp(proj_t), loss_params};
}

template struct BasicProjectionMLP<float>;
template struct BasicProjectionMLP<double>;
template struct BasicTowerParams<float>;
template struct BasicTowerParams<double>;
template BasicTowerParams<double> BasicTowerParams<float>::cast<double>() const;
template BasicTowerParams<float> BasicTowerParams<double>::cast<float>() const;

namespace {

template <typename T>
BasicMatrix<T> gaussian(std::size_t rows, std::size_t cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, stddev);
  BasicMatrix<T> m(rows, cols);
  for (auto& x : m.data()) x = T(normal(rng));
  return m;
}

BasicEncoder<float> init_encoder(const EncoderSpec& spec, double stddev, std::mt19937_64& rng) {
  spec.validate();
  BasicEncoder<float> enc{spec, {}};
  if (spec.kind != EncoderKind::kPassthrough) {
    enc.weight = gaussian<float>(spec.input_dim, spec.output_dim, stddev, rng);
  }
  return enc;
}

ProjectionMLP init_mlp(std::size_t in, std::size_t out, Activation act, std::mt19937_64& rng) {
  const std::size_t hidden = 2 * in;
  ProjectionMLP mlp;
  mlp.w1 = gaussian<float>(in, hidden, 1.0 / std::sqrt(double(in)), rng);
  mlp.b1.assign(hidden, 0.0f);
  mlp.w2 = gaussian<float>(hidden, out, 1.0 / std::sqrt(double(hidden)), rng);
  mlp.b2.assign(out, 0.0f);
  mlp.activation = act;
  return mlp;
}

}  // namespace

TowerParams init_tower_params(const ModelConfig& config, std::uint64_t seed) {
  if (config.embed_dim == 0) throw Error(ErrorCode::kConfig, "embedding dim must be positive");
  std::mt19937_64 rng(seed);
  TowerParams p;
  p.audio_encoder =
      init_encoder(config.audio, 1.0 / std::sqrt(double(config.audio.input_dim)), rng);
  p.text_encoder = init_encoder(config.text, 1.0, rng);
  p.proj_a = init_mlp(config.audio.output_dim, config.embed_dim, config.activation, rng);
  p.proj_t = init_mlp(config.text.output_dim, config.embed_dim, config.activation, rng);
  p.loss_params = LossParams::initial();
  p.validate();
  return p;
}

namespace {

template <typename T>
void append_encoder_view(std::vector<ParamView<T>>& out, const char* name, BasicEncoder<T>& enc) {
  if (enc.spec.kind == EncoderKind::kPassthrough) return;
  out.push_back({name, enc.weight.data(), {enc.weight.rows(), enc.weight.cols()},
                 enc.spec.trainable});
}

template <typename T>
void append_mlp_views(std::vector<ParamView<T>>& out, const std::string& prefix,
                      BasicProjectionMLP<T>& mlp) {
  out.push_back({prefix + ".w1", mlp.w1.data(), {mlp.w1.rows(), mlp.w1.cols()}, true});
  out.push_back({prefix + ".b1", std::span<T>(mlp.b1), {mlp.b1.size()}, true});
  out.push_back({prefix + ".w2", mlp.w2.data(), {mlp.w2.rows(), mlp.w2.cols()}, true});
  out.push_back({prefix + ".b2", std::span<T>(mlp.b2), {mlp.b2.size()}, true});
}

}  // namespace

template <typename T>
std::vector<ParamView<T>> param_views(BasicTowerParams<T>& params) {
  std::vector<ParamView<T>> out;
  append_encoder_view(out, "audio_encoder.weight", params.audio_encoder);
  append_encoder_view(out, "text_encoder.weight", params.text_encoder);
  append_mlp_views(out, "proj_a", params.proj_a);
  append_mlp_views(out, "proj_t", params.proj_t);
  return out;
}

template <typename T>
BasicTowerParams<T> zeros_like(const BasicTowerParams<T>& params) {
  BasicTowerParams<T> z = params;
  for (auto& view : param_views(z)) std::fill(view.values.begin(), view.values.end(), T{0});
  z.loss_params = {0.0, 0.0};
  return z;
}

template std::vector<ParamView<float>> param_views(BasicTowerParams<float>&);
template std::vector<ParamView<double>> param_views(BasicTowerParams<double>&);
template BasicTowerParams<float> zeros_like(const BasicTowerParams<float>&);
template BasicTowerParams<double> zeros_like(const BasicTowerParams<double>&);

// ---------------------------------------------------------------------------
// Encoders

std::vector<float> trigram_counts(std::string_view utf8, std::size_t buckets) {
  if (utf8.empty()) throw Error(ErrorCode::kInvalidInput, "cannot encode an empty string");
  if (buckets == 0) throw Error(ErrorCode::kConfig, "trigram hash needs at least one bucket");
  std::vector<float> counts(buckets, 0.0f);
  const std::size_t grams = utf8.size() < 3 ? 1 : utf8.size() - 2;
  const std::size_t width = std::min<std::size_t>(3, utf8.size());
  for (std::size_t i = 0; i < grams; ++i) {
    counts[fnv1a64(utf8.substr(i, width)) % buckets] += 1.0f;
  }
  return l2_normalize(counts).values;
}

std::vector<float> pool_audio_features(const Matrix& features, const EncoderSpec& spec) {
  if (features.rows() == 0) throw Error(ErrorCode::kShape, "audio features need at least one frame");
  if (features.cols() != spec.input_dim) {
    throw Error(ErrorCode::kShape, "audio feature width " + std::to_string(features.cols()) +
                                       " does not match encoder input_dim " +
                                       std::to_string(spec.input_dim));
  }
  if (spec.kind == EncoderKind::kPassthrough) {
    if (features.rows() != 1) {
      throw Error(ErrorCode::kShape, "passthrough audio encoder takes exactly one row");
    }
    return std::vector<float>(features.row(0).begin(), features.row(0).end());
  }
  std::vector<double> sum(features.cols(), 0.0);
  for (std::size_t t = 0; t < features.rows(); ++t)
    for (std::size_t f = 0; f < features.cols(); ++f) sum[f] += features(t, f);
  std::vector<float> mean(features.cols());
  for (std::size_t f = 0; f < mean.size(); ++f) mean[f] = float(sum[f] / double(features.rows()));
  return mean;
}

namespace {

Embedding apply_encoder(std::vector<float> x, const Encoder& encoder) {
  for (float v : x) {
    if (!std::isfinite(v)) throw Error(ErrorCode::kInvalidInput, "non-finite encoder input");
  }
  if (encoder.spec.kind == EncoderKind::kPassthrough) return {std::move(x), false};
  const std::size_t width = x.size();
  const Matrix h = linalg::matmul(Matrix(1, width, std::move(x)), encoder.weight);
  return {h.values(), false};
}

}  // namespace

Embedding encode_audio(const Matrix& features, const Encoder& encoder) {
  validate_encoder(encoder, "audio");
  if (encoder.spec.kind == EncoderKind::kByteTrigramHash) {
    throw Error(ErrorCode::kConfig, "byte trigram encoder cannot encode audio");
  }
  return apply_encoder(pool_audio_features(features, encoder.spec), encoder);
}

Embedding encode_text(std::string_view utf8, const Encoder& encoder) {
  validate_encoder(encoder, "text");
  if (encoder.spec.kind == EncoderKind::kMeanpoolLinear) {
    throw Error(ErrorCode::kConfig, "mean-pool encoder cannot encode text");
  }
  return apply_encoder(trigram_counts(utf8, encoder.spec.input_dim), encoder);
}

// ---------------------------------------------------------------------------
// Forward / backward

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

double gelu_grad(double x) {
  return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

template <typename T>
void add_bias(BasicMatrix<T>& m, const std::vector<T>& b) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto row = m.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] = T(double(row[j]) + double(b[j]));
  }
}

template <typename T>
std::vector<T> column_sums(const BasicMatrix<T>& m) {
  std::vector<double> acc(m.cols(), 0.0);
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) acc[j] += m(i, j);
  return std::vector<T>(acc.begin(), acc.end());
}

template <typename T>
BasicMatrix<T> tower_forward(const BasicEncoder<T>& enc, const BasicProjectionMLP<T>& mlp,
                             const BasicMatrix<T>& x, TowerCache<T>& cache) {
  cache.x = x;
  cache.h = enc.spec.kind == EncoderKind::kPassthrough ? x : linalg::matmul(x, enc.weight);
  cache.z1 = linalg::matmul(cache.h, mlp.w1);
  add_bias(cache.z1, mlp.b1);
  cache.a1 = cache.z1;
  if (mlp.activation == Activation::kGelu) {
    for (auto& v : cache.a1.data()) v = T(gelu(v));
  }
  cache.z2 = linalg::matmul(cache.a1, mlp.w2);
  add_bias(cache.z2, mlp.b2);

  BasicMatrix<T> e = cache.z2;
  cache.norms.resize(e.rows());
  for (std::size_t i = 0; i < e.rows(); ++i) {
    auto row = e.row(i);
    double sq = 0.0;
    for (auto v : row) sq += double(v) * double(v);
    cache.norms[i] = std::sqrt(sq);
    const double scale = 1.0 / std::max(cache.norms[i], kNormFloor);
    for (auto& v : row) v = T(double(v) * scale);
  }
  return e;
}

template <typename T>
void tower_backward(const BasicEncoder<T>& enc, const BasicProjectionMLP<T>& mlp,
                    const TowerCache<T>& cache, const BasicMatrix<T>& e,
                    const BasicMatrix<T>& grad_e, BasicEncoder<T>& grad_enc,
                    BasicProjectionMLP<T>& grad_mlp) {
  // Through the row normalization e = z / |z|.
  BasicMatrix<T> gz2(grad_e.rows(), grad_e.cols());
  for (std::size_t i = 0; i < grad_e.rows(); ++i) {
    const double norm = cache.norms[i];
    if (norm > kNormFloor) {
      double along = 0.0;
      for (std::size_t j = 0; j < e.cols(); ++j) along += double(e(i, j)) * grad_e(i, j);
      for (std::size_t j = 0; j < e.cols(); ++j) {
        gz2(i, j) = T((double(grad_e(i, j)) - double(e(i, j)) * along) / norm);
      }
    } else {
      for (std::size_t j = 0; j < e.cols(); ++j) gz2(i, j) = T(grad_e(i, j) / kNormFloor);
    }
  }

  grad_mlp.w2 = linalg::matmul_tn(cache.a1, gz2);
  grad_mlp.b2 = column_sums(gz2);
  BasicMatrix<T> gz1 = linalg::matmul_nt(gz2, mlp.w2);
  if (mlp.activation == Activation::kGelu) {
    for (std::size_t k = 0; k < gz1.size(); ++k) {
      gz1.data()[k] = T(double(gz1.data()[k]) * gelu_grad(cache.z1.data()[k]));
    }
  }
  grad_mlp.w1 = linalg::matmul_tn(cache.h, gz1);
  grad_mlp.b1 = column_sums(gz1);

  if (enc.spec.kind == EncoderKind::kPassthrough) return;
  if (!enc.spec.trainable) {
    grad_enc.weight = BasicMatrix<T>(enc.weight.rows(), enc.weight.cols());
    return;
  }
  const BasicMatrix<T> gh = linalg::matmul_nt(gz1, mlp.w1);
  grad_enc.weight = linalg::matmul_tn(cache.x, gh);
}

}  // namespace

std::vector<float> project(const ProjectionMLP& mlp, std::span<const float> x) {
  mlp.validate();
  if (x.size() != mlp.in_dim()) throw Error(ErrorCode::kShape, "projection input width mismatch");
  Encoder none{{EncoderKind::kPassthrough, x.size(), x.size(), false}, {}};
  TowerCache<float> cache;
  tower_forward(none, mlp, Matrix(1, x.size(), {x.begin(), x.end()}), cache);
  return cache.z2.values();
}

template <typename T>
PairForward<T> forward_towers(const BasicTowerParams<T>& params, const TowerInputs<T>& inputs) {
  if (inputs.audio.rows() != inputs.text.rows()) {
    throw Error(ErrorCode::kShape, "audio and text batches differ in size");
  }
  PairForward<T> out;
  out.audio = tower_forward(params.audio_encoder, params.proj_a, inputs.audio, out.audio_cache);
  out.text = tower_forward(params.text_encoder, params.proj_t, inputs.text, out.text_cache);
  return out;
}

template <typename T>
BasicTowerParams<T> backward_towers(const BasicTowerParams<T>& params, const PairForward<T>& fwd,
                                    const BasicMatrix<T>& grad_audio,
                                    const BasicMatrix<T>& grad_text) {
  BasicTowerParams<T> grads = zeros_like(params);
  tower_backward(params.audio_encoder, params.proj_a, fwd.audio_cache, fwd.audio, grad_audio,
                 grads.audio_encoder, grads.proj_a);
  tower_backward(params.text_encoder, params.proj_t, fwd.text_cache, fwd.text, grad_text,
                 grads.text_encoder, grads.proj_t);
  return grads;
}

template PairForward<float> forward_towers(const BasicTowerParams<float>&,
                                           const TowerInputs<float>&);
template PairForward<double> forward_towers(const BasicTowerParams<double>&,
                                            const TowerInputs<double>&);
template BasicTowerParams<float> backward_towers(const BasicTowerParams<float>&,
                                                 const PairForward<float>&, const Matrix&,
                                                 const Matrix&);
template BasicTowerParams<double> backward_towers(const BasicTowerParams<double>&,
                                                  const PairForward<double>&, const MatrixD&,
                                                  const MatrixD&);

TowerInputs<float> prepare_inputs(const std::vector<ManifestRecord>& manifest,
                                  std::span<const std::size_t> records,
                                  const TowerParams& params, FeatureStore& features) {
  const auto& aspec = params.audio_encoder.spec;
  const auto& tspec = params.text_encoder.spec;
  TowerInputs<float> in{Matrix(records.size(), aspec.input_dim),
                        Matrix(records.size(), tspec.input_dim)};
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& rec = manifest.at(records[i]);
    try {
      const auto pooled = pool_audio_features(features.row(rec.feature_ref), aspec);
      std::copy(pooled.begin(), pooled.end(), in.audio.row(i).begin());
      const auto counts = trigram_counts(rec.caption, tspec.input_dim);
      std::copy(counts.begin(), counts.end(), in.text.row(i).begin());
    } catch (const Error& e) {
      throw Error(e.code(), "record '" + rec.id + "': " + e.what());
    }
  }
  return in;
}

std::pair<EmbeddingBatch, EmbeddingBatch> forward_pair_batch(
    const std::vector<ManifestRecord>& records, const TowerParams& params,
    FeatureStore& features) {
  params.validate();
  std::vector<std::size_t> order(records.size());
  std::vector<std::string> ids(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    order[i] = i;
    ids[i] = records[i].id;
  }
  const auto fwd = forward_towers(params, prepare_inputs(records, order, params, features));
  return {EmbeddingBatch(fwd.audio, ids), EmbeddingBatch(fwd.text, ids)};
}

namespace {

Embedding single_tower(const Encoder& enc, const ProjectionMLP& mlp, std::vector<float> x) {
  TowerCache<float> cache;
  const std::size_t width = x.size();
  const Matrix e = tower_forward(enc, mlp, Matrix(1, width, std::move(x)), cache);
  return {e.values(), cache.norms[0] > kNormFloor};
}

}  // namespace

Embedding embed_text(std::string_view utf8, const TowerParams& params) {
  return single_tower(params.text_encoder, params.proj_t,
                      trigram_counts(utf8, params.text_encoder.spec.input_dim));
}

Embedding embed_audio(const Matrix& features, const TowerParams& params) {
  return single_tower(params.audio_encoder, params.proj_a,
                      pool_audio_features(features, params.audio_encoder.spec));
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

json encoder_json(const EncoderSpec& s) {
  return {{"kind", to_string(s.kind)},
          {"input_dim", s.input_dim},
          {"output_dim", s.output_dim},
          {"trainable", s.trainable}};
}

EncoderSpec encoder_from_json(const json& j) {
  EncoderSpec s;
  s.kind = parse_encoder_kind(j.at("kind").get<std::string>());
  s.input_dim = j.at("input_dim").get<std::size_t>();
  s.output_dim = j.at("output_dim").get<std::size_t>();
  s.trainable = j.at("trainable").get<bool>();
  return s;
}

std::filesystem::path tensor_path(const std::filesystem::path& dir, const std::string& name) {
  return dir / (name + ".glt");
}

int parse_major(const std::string& version) {
  try {
    return std::stoi(version);
  } catch (const std::exception&) {
    throw Error(ErrorCode::kVersion, "unreadable checkpoint version '" + version + "'");
  }
}

}  // namespace

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& dir) {
  checkpoint.params.validate();
  std::filesystem::create_directories(dir);
  TowerParams params = checkpoint.params;

  json tensors = json::array();
  for (const auto& view : param_views(params)) {
    write_tensor_file(tensor_path(dir, view.name),
                      Tensor::f32(view.shape, {view.values.begin(), view.values.end()}));
    tensors.push_back(view.name);
  }
  write_tensor_file(tensor_path(dir, "loss.log_tau"), Tensor::f64({}, {params.loss_params.log_tau}));
  write_tensor_file(tensor_path(dir, "loss.beta"), Tensor::f64({}, {params.loss_params.beta}));
  tensors.push_back("loss.log_tau");
  tensors.push_back("loss.beta");

  json meta = {
      {"version", checkpoint.meta.version},
      {"step", checkpoint.meta.step},
      {"config_hash", checkpoint.meta.config_hash},
      {"logit_form", to_string(checkpoint.meta.logit_form)},
      {"model",
       {{"audio_encoder", encoder_json(params.audio_encoder.spec)},
        {"text_encoder", encoder_json(params.text_encoder.spec)},
        {"proj_a_activation", to_string(params.proj_a.activation)},
        {"proj_t_activation", to_string(params.proj_t.activation)},
        {"proj_a_hidden", params.proj_a.hidden_dim()},
        {"proj_t_hidden", params.proj_t.hidden_dim()},
        {"embed_dim", params.embed_dim()}}},
      {"tensors", tensors},
  };
  std::ofstream out(dir / "meta.json", std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + (dir / "meta.json").string());
  out << meta.dump(2) << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream in(dir / "meta.json");
  if (!in) throw Error(ErrorCode::kIo, "no checkpoint at " + dir.string());
  json meta;
  try {
    meta = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, "checkpoint meta.json: " + std::string(e.what()));
  }

  Checkpoint ck;
  try {
    ck.meta.version = meta.at("version").get<std::string>();
    if (parse_major(ck.meta.version) > kCheckpointMajor) {
      throw Error(ErrorCode::kVersion, "checkpoint version " + ck.meta.version +
                                           " is newer than supported " +
                                           std::to_string(kCheckpointMajor) + ".x");
    }
    ck.meta.step = meta.at("step").get<std::uint64_t>();
    ck.meta.config_hash = meta.at("config_hash").get<std::string>();
    ck.meta.logit_form = parse_logit_form(meta.at("logit_form").get<std::string>());

    const auto& model = meta.at("model");
    auto& p = ck.params;
    p.audio_encoder.spec = encoder_from_json(model.at("audio_encoder"));
    p.text_encoder.spec = encoder_from_json(model.at("text_encoder"));
    const auto d = model.at("embed_dim").get<std::size_t>();
    auto shape_mlp = [d](ProjectionMLP& mlp, std::size_t in_dim, std::size_t hidden,
                         Activation act) {
      mlp.w1 = Matrix(in_dim, hidden);
      mlp.b1.assign(hidden, 0.0f);
      mlp.w2 = Matrix(hidden, d);
      mlp.b2.assign(d, 0.0f);
      mlp.activation = act;
    };
    shape_mlp(p.proj_a, p.audio_encoder.spec.output_dim, model.at("proj_a_hidden").get<std::size_t>(),
              parse_activation(model.at("proj_a_activation").get<std::string>()));
    shape_mlp(p.proj_t, p.text_encoder.spec.output_dim, model.at("proj_t_hidden").get<std::size_t>(),
              parse_activation(model.at("proj_t_activation").get<std::string>()));
    for (auto* enc : {&p.audio_encoder, &p.text_encoder}) {
      if (enc->spec.kind != EncoderKind::kPassthrough) {
        enc->weight = Matrix(enc->spec.input_dim, enc->spec.output_dim);
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, "checkpoint meta.json: " + std::string(e.what()));
  }

  for (auto& view : param_views(ck.params)) {
    const auto t = read_tensor_file(tensor_path(dir, view.name));
    if (t.dims != view.shape) {
      throw Error(ErrorCode::kShape, "checkpoint tensor " + view.name + " has unexpected shape");
    }
    const auto& vals = t.as_f32();
    std::copy(vals.begin(), vals.end(), view.values.begin());
  }
  auto scalar = [&](const char* name) {
    const auto t = read_tensor_file(tensor_path(dir, name));
    if (!t.dims.empty()) throw Error(ErrorCode::kShape, std::string(name) + " must be a scalar");
    return t.as_f64().at(0);
  };
  ck.params.loss_params.log_tau = scalar("loss.log_tau");
  ck.params.loss_params.beta = scalar("loss.beta");
  ck.params.validate();
  return ck;
}

bool bit_equal(const TowerParams& a, const TowerParams& b) {
  if (!(a.audio_encoder.spec == b.audio_encoder.spec) ||
      !(a.text_encoder.spec == b.text_encoder.spec) ||
      a.proj_a.activation != b.proj_a.activation || a.proj_t.activation != b.proj_t.activation) {
    return false;
  }
  TowerParams ca = a, cb = b;
  const auto va = param_views(ca);
  const auto vb = param_views(cb);
  if (va.size() != vb.size()) return false;
  for (std::size_t i = 0; i < va.size(); ++i) {
    if (va[i].name != vb[i].name || va[i].shape != vb[i].shape) return false;
    for (std::size_t k = 0; k < va[i].values.size(); ++k) {
      if (std::bit_cast<std::uint32_t>(va[i].values[k]) !=
          std::bit_cast<std::uint32_t>(vb[i].values[k])) {
        return false;
      }
    }
  }
  return std::bit_cast<std::uint64_t>(a.loss_params.log_tau) ==
             std::bit_cast<std::uint64_t>(b.loss_params.log_tau) &&
         std::bit_cast<std::uint64_t>(a.loss_params.beta) ==
             std::bit_cast<std::uint64_t>(b.loss_params.beta);
}

}  // namespace glap
