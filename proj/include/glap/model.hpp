// Copyright 2026 The GLAP Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "glap/core.hpp"
#include "glap/data.hpp"
#include "glap/loss.hpp"

namespace glap {

/// Encoder back ends. Pretrained encoders plug in as kPassthrough over
/// precomputed embeddings.
enum class EncoderKind {
  kMeanpoolLinear,   // audio: mean over frames, then a linear map
  kByteTrigramHash,  // text: hashed byte-trigram counts, then a linear map
  kPassthrough,      // no weights; the (pooled or hashed) input is the output
};

std::string to_string(EncoderKind kind);
EncoderKind parse_encoder_kind(std::string_view name);

struct EncoderSpec {
  EncoderKind kind = EncoderKind::kPassthrough;
  std::size_t input_dim = 1;
  std::size_t output_dim = 1;
  bool trainable = false;

  void validate() const;

  friend bool operator==(const EncoderSpec&, const EncoderSpec&) = default;
};

template <typename T>
struct BasicEncoder {
  EncoderSpec spec;
  BasicMatrix<T> weight;  // input_dim x output_dim; empty for kPassthrough
};

enum class Activation { kGelu, kIdentity };

std::string to_string(Activation a);
Activation parse_activation(std::string_view name);

/// Two-layer head: d_in -> d_hidden (activation) -> d_out.
template <typename T>
struct BasicProjectionMLP {
  BasicMatrix<T> w1;  // d_in x d_hidden
  std::vector<T> b1;
  BasicMatrix<T> w2;  // d_hidden x d_out
  std::vector<T> b2;
  Activation activation = Activation::kGelu;

  std::size_t in_dim() const noexcept { return w1.rows(); }
  std::size_t hidden_dim() const noexcept { return w1.cols(); }
  std::size_t out_dim() const noexcept { return w2.cols(); }

  void validate() const;

  /// Exact identity map of width d, for wiring precomputed embeddings straight through.
  static BasicProjectionMLP identity(std::size_t d);
};

template <typename T>
struct BasicTowerParams {
  BasicEncoder<T> audio_encoder;
  BasicEncoder<T> text_encoder;
  BasicProjectionMLP<T> proj_a;
  BasicProjectionMLP<T> proj_t;
  LossParams loss_params = LossParams::initial();

  std::size_t embed_dim() const noexcept { return proj_a.out_dim(); }
  void validate() const;

  template <typename U>
  BasicTowerParams<U> cast() const;
};

using Encoder = BasicEncoder<float>;
using ProjectionMLP = BasicProjectionMLP<float>;
using TowerParams = BasicTowerParams<float>;

/// Shapes needed to build fresh tower parameters.
struct ModelConfig {
  EncoderSpec audio;
  EncoderSpec text;
  std::size_t embed_dim = 256;
  Activation activation = Activation::kGelu;
};

/// Seeded initialization: weights ~ N(0, 1/fan_in), biases 0, loss params at
/// tau = 0.07, beta = -10. The text encoder uses unit variance because its
/// input is a unit-norm count vector. MLP hidden width is 2x its input.
TowerParams init_tower_params(const ModelConfig& config, std::uint64_t seed);

/// A named, mutable view of one parameter tensor. `trainable` is false for
/// frozen encoders.
template <typename T>
struct ParamView {
  std::string name;
  std::span<T> values;
  std::vector<std::uint64_t> shape;
  bool trainable = true;
};

/// Every float parameter tensor in a fixed order (loss params excluded).
template <typename T>
std::vector<ParamView<T>> param_views(BasicTowerParams<T>& params);

/// Same structure as `params`, all zeros.
template <typename T>
BasicTowerParams<T> zeros_like(const BasicTowerParams<T>& params);

// ---------------------------------------------------------------------------
// Encoders

/// L2-normalized byte-trigram counts hashed (FNV-1a 64) into `buckets`. Inputs
/// shorter than three bytes count as a single gram.
std::vector<float> trigram_counts(std::string_view utf8, std::size_t buckets);

/// Encoder input for one clip: frame mean (kMeanpoolLinear) or the single row (kPassthrough).
std::vector<float> pool_audio_features(const Matrix& features, const EncoderSpec& spec);

Embedding encode_audio(const Matrix& features, const Encoder& encoder);
Embedding encode_text(std::string_view utf8, const Encoder& encoder);

/// Applies a projection head to one vector (no normalization).
std::vector<float> project(const ProjectionMLP& mlp, std::span<const float> x);

// ---------------------------------------------------------------------------
// Batched forward / backward

/// Encoder inputs for a batch, one row per record.
template <typename T>
struct TowerInputs {
  BasicMatrix<T> audio;
  BasicMatrix<T> text;
};

/// Resolves features and captions for `records` (manifest indices).
/// Errors are re-thrown with the record id attached.
TowerInputs<float> prepare_inputs(const std::vector<ManifestRecord>& manifest,
                                  std::span<const std::size_t> records,
                                  const TowerParams& params, FeatureStore& features);

template <typename T>
struct TowerCache {
  BasicMatrix<T> x, h, z1, a1, z2;
  std::vector<double> norms;
};

template <typename T>
struct PairForward {
  BasicMatrix<T> audio;  // unit-norm rows
  BasicMatrix<T> text;
  TowerCache<T> audio_cache;
  TowerCache<T> text_cache;
};

template <typename T>
PairForward<T> forward_towers(const BasicTowerParams<T>& params, const TowerInputs<T>& inputs);

/// Backpropagates dL/d(audio rows) and dL/d(text rows) into parameter
/// gradients. Frozen encoders receive zero gradients.
template <typename T>
BasicTowerParams<T> backward_towers(const BasicTowerParams<T>& params, const PairForward<T>& fwd,
                                    const BasicMatrix<T>& grad_audio,
                                    const BasicMatrix<T>& grad_text);

/// Encodes, projects and normalizes both towers. Row order follows `records`.
std::pair<EmbeddingBatch, EmbeddingBatch> forward_pair_batch(
    const std::vector<ManifestRecord>& records, const TowerParams& params,
    FeatureStore& features);

/// Projected, normalized text embedding of a single string.
Embedding embed_text(std::string_view utf8, const TowerParams& params);
/// Projected, normalized audio embedding of one clip's features.
Embedding embed_audio(const Matrix& features, const TowerParams& params);

// ---------------------------------------------------------------------------
// Checkpoints

/// Container layout: <dir>/meta.json plus one GLAP-TENSOR file per parameter.
inline constexpr int kCheckpointMajor = 1;
inline constexpr int kCheckpointMinor = 0;

struct CheckpointMeta {
  std::string version = std::to_string(kCheckpointMajor) + "." + std::to_string(kCheckpointMinor);
  std::uint64_t step = 0;
  std::string config_hash;
  LogitForm logit_form = LogitForm::kSiglipConsistent;
};

struct Checkpoint {
  CheckpointMeta meta;
  TowerParams params;
};

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& dir);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

/// Bitwise equality of every parameter, including loss params.
bool bit_equal(const TowerParams& a, const TowerParams& b);

extern template struct BasicTowerParams<float>;
extern template struct BasicTowerParams<double>;

}  // namespace glap
