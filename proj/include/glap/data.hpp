// Copyright 2026 The GLAP Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <mutex>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "glap/core.hpp"
#include "glap/tensor_file.hpp"

namespace glap {

/// Sampling groups: sound + music, English speech, Chinese speech, all other speech.
enum class Group : std::uint8_t { kSoundMusic = 0, kSpeechEn = 1, kSpeechZh = 2, kSpeechOther = 3 };
inline constexpr std::size_t kGroupCount = 4;

enum class Domain : std::uint8_t { kSpeech, kSound, kMusic };

std::string to_string(Group g);
std::string to_string(Domain d);
Group parse_group(std::string_view name);
Domain parse_domain(std::string_view name);

struct FeatureRef {
  std::string path;
  std::uint64_t row = 0;

  friend bool operator==(const FeatureRef&, const FeatureRef&) = default;
};

struct ManifestRecord {
  std::string id;
  Group group = Group::kSoundMusic;
  Domain domain = Domain::kSound;
  std::string language;
  std::string caption;
  FeatureRef feature_ref;

  friend bool operator==(const ManifestRecord&, const ManifestRecord&) = default;
};

/// Parses JSON lines. Blank lines are skipped; every error names its 1-based line.
std::vector<ManifestRecord> parse_manifest(std::istream& in);

/// Reads a manifest file and resolves relative feature paths against its directory.
std::vector<ManifestRecord> load_manifest(const std::filesystem::path& path);

std::string serialize_record(const ManifestRecord& record);
std::string serialize_manifest(const std::vector<ManifestRecord>& records);

std::uint64_t manifest_hash(const std::vector<ManifestRecord>& records);

/// Records that share a source id describe the same clip: "clip7#2" -> "clip7".
std::string_view source_id(std::string_view record_id);

/// Row `ref.row` of a float32 feature file. A [N, F] file yields a 1 x F
/// matrix; a [N, T, F] file yields T x F.
Matrix read_feature_row(const FeatureRef& ref);
Matrix feature_row(const Tensor& tensor, std::uint64_t row, const std::string& source);

/// Decodes each feature file once. Safe for concurrent readers.
class FeatureStore {
 public:
  Matrix row(const FeatureRef& ref);

 private:
  std::mutex mu_;
  std::map<std::string, Tensor> files_;
};

enum class SamplingStrategy { kPerExampleUniform, kPerBatchStratified };

std::string to_string(SamplingStrategy s);
SamplingStrategy parse_strategy(std::string_view name);

/// Record indices of a manifest, bucketed by group.
class GroupIndex {
 public:
  explicit GroupIndex(const std::vector<ManifestRecord>& records);

  const std::vector<std::size_t>& members(Group g) const {
    return members_[static_cast<std::size_t>(g)];
  }
  std::size_t record_count() const noexcept { return record_count_; }

  /// Throws a configuration error naming the first empty group.
  void require_all_groups() const;

 private:
  std::array<std::vector<std::size_t>, kGroupCount> members_;
  std::size_t record_count_ = 0;
};

struct SamplerState {
  std::uint64_t seed = 0;
  SamplingStrategy strategy = SamplingStrategy::kPerExampleUniform;
  std::mt19937_64 rng;
  std::uint64_t draws = 0;          // records drawn so far
  std::size_t remainder_cursor = 0; // next group to receive a stratified remainder slot

  static SamplerState create(std::uint64_t seed, SamplingStrategy strategy);

  friend bool operator==(const SamplerState&, const SamplerState&) = default;
};

struct Batch {
  std::vector<std::size_t> records;  // indices into the manifest
  std::vector<Group> groups;         // group of each slot
};

struct BatchDraw {
  Batch batch;
  SamplerState next;
};

inline constexpr std::size_t kMinBatch = kGroupCount;

/// Draws B record indices. Uniform: each slot picks a group uniformly, then a
/// record uniformly within it. Stratified: floor(B/4) per group, remainder
/// slots handed out round-robin across calls. Both sample with replacement.
BatchDraw sample_batch(const GroupIndex& index, SamplerState state, std::size_t batch_size);

/// Yields exactly `steps` batches from a running sampler state.
class EpochIterator {
 public:
  EpochIterator(const GroupIndex& index, SamplerState state, std::size_t batch_size,
                std::size_t steps);

  bool done() const noexcept { return produced_ == steps_; }
  std::size_t produced() const noexcept { return produced_; }
  Batch next();
  const SamplerState& state() const noexcept { return state_; }

 private:
  const GroupIndex* index_;
  SamplerState state_;
  std::size_t batch_size_;
  std::size_t steps_;
  std::size_t produced_ = 0;
};

}  // namespace glap
