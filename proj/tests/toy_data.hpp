// Copyright 2026 The GLAP Authors
// SPDX-License-Identifier: Apache-2.0

// Synthetic paired data for tests: random frame features and random captions,
// spread evenly over the four sampling groups.

#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "glap/data.hpp"
#include "glap/tensor_file.hpp"

namespace glap::testing {

struct ToyDataset {
  std::filesystem::path manifest_path;
  std::filesystem::path features_path;
  std::vector<ManifestRecord> records;  // as written (relative feature paths)
  std::size_t feature_dim = 0;
};

inline std::string random_word(std::mt19937_64& rng, std::size_t len) {
  static const char kLetters[] = "abcdefghijklmnopqrstuvwxyz";
  std::string w;
  for (std::size_t i = 0; i < len; ++i) w += kLetters[rng() % 26];
  return w;
}

/// `pairs` records, round-robin over groups; features are [pairs, frames, dim].
inline ToyDataset make_toy_dataset(const std::filesystem::path& dir, std::size_t pairs,
                                   std::size_t dim, std::size_t frames, std::uint64_t seed,
                                   const std::string& stem = "toy") {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  std::vector<float> feats;
  feats.reserve(pairs * frames * dim);
  ToyDataset ds;
  ds.feature_dim = dim;
  ds.features_path = dir / (stem + ".glt");
  static const char* kLang[] = {"en", "en", "zh", "de"};
  for (std::size_t i = 0; i < pairs; ++i) {
    std::vector<float> base(dim);
    for (auto& v : base) v = normal(rng);
    for (std::size_t t = 0; t < frames; ++t)
      for (std::size_t f = 0; f < dim; ++f) feats.push_back(base[f] + 0.1f * normal(rng));

    ManifestRecord r;
    r.id = stem + std::to_string(i);
    r.group = static_cast<Group>(i % kGroupCount);
    r.domain = r.group == Group::kSoundMusic ? (i % 8 == 0 ? Domain::kMusic : Domain::kSound)
                                             : Domain::kSpeech;
    r.language = kLang[i % kGroupCount];
    r.caption = random_word(rng, 5) + " " + random_word(rng, 6) + " " + random_word(rng, 4);
    r.feature_ref = {ds.features_path.filename().string(), i};
    ds.records.push_back(r);
  }
  write_tensor_file(ds.features_path, Tensor::f32({pairs, frames, dim}, std::move(feats)));
  ds.manifest_path = dir / (stem + ".jsonl");
  std::ofstream(ds.manifest_path) << serialize_manifest(ds.records);
  return ds;
}

}  // namespace glap::testing
