// Copyright 2026 The GLAP Authors
// SPDX-License-Identifier: Apache-2.0

// Toy overfit harness shared by the unit and acceptance tests: 64 pairs,
// 16-wide towers, flat lr 1e-3, then retrieval on the training set.

#pragma once

#include <chrono>
#include <filesystem>

#include "glap/eval.hpp"
#include "glap/train.hpp"
#include "toy_data.hpp"

namespace glap::testing {

struct OverfitRun {
  RetrievalEvaluation retrieval;
  TrainResult trained;
  double seconds = 0.0;
};

inline TrainConfig overfit_config(LossKind loss, std::size_t steps) {
  TrainConfig cfg;
  cfg.loss = loss;
  cfg.batch_size = 32;
  cfg.epochs = 1;
  cfg.steps_per_epoch = steps;
  cfg.seed = 3;
  cfg.schedule = ScheduleKind::kConstant;
  cfg.lr = 1e-3;
  cfg.strategy = SamplingStrategy::kPerExampleUniform;
  cfg.embed_dim = 16;
  cfg.audio_hidden = 16;
  cfg.text_hidden = 16;
  cfg.text_buckets = 256;
  return cfg;
}

inline std::vector<ManifestRecord> overfit_manifest(const std::filesystem::path& dir) {
  const auto ds = make_toy_dataset(dir, 64, 16, 4, 11, "overfit");
  return load_manifest(ds.manifest_path);
}

inline OverfitRun run_overfit(const std::vector<ManifestRecord>& manifest, LossKind loss,
                              std::size_t steps = 2000) {
  const auto start = std::chrono::steady_clock::now();
  OverfitRun run;
  run.trained = train(manifest, overfit_config(loss, steps));
  FeatureStore store;
  const auto [audio, text] = forward_pair_batch(manifest, run.trained.checkpoint.params, store);
  run.retrieval = evaluate_retrieval(audio, text);
  run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return run;
}

}  // namespace glap::testing
