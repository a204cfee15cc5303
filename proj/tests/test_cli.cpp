// Copyright 2026 The GLAP Authors
// SPDX-License-Identifier: Apache-2.0

#include <fstream>

#include "cli_util.hpp"
#include "doctest.h"
#include "glap/eval.hpp"
#include "glap/model.hpp"
#include "glap/tensor_file.hpp"
#include "json.hpp"
#include "test_util.hpp"
#include "toy_data.hpp"

using namespace glap;
using glap::testing::run_glap;
using glap::testing::slurp;
using glap::testing::TempDir;
using nlohmann::json;

namespace {

std::size_t line_count(const std::string& text) {
  return std::size_t(std::count(text.begin(), text.end(), '\n'));
}

json read_json(const std::filesystem::path& p) { return json::parse(slurp(p)); }

constexpr std::size_t kBuckets = 64;

// Identity towers over passthrough encoders: audio features are the hashed
// text vectors of `feature_text(record)`, so the embeddings coincide.
std::filesystem::path identity_setup(const std::filesystem::path& dir,
                                     const std::vector<std::string>& captions,
                                     const std::vector<std::string>& feature_texts) {
  std::vector<float> feats;
  std::vector<ManifestRecord> records;
  for (std::size_t i = 0; i < captions.size(); ++i) {
    const auto v = trigram_counts(feature_texts[i], kBuckets);
    feats.insert(feats.end(), v.begin(), v.end());
    ManifestRecord r;
    r.id = "clip" + std::to_string(i);
    r.group = Group::kSoundMusic;
    r.domain = Domain::kSound;
    r.language = "en";
    r.caption = captions[i];
    r.feature_ref = {"feats.glt", i};
    records.push_back(r);
  }
  write_tensor_file(dir / "feats.glt", Tensor::f32({captions.size(), kBuckets}, std::move(feats)));
  std::ofstream(dir / "eval.jsonl") << serialize_manifest(records);

  ModelConfig mc;
  mc.audio = {EncoderKind::kPassthrough, kBuckets, kBuckets, false};
  mc.text = {EncoderKind::kPassthrough, kBuckets, kBuckets, false};
  mc.embed_dim = kBuckets;
  Checkpoint ck;
  ck.params = init_tower_params(mc, 0);
  ck.params.proj_a = ProjectionMLP::identity(kBuckets);
  ck.params.proj_t = ProjectionMLP::identity(kBuckets);
  save_checkpoint(ck, dir / "identity");
  return dir / "identity";
}

}  // namespace

TEST_CASE("train writes metrics, checkpoints and a replayable run.json") {
  TempDir dir;
  const auto ds = glap::testing::make_toy_dataset(dir.path(), 16, 6, 3, 1);
  const std::string manifest = ds.manifest_path.string();
  const auto a = dir.path() / "a";
  const auto r = run_glap({"train", "--manifest", manifest, "--steps", "10", "--batch-size", "8",
                           "--seed", "1", "--embed-dim", "8", "--text-buckets", "64", "--out",
                           a.string()});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(line_count(slurp(a / "metrics.jsonl")) == 10);
  CHECK(std::filesystem::exists(a / "final" / "meta.json"));
  CHECK(std::filesystem::exists(a / "epoch-001" / "meta.json"));

  const auto run = read_json(a / "run.json");
  CHECK(run["subcommand"] == "train");
  CHECK(run["manifest"] == manifest);
  CHECK(run["batch_size"] == 8);
  CHECK(run["epochs"] == 1);
  CHECK(run["steps_per_epoch"] == 10);
  CHECK(run["loss"] == "sigmoid");
  CHECK(run["warmup_steps"] == 1);  // resolved, not left to the default
  CHECK(run.contains("peak_lr"));

  const auto b = dir.path() / "b";
  REQUIRE(run_glap({"train", "--config", (a / "run.json").string(), "--out", b.string()}).code == 0);
  CHECK(slurp(a / "metrics.jsonl") == slurp(b / "metrics.jsonl"));
  CHECK(slurp(a / "run.json") == slurp(b / "run.json"));
  CHECK(slurp(a / "final" / "proj_t.w2.glt") == slurp(b / "final" / "proj_t.w2.glt"));
  CHECK(bit_equal(load_checkpoint(a / "final").params, load_checkpoint(b / "final").params));

  // Explicit flags override the replayed config.
  const auto c = dir.path() / "c";
  REQUIRE(run_glap({"train", "--config", (a / "run.json").string(), "--loss", "infonce", "--out",
                    c.string()})
              .code == 0);
  CHECK(read_json(c / "run.json")["loss"] == "infonce");
  CHECK(read_json(c / "run.json")["batch_size"] == 8);
}

TEST_CASE("configuration errors exit with code 2") {
  TempDir dir;
  const auto out = (dir.path() / "o").string();
  auto missing = run_glap({"train", "--manifest", (dir.path() / "nope.jsonl").string(), "--steps",
                           "1", "--out", out});
  CHECK(missing.code == 2);
  CHECK(missing.err.find("nope.jsonl") != std::string::npos);

  CHECK(run_glap({"train", "--manifst", "x", "--out", out}).code == 2);
  CHECK(run_glap({"train", "--manifest", "x", "--batch-size", "eight", "--out", out}).code == 2);
  CHECK(run_glap({"train", "--manifest", "x", "--batch-size", "2", "--out", out}).code == 2);
  CHECK(run_glap({"train", "--steps", "3", "--out", out}).code == 2);  // no manifest
  CHECK(run_glap({"frobnicate"}).code == 2);
  CHECK(run_glap({}).code == 2);
  CHECK(run_glap({"gradcheck", "--B", "1", "--out", out}).code == 2);
  CHECK(run_glap({"eval-zeroshot", "--domain", "opera", "--labels", "l", "--manifest", "m",
                  "--checkpoint", "c", "--out", out})
            .code == 2);

  std::ofstream(dir.path() / "bad.json") << R"({"subcommand": "gradcheck", "B": 8, "colour": 1})";
  CHECK(run_glap({"gradcheck", "--config", (dir.path() / "bad.json").string(), "--out", out}).code == 2);
  CHECK(run_glap({"sample-audit", "--config", (dir.path() / "bad.json").string(), "--out", out}).code == 2);
  CHECK(run_glap({"--help"}).code == 0);
}

TEST_CASE("gradcheck subcommand") {
  TempDir dir;
  const auto r = run_glap({"gradcheck", "--B", "8", "--seed", "0", "--out", dir.path().string()});
  CHECK(r.code == 0);
  CHECK(r.out.find("max relative error") != std::string::npos);
  const auto report = read_json(dir.path() / "gradcheck.json");
  CHECK(report["pass"] == true);
  CHECK(report["cases"].size() == 3);
  CHECK(report["max_rel_error"].get<double>() <= 1e-4);
}

TEST_CASE("sample-audit subcommand") {
  TempDir dir;
  const auto u = dir.path() / "u";
  REQUIRE(run_glap({"sample-audit", "--draws", "4000", "--strategy", "uniform", "--out", u.string()}).code == 0);
  const auto report = read_json(u / "audit.json");
  for (const auto& [group, freq] : report["frequencies"].items()) {
    CAPTURE(group);
    CHECK(freq.get<double>() >= 0.22);
    CHECK(freq.get<double>() <= 0.28);
  }
  CHECK(report["draws"] == 4000);

  const auto u2 = dir.path() / "u2";
  REQUIRE(run_glap({"sample-audit", "--draws", "4000", "--strategy", "uniform", "--out", u2.string()}).code == 0);
  CHECK(slurp(u / "audit.json") == slurp(u2 / "audit.json"));

  const auto s = dir.path() / "s";
  REQUIRE(run_glap({"sample-audit", "--strategy", "stratified", "--batch-size", "8", "--out", s.string()}).code == 0);
  const auto strat = read_json(s / "audit.json");
  CHECK(strat["batches_off_quota"] == 0);
  CHECK(strat["per_batch_quota"] == 2);
  for (const auto& [group, count] : strat["counts"].items()) CHECK(count == 1000);

  CHECK(run_glap({"sample-audit", "--strategy", "roundrobin", "--out", s.string()}).code == 2);
}

TEST_CASE("eval-retrieval: identity passthrough towers give R@1 = 1") {
  TempDir dir;
  const std::vector<std::string> captions = {"a dog barks twice", "rain on a tin roof",
                                             "an ambulance siren", "birds at dawn",
                                             "a violin solo"};
  const auto ck = identity_setup(dir.path(), captions, captions);
  const auto out = dir.path() / "eval";
  const auto r = run_glap({"eval-retrieval", "--manifest", (dir.path() / "eval.jsonl").string(),
                           "--checkpoint", ck.string(), "--out", out.string()});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const auto report = read_json(out / "retrieval.json");
  CHECK(report["text_to_audio"]["r1"] == 1.0);
  CHECK(report["audio_to_text"]["r1"] == 1.0);
  CHECK(report["text_to_audio"]["n_queries"] == 5);
  CHECK(read_json(out / "run.json")["checkpoint"] == ck.string());

  std::ofstream(dir.path() / "empty.jsonl") << "";
  CHECK(run_glap({"eval-retrieval", "--manifest", (dir.path() / "empty.jsonl").string(),
                  "--checkpoint", ck.string(), "--out", out.string()})
            .code == 2);
}

TEST_CASE("eval-retrieval on a CLI-trained toy overfit checkpoint") {
  TempDir dir;
  const auto ds = glap::testing::make_toy_dataset(dir.path(), 64, 16, 4, 11, "overfit");
  const auto manifest = ds.manifest_path.string();
  const auto t = dir.path() / "t";
  REQUIRE(run_glap({"train", "--manifest", manifest, "--steps", "2000", "--batch-size", "32",
                    "--seed", "3", "--schedule", "constant", "--lr", "1e-3", "--embed-dim", "16",
                    "--audio-hidden", "16", "--text-hidden", "16", "--text-buckets", "256",
                    "--out", t.string()})
              .code == 0);
  const auto e = dir.path() / "e";
  REQUIRE(run_glap({"eval-retrieval", "--manifest", manifest, "--checkpoint",
                    (t / "final").string(), "--out", e.string()})
              .code == 0);
  const auto report = read_json(e / "retrieval.json");
  CHECK(report["text_to_audio"]["r1"].get<double>() >= 0.95);
  CHECK(report["audio_to_text"]["r1"].get<double>() >= 0.95);
}

TEST_CASE("eval-zeroshot renders domain prompts and solves a separable task") {
  TempDir dir;
  const std::vector<std::string> labels = {"dog", "rain", "siren"};
  std::ofstream(dir.path() / "labels.txt") << "dog\nrain\nsiren\n";
  const std::vector<std::string> truth = {"rain", "dog", "siren", "siren", "dog"};
  std::vector<std::string> features;
  const auto sound = PromptTemplate::for_domain(Domain::kSound);
  for (const auto& l : truth) features.push_back(sound.render(l));
  const auto ck = identity_setup(dir.path(), truth, features);
  const auto args = [&](const std::string& domain, const std::string& out) {
    return std::vector<std::string>{"eval-zeroshot", "--domain", domain, "--labels",
                                    (dir.path() / "labels.txt").string(), "--manifest",
                                    (dir.path() / "eval.jsonl").string(), "--checkpoint",
                                    ck.string(), "--out", (dir.path() / out).string()};
  };

  REQUIRE(run_glap(args("sound", "sound")).code == 0);
  const auto report = read_json(dir.path() / "sound" / "zeroshot.json");
  CHECK(report["accuracy"] == 1.0);
  CHECK(report["prompts"][0] == "The sound of dog can be heard.");

  REQUIRE(run_glap(args("speech", "speech")).code == 0);
  const auto speech = read_json(dir.path() / "speech" / "zeroshot.json");
  CHECK(speech["prompts"] == json::array({"dog", "rain", "siren"}));

  REQUIRE(run_glap(args("music", "music")).code == 0);
  CHECK(read_json(dir.path() / "music" / "zeroshot.json")["prompts"][2] ==
        "The music in the style of siren.");

  auto multi = args("sound", "multi");
  multi.push_back("--multi-label");
  REQUIRE(run_glap(multi).code == 0);
  const auto m = read_json(dir.path() / "multi" / "zeroshot.json");
  CHECK(m["map"] == 1.0);
  CHECK(m["multi_label"] == true);
}
