// Copyright 2026 The GLAP Authors
// SPDX-License-Identifier: Apache-2.0

#include <bit>
#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "glap/data.hpp"
#include "test_util.hpp"

using namespace glap;
using glap::testing::TempDir;

namespace {

ManifestRecord record(std::string id, Group g, std::uint64_t row = 0) {
  ManifestRecord r;
  r.id = std::move(id);
  r.group = g;
  r.domain = g == Group::kSoundMusic ? Domain::kSound : Domain::kSpeech;
  r.language = g == Group::kSpeechZh ? "zh" : "en";
  r.caption = "caption of " + r.id;
  r.feature_ref = {"feats.glt", row};
  return r;
}

std::vector<ManifestRecord> grouped_manifest(std::array<std::size_t, kGroupCount> sizes) {
  std::vector<ManifestRecord> out;
  for (std::size_t g = 0; g < kGroupCount; ++g)
    for (std::size_t i = 0; i < sizes[g]; ++i)
      out.push_back(record("g" + std::to_string(g) + "-" + std::to_string(i), Group(g), i));
  return out;
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected glap::Error");
  return ErrorCode::kInvalidInput;
}

std::string message_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.what();
  }
  FAIL("expected glap::Error");
  return {};
}

const char* kSpeechLine =
    R"({"id":"a1","group":"SPEECH_EN","domain":"speech","language":"en-US",)"
    R"("caption":"hello world","feature_ref":{"path":"f.glt","row":3}})";

}  // namespace

TEST_CASE("crc32 matches the IEEE check value") {
  const std::string text = "123456789";
  CHECK(crc32(std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size())) ==
        0xCBF43926u);
}

TEST_CASE("GLAP-TENSOR round trip and layout") {
  TempDir dir;
  const auto t = Tensor::f32({1, 2}, {1.5f, -2.0f});
  write_tensor_file(dir / "row.glt", t);
  const auto back = read_tensor_file(dir / "row.glt");
  CHECK(back == t);
  CHECK(std::bit_cast<std::uint32_t>(back.as_f32()[0]) == std::bit_cast<std::uint32_t>(1.5f));

  const auto bytes = encode_tensor(t);
  // 8 magic + 4 version + 1 dtype + 1 ndim + 2*8 dims + 8 payload + 4 crc
  CHECK(bytes.size() == 42);
  CHECK(std::string(bytes.begin(), bytes.begin() + 8) == "GLAPTNSR");
  CHECK(bytes[8] == 1);
  CHECK(bytes[12] == 0);
  CHECK(bytes[13] == 2);

  const auto d = Tensor::f64({3}, {0.1, -1e300, 0.07});
  CHECK(decode_tensor(encode_tensor(d), "mem") == d);

  const auto scalar = Tensor::f32({}, {4.0f});
  CHECK(decode_tensor(encode_tensor(scalar), "mem") == scalar);
}

TEST_CASE("GLAP-TENSOR corruption is detected") {
  auto bytes = encode_tensor(Tensor::f32({2, 2}, {1, 2, 3, 4}));

  auto flipped = bytes;
  flipped[30] ^= 0x01;  // inside the payload
  CHECK(code_of([&] { decode_tensor(flipped, "mem"); }) == ErrorCode::kChecksum);

  auto truncated = bytes;
  truncated.resize(bytes.size() - 3);
  CHECK(code_of([&] { decode_tensor(truncated, "mem"); }) == ErrorCode::kIo);

  auto newer = bytes;
  newer[8] = 2;
  CHECK(code_of([&] { decode_tensor(newer, "mem"); }) == ErrorCode::kVersion);

  auto bad_dtype = bytes;
  bad_dtype[12] = 7;
  CHECK(code_of([&] { decode_tensor(bad_dtype, "mem"); }) == ErrorCode::kUnsupported);

  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK(code_of([&] { decode_tensor(bad_magic, "mem"); }) == ErrorCode::kParse);
}

TEST_CASE("read_feature_row") {
  TempDir dir;
  const auto path = (dir / "feats.glt").string();
  write_tensor_file(path, Tensor::f32({2, 2}, {1.5f, -2.0f, 3.0f, 4.0f}));

  const auto row = read_feature_row({path, 0});
  CHECK(row == Matrix(1, 2, {1.5f, -2.0f}));
  CHECK(code_of([&] { read_feature_row({path, 2}); }) == ErrorCode::kRange);

  // Frame-level features: [N, T, F].
  const auto frames = (dir / "frames.glt").string();
  write_tensor_file(frames, Tensor::f32({2, 3, 2}, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11}));
  CHECK(read_feature_row({frames, 1}) == Matrix(3, 2, {6, 7, 8, 9, 10, 11}));

  const auto wide = (dir / "wide.glt").string();
  write_tensor_file(wide, Tensor::f64({1, 2}, {1.0, 2.0}));
  CHECK(code_of([&] { read_feature_row({wide, 0}); }) == ErrorCode::kUnsupported);

  auto bytes = encode_tensor(Tensor::f32({2, 2}, {1.5f, -2.0f, 3.0f, 4.0f}));
  bytes[bytes.size() - 6] ^= 0x80;
  const auto corrupt = dir / "corrupt.glt";
  testing::spit(corrupt, std::string(bytes.begin(), bytes.end()));
  CHECK(code_of([&] { read_feature_row({corrupt.string(), 0}); }) == ErrorCode::kChecksum);

  FeatureStore store;
  CHECK(store.row({path, 1}) == Matrix(1, 2, {3.0f, 4.0f}));
  CHECK(store.row({path, 1}) == Matrix(1, 2, {3.0f, 4.0f}));
}

TEST_CASE("parse_manifest accepts a valid line") {
  std::istringstream in(kSpeechLine);
  const auto records = parse_manifest(in);
  REQUIRE(records.size() == 1);
  CHECK(records[0].id == "a1");
  CHECK(records[0].group == Group::kSpeechEn);
  CHECK(records[0].domain == Domain::kSpeech);
  CHECK(records[0].language == "en-US");
  CHECK(records[0].feature_ref == FeatureRef{"f.glt", 3});
}

TEST_CASE("parse_manifest errors carry line numbers") {
  std::string text;
  for (int i = 0; i < 6; ++i) text += serialize_record(record("r" + std::to_string(i), Group::kSoundMusic)) + "\n";
  text += serialize_record(record("r2", Group::kSpeechEn)) + "\n";  // line 7
  std::istringstream dup(text);
  const auto msg = message_of([&] { parse_manifest(dup); });
  CHECK(msg.find("line 7") != std::string::npos);
  CHECK(msg.find("duplicate") != std::string::npos);

  auto parse = [](std::string line) {
    std::istringstream in(line);
    return message_of([&] { parse_manifest(in); });
  };
  CHECK(parse(R"({"id":"x","group":"SPEECH_EN","domain":"sound","language":"en","caption":"c","feature_ref":{"path":"p","row":0}})")
            .find("inconsistent") != std::string::npos);
  CHECK(parse(R"({"id":"x","group":"NOISE","domain":"sound","language":"en","caption":"c","feature_ref":{"path":"p","row":0}})")
            .find("unknown group") != std::string::npos);
  CHECK(parse(R"({"id":"x","group":"SOUND_MUSIC","domain":"film","language":"en","caption":"c","feature_ref":{"path":"p","row":0}})")
            .find("unknown domain") != std::string::npos);
  CHECK(parse(R"({"id":"x","group":"SOUND_MUSIC","domain":"sound","language":"en","feature_ref":{"path":"p","row":0}})")
            .find("missing field 'caption'") != std::string::npos);
  CHECK(parse(R"({"id":"x","group":"SOUND_MUSIC","domain":"sound","language":"en","caption":"c","feature_ref":{"path":"p","row":-1}})")
            .find("row") != std::string::npos);
  CHECK(parse("not json").find("line 1") != std::string::npos);
  CHECK(parse(R"({"id":"x","group":"SOUND_MUSIC","domain":"music","language":"??","caption":"c","feature_ref":{"path":"p","row":0}})")
            .find("language") != std::string::npos);
}

TEST_CASE("parse_manifest inverts serialize_manifest") {
  std::mt19937_64 rng(9);
  const std::vector<std::string> captions = {"rain on a tin roof", "你好，世界", "Guten Tag",
                                             "quote \" and \\ backslash", "tab\tnew\nline"};
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<ManifestRecord> records;
    const std::size_t n = 1 + rng() % 12;
    for (std::size_t i = 0; i < n; ++i) {
      auto r = record("id" + std::to_string(trial) + "_" + std::to_string(i), Group(rng() % 4), rng() % 1000);
      if (r.group == Group::kSoundMusic && rng() % 2) r.domain = Domain::kMusic;
      r.caption = captions[rng() % captions.size()];
      records.push_back(r);
    }
    std::istringstream in(serialize_manifest(records));
    CHECK(parse_manifest(in) == records);
  }
}

TEST_CASE("load_manifest resolves feature paths next to the manifest") {
  TempDir dir;
  testing::spit(dir / "m.jsonl", std::string(kSpeechLine) + "\n\n");
  const auto records = load_manifest(dir / "m.jsonl");
  REQUIRE(records.size() == 1);
  CHECK(records[0].feature_ref.path == (dir / "f.glt").string());
  CHECK(code_of([&] { load_manifest(dir / "missing.jsonl"); }) == ErrorCode::kIo);
}

TEST_CASE("source_id") {
  CHECK(source_id("clip7#2") == "clip7");
  CHECK(source_id("clip7") == "clip7");
}

TEST_CASE("stratified batches hold floor(B/4) per group") {
  const auto manifest = grouped_manifest({50, 7, 3, 2});
  const GroupIndex index(manifest);
  auto state = SamplerState::create(1, SamplingStrategy::kPerBatchStratified);
  for (int i = 0; i < 20; ++i) {
    auto draw = sample_batch(index, state, 8);
    std::array<int, kGroupCount> counts{};
    for (auto r : draw.batch.records) ++counts[static_cast<std::size_t>(manifest[r].group)];
    CHECK(counts == std::array<int, kGroupCount>{2, 2, 2, 2});
    state = draw.next;
  }
  for (std::size_t b : {5u, 6u, 7u, 13u}) {
    std::array<long, kGroupCount> totals{};
    for (int i = 0; i < 8; ++i) {
      auto draw = sample_batch(index, state, b);
      std::array<long, kGroupCount> counts{};
      for (auto r : draw.batch.records) ++counts[static_cast<std::size_t>(manifest[r].group)];
      for (std::size_t g = 0; g < kGroupCount; ++g) {
        CHECK(std::abs(double(counts[g]) - double(b) / 4.0) <= 1.0);
        totals[g] += counts[g];
      }
      state = draw.next;
    }
    // Round-robin remainder: over 4 consecutive batches every group is even.
    for (auto t : totals) CHECK(t == long(8 * b / 4));
  }
}

TEST_CASE("uniform sampling balances skewed groups") {
  const auto manifest = grouped_manifest({1000, 100, 10, 5});
  const GroupIndex index(manifest);
  for (std::uint64_t seed : {0u, 1u, 2u, 3u}) {
    auto state = SamplerState::create(seed, SamplingStrategy::kPerExampleUniform);
    std::array<double, kGroupCount> freq{};
    for (int b = 0; b < 500; ++b) {
      auto draw = sample_batch(index, state, 8);
      for (std::size_t s = 0; s < 8; ++s) {
        CHECK(manifest[draw.batch.records[s]].group == draw.batch.groups[s]);
        freq[static_cast<std::size_t>(draw.batch.groups[s])] += 1.0 / 4000.0;
      }
      state = draw.next;
    }
    CHECK(state.draws == 4000);
    for (double f : freq) {
      CHECK(f >= 0.22);
      CHECK(f <= 0.28);
    }
  }
}

TEST_CASE("sampling is deterministic per seed") {
  const auto manifest = grouped_manifest({20, 5, 5, 5});
  const GroupIndex index(manifest);
  for (auto strategy : {SamplingStrategy::kPerExampleUniform, SamplingStrategy::kPerBatchStratified}) {
    auto a = sample_batch(index, SamplerState::create(77, strategy), 16);
    auto b = sample_batch(index, SamplerState::create(77, strategy), 16);
    CHECK(a.batch.records == b.batch.records);
    CHECK(a.next == b.next);
    auto c = sample_batch(index, SamplerState::create(78, strategy), 16);
    CHECK(a.batch.records != c.batch.records);
  }
}

TEST_CASE("sample_batch configuration errors") {
  const auto manifest = grouped_manifest({3, 3, 0, 3});
  const GroupIndex index(manifest);
  const auto state = SamplerState::create(0, SamplingStrategy::kPerExampleUniform);
  CHECK(message_of([&] { sample_batch(index, state, 8); }).find("SPEECH_ZH") != std::string::npos);
  const GroupIndex full(grouped_manifest({1, 1, 1, 1}));
  CHECK(code_of([&] { sample_batch(full, state, 3); }) == ErrorCode::kConfig);
}

TEST_CASE("epoch iterator") {
  const auto manifest = grouped_manifest({4, 4, 4, 4});
  const GroupIndex index(manifest);
  const auto start = SamplerState::create(5, SamplingStrategy::kPerExampleUniform);

  EpochIterator full_epoch(index, start, 4, 10000);
  std::size_t n = 0;
  while (!full_epoch.done()) {
    full_epoch.next();
    ++n;
  }
  CHECK(n == 10000);
  CHECK_THROWS_AS(full_epoch.next(), Error);

  EpochIterator single(index, start, 4, 1);
  single.next();
  CHECK(single.done());
  CHECK_THROWS_AS(EpochIterator(index, start, 4, 0), Error);

  // Two chained epochs equal one run of twice the length.
  std::vector<std::vector<std::size_t>> chained, joined;
  EpochIterator first(index, start, 8, 25);
  while (!first.done()) chained.push_back(first.next().records);
  EpochIterator second(index, first.state(), 8, 25);
  while (!second.done()) chained.push_back(second.next().records);
  EpochIterator both(index, start, 8, 50);
  while (!both.done()) joined.push_back(both.next().records);
  CHECK(chained == joined);
}
