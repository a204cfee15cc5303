// Copyright 2026 The GLAP Authors
// SPDX-License-Identifier: Apache-2.0

#include "glap/data.hpp"

#include <fstream>
#include <istream>
#include <regex>
#include <sstream>
#include <unordered_set>

#include "json.hpp"

namespace glap {

using nlohmann::json;

namespace {

constexpr std::array<const char*, kGroupCount> kGroupNames = {"SOUND_MUSIC", "SPEECH_EN",
                                                              "SPEECH_ZH", "SPEECH_OTHER"};

[[noreturn]] void fail_line(std::size_t line, const std::string& what) {
  throw Error(ErrorCode::kParse, "manifest line " + std::to_string(line) + ": " + what);
}

const json& field(const json& obj, const char* name, std::size_t line) {
  auto it = obj.find(name);
  if (it == obj.end()) fail_line(line, std::string("missing field '") + name + "'");
  return *it;
}

std::string string_field(const json& obj, const char* name, std::size_t line) {
  const auto& v = field(obj, name, line);
  if (!v.is_string()) fail_line(line, std::string("field '") + name + "' must be a string");
  return v.get<std::string>();
}

bool valid_language_tag(const std::string& tag) {
  static const std::regex kBcp47("^[A-Za-z]{2,8}(-[A-Za-z0-9]{1,8})*$");
  return std::regex_match(tag, kBcp47);
}

}  // namespace

std::string to_string(Group g) { return kGroupNames[static_cast<std::size_t>(g)]; }

std::string to_string(Domain d) {
  switch (d) {
    case Domain::kSpeech: return "speech";
    case Domain::kSound: return "sound";
    case Domain::kMusic: return "music";
  }
  return "?";
}

Group parse_group(std::string_view name) {
  for (std::size_t i = 0; i < kGroupCount; ++i) {
    if (name == kGroupNames[i]) return static_cast<Group>(i);
  }
  throw Error(ErrorCode::kParse, "unknown group '" + std::string(name) + "'");
}

Domain parse_domain(std::string_view name) {
  if (name == "speech") return Domain::kSpeech;
  if (name == "sound") return Domain::kSound;
  if (name == "music") return Domain::kMusic;
  throw Error(ErrorCode::kParse, "unknown domain '" + std::string(name) + "'");
}

std::vector<ManifestRecord> parse_manifest(std::istream& in) {
  std::vector<ManifestRecord> records;
  std::unordered_set<std::string> ids;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;

    json obj;
    try {
      obj = json::parse(text);
    } catch (const json::parse_error& e) {
      fail_line(line, std::string("malformed JSON: ") + e.what());
    }
    if (!obj.is_object()) fail_line(line, "expected a JSON object");

    ManifestRecord r;
    r.id = string_field(obj, "id", line);
    if (r.id.empty()) fail_line(line, "empty id");
    const auto group = string_field(obj, "group", line);
    const auto domain = string_field(obj, "domain", line);
    try {
      r.group = parse_group(group);
      r.domain = parse_domain(domain);
    } catch (const Error& e) {
      fail_line(line, e.what());
    }
    r.language = string_field(obj, "language", line);
    if (!valid_language_tag(r.language)) {
      fail_line(line, "invalid BCP-47 language tag '" + r.language + "'");
    }
    r.caption = string_field(obj, "caption", line);

    const auto& ref = field(obj, "feature_ref", line);
    if (!ref.is_object()) fail_line(line, "feature_ref must be an object");
    r.feature_ref.path = string_field(ref, "path", line);
    const auto& row = field(ref, "row", line);
    if (!row.is_number_unsigned() && !(row.is_number_integer() && row.get<long long>() >= 0)) {
      fail_line(line, "feature_ref.row must be a non-negative integer");
    }
    r.feature_ref.row = row.get<std::uint64_t>();

    const bool speech_group = r.group != Group::kSoundMusic;
    if ((r.domain == Domain::kSpeech) != speech_group) {
      fail_line(line, "domain '" + to_string(r.domain) + "' is inconsistent with group '" +
                          to_string(r.group) + "'");
    }
    if (!ids.insert(r.id).second) fail_line(line, "duplicate id '" + r.id + "'");
    records.push_back(std::move(r));
  }
  return records;
}

std::vector<ManifestRecord> load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open manifest: " + path.string());
  auto records = parse_manifest(in);
  const auto base = path.parent_path();
  for (auto& r : records) {
    std::filesystem::path p(r.feature_ref.path);
    if (p.is_relative()) r.feature_ref.path = (base / p).string();
  }
  return records;
}

std::string serialize_record(const ManifestRecord& r) {
  json obj = json::object();
  obj["id"] = r.id;
  obj["group"] = to_string(r.group);
  obj["domain"] = to_string(r.domain);
  obj["language"] = r.language;
  obj["caption"] = r.caption;
  obj["feature_ref"] = {{"path", r.feature_ref.path}, {"row", r.feature_ref.row}};
  return obj.dump();
}

std::string serialize_manifest(const std::vector<ManifestRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    out += serialize_record(r);
    out += '\n';
  }
  return out;
}

std::uint64_t manifest_hash(const std::vector<ManifestRecord>& records) {
  return fnv1a64(serialize_manifest(records));
}

std::string_view source_id(std::string_view record_id) {
  return record_id.substr(0, record_id.find('#'));
}

Matrix feature_row(const Tensor& tensor, std::uint64_t row, const std::string& source) {
  const auto& dims = tensor.dims;
  if (dims.size() != 2 && dims.size() != 3) {
    throw Error(ErrorCode::kShape, source + ": feature tensors must be [N, F] or [N, T, F]");
  }
  if (tensor.dtype() != DType::kFloat32) {
    throw Error(ErrorCode::kUnsupported, source + ": feature rows must be float32");
  }
  if (row >= dims[0]) {
    throw Error(ErrorCode::kRange, source + ": row " + std::to_string(row) +
                                       " out of range for " + std::to_string(dims[0]) + " rows");
  }
  const std::size_t frames = dims.size() == 3 ? dims[1] : 1;
  const std::size_t width = dims.back();
  const auto& vals = tensor.as_f32();
  const auto begin = vals.begin() + static_cast<std::ptrdiff_t>(row * frames * width);
  return Matrix(frames, width, std::vector<float>(begin, begin + frames * width));
}

Matrix read_feature_row(const FeatureRef& ref) {
  return feature_row(read_tensor_file(ref.path), ref.row, ref.path);
}

Matrix FeatureStore::row(const FeatureRef& ref) {
  std::lock_guard lock(mu_);
  auto it = files_.find(ref.path);
  if (it == files_.end()) it = files_.emplace(ref.path, read_tensor_file(ref.path)).first;
  return feature_row(it->second, ref.row, ref.path);
}

std::string to_string(SamplingStrategy s) {
  return s == SamplingStrategy::kPerExampleUniform ? "uniform" : "stratified";
}

SamplingStrategy parse_strategy(std::string_view name) {
  if (name == "uniform") return SamplingStrategy::kPerExampleUniform;
  if (name == "stratified") return SamplingStrategy::kPerBatchStratified;
  throw Error(ErrorCode::kConfig, "unknown sampling strategy: " + std::string(name));
}

GroupIndex::GroupIndex(const std::vector<ManifestRecord>& records)
    : record_count_(records.size()) {
  for (std::size_t i = 0; i < records.size(); ++i) {
    members_[static_cast<std::size_t>(records[i].group)].push_back(i);
  }
}

void GroupIndex::require_all_groups() const {
  for (std::size_t g = 0; g < kGroupCount; ++g) {
    if (members_[g].empty()) {
      throw Error(ErrorCode::kConfig, std::string("sampling group ") + kGroupNames[g] +
                                          " has no records");
    }
  }
}

SamplerState SamplerState::create(std::uint64_t seed, SamplingStrategy strategy) {
  SamplerState s;
  s.seed = seed;
  s.strategy = strategy;
  s.rng.seed(seed);
  return s;
}

namespace {

std::size_t pick(std::mt19937_64& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

}  // namespace

BatchDraw sample_batch(const GroupIndex& index, SamplerState state, std::size_t batch_size) {
  index.require_all_groups();
  if (batch_size < kMinBatch) {
    throw Error(ErrorCode::kConfig, "batch size must be at least " + std::to_string(kMinBatch));
  }
  Batch batch;
  batch.records.reserve(batch_size);
  batch.groups.reserve(batch_size);
  auto draw_from = [&](std::size_t g) {
    const auto& members = index.members(static_cast<Group>(g));
    batch.records.push_back(members[pick(state.rng, members.size())]);
    batch.groups.push_back(static_cast<Group>(g));
    ++state.draws;
  };

  if (state.strategy == SamplingStrategy::kPerExampleUniform) {
    for (std::size_t slot = 0; slot < batch_size; ++slot) draw_from(pick(state.rng, kGroupCount));
  } else {
    std::array<std::size_t, kGroupCount> counts;
    counts.fill(batch_size / kGroupCount);
    const std::size_t remainder = batch_size % kGroupCount;
    for (std::size_t r = 0; r < remainder; ++r) {
      ++counts[(state.remainder_cursor + r) % kGroupCount];
    }
    state.remainder_cursor = (state.remainder_cursor + remainder) % kGroupCount;
    // Interleave groups so each prefix of the batch stays balanced.
    while (batch.records.size() < batch_size) {
      for (std::size_t g = 0; g < kGroupCount; ++g) {
        if (counts[g] == 0) continue;
        --counts[g];
        draw_from(g);
      }
    }
  }
  return {std::move(batch), std::move(state)};
}

EpochIterator::EpochIterator(const GroupIndex& index, SamplerState state, std::size_t batch_size,
                             std::size_t steps)
    : index_(&index), state_(std::move(state)), batch_size_(batch_size), steps_(steps) {
  if (steps == 0) throw Error(ErrorCode::kConfig, "steps per epoch must be at least 1");
}

Batch EpochIterator::next() {
  if (done()) throw Error(ErrorCode::kRange, "epoch iterator exhausted");
  auto draw = sample_batch(*index_, std::move(state_), batch_size_);
  state_ = std::move(draw.next);
  ++produced_;
  return std::move(draw.batch);
}

}  // namespace glap
