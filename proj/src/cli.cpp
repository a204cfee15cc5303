// Copyright 2026 The GLAP Authors
// SPDX-License-Identifier: Apache-2.0

#include "glap/cli.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "glap/data.hpp"
#include "glap/eval.hpp"
#include "glap/loss.hpp"
#include "glap/model.hpp"
#include "glap/train.hpp"
#include "json.hpp"

namespace glap {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

[[noreturn]] void config_error(const std::string& what) { throw Error(ErrorCode::kConfig, what); }

std::string flag_name(const std::string& key) {
  std::string flag = "--" + key;
  std::replace(flag.begin(), flag.end(), '_', '-');
  return flag;
}

template <typename T>
bool parse_whole(const std::string& text, T& value) {
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  return ec == std::errc() && ptr == end && !text.empty();
}

/// Converts a flag's text to the JSON type of its default.
json convert_flag(const std::string& key, const std::string& text, const json& like) {
  auto bad = [&]() -> json { config_error(flag_name(key) + ": invalid value '" + text + "'"); };
  if (like.is_boolean()) {
    if (text.empty() || text == "true" || text == "1") return true;
    if (text == "false" || text == "0") return false;
    return bad();
  }
  if (like.is_number_unsigned() || like.is_null()) {
    std::uint64_t v = 0;
    return parse_whole(text, v) ? json(v) : bad();
  }
  if (like.is_number_integer()) {
    std::int64_t v = 0;
    return parse_whole(text, v) ? json(v) : bad();
  }
  if (like.is_number_float()) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(text, &used);
    } catch (const std::exception&) {
      return bad();
    }
    return used == text.size() ? json(v) : bad();
  }
  return text;
}

/// One subcommand's options: every key in `defaults` becomes a flag, and the
/// resolved values layer defaults < --config file < explicit flags.
class Command {
 public:
  Command(CLI::App& app, std::string name, std::string help, json defaults)
      : name_(std::move(name)), defaults_(std::move(defaults)) {
    sub_ = app.add_subcommand(name_, std::move(help));
    sub_->add_option("--config", config_path_, "replay a run.json");
    sub_->add_option("--out", out_, "output directory")->capture_default_str();
    for (const auto& [key, value] : defaults_.items()) {
      auto* opt = sub_->add_option(flag_name(key), given_[key]);
      // A bare boolean flag means true; a default_str would be taken as its value.
      if (value.is_boolean()) {
        opt->expected(0, 1);
      } else if (!value.is_null() && !(value.is_string() && value.get<std::string>().empty())) {
        opt->default_str(value.is_string() ? value.get<std::string>() : value.dump());
      }
    }
  }

  CLI::App* app() const { return sub_; }
  const std::string& name() const { return name_; }
  fs::path out() const { return out_; }

  json resolve() const {
    json resolved = defaults_;
    if (!config_path_.empty()) {
      std::ifstream in(config_path_);
      if (!in) config_error("cannot open config: " + config_path_);
      json file;
      try {
        file = json::parse(in);
      } catch (const json::exception& e) {
        config_error("config " + config_path_ + ": " + e.what());
      }
      if (!file.is_object()) config_error("config " + config_path_ + " is not a JSON object");
      if (file.contains("subcommand")) {
        if (file["subcommand"] != name_) {
          config_error("config " + config_path_ + " is for '" + file["subcommand"].dump() + "'");
        }
        file.erase("subcommand");
      }
      for (const auto& [key, value] : file.items()) {
        if (!defaults_.contains(key)) config_error("config " + config_path_ + ": unknown key '" + key + "'");
        resolved[key] = value;
      }
    }
    for (const auto& [key, text] : given_) {
      if (sub_->count(flag_name(key)) > 0) resolved[key] = convert_flag(key, text, defaults_[key]);
    }
    return resolved;
  }

  bool given(const std::string& key) const { return sub_->count(flag_name(key)) > 0; }

 private:
  std::string name_;
  json defaults_;
  CLI::App* sub_ = nullptr;
  std::string config_path_;
  std::string out_ = "glap-out";
  std::map<std::string, std::string> given_;
};

std::string require_string(const json& resolved, const std::string& key) {
  const auto value = resolved.at(key).get<std::string>();
  if (value.empty()) config_error(flag_name(key) + " is required");
  return value;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  out << j.dump(2) << '\n';
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
}

void write_run(const fs::path& out, const std::string& name, json resolved) {
  fs::create_directories(out);
  resolved["subcommand"] = name;
  write_json(out / "run.json", resolved);
}

// ---------------------------------------------------------------------------
// train

int cmd_train(const Command& cmd, std::optional<std::uint64_t> steps, std::ostream& out) {
  json resolved = cmd.resolve();
  if (steps) {
    if (cmd.given("epochs") || cmd.given("steps_per_epoch")) {
      config_error("--steps cannot be combined with --epochs or --steps-per-epoch");
    }
    resolved["epochs"] = 1;
    resolved["steps_per_epoch"] = *steps;
  }
  const std::string manifest_path = require_string(resolved, "manifest");
  json train_keys = resolved;
  train_keys.erase("manifest");
  TrainConfig cfg = train_config_from_json(train_keys);
  if (cfg.schedule == ScheduleKind::kCosine && !cfg.warmup_steps && cfg.total_steps() >= 2) {
    cfg.warmup_steps = cfg.resolved_schedule().warmup_steps;
  }
  cfg.validate();

  json run = to_json(cfg);
  run["manifest"] = manifest_path;
  write_run(cmd.out(), cmd.name(), run);

  const auto manifest = load_manifest(manifest_path);
  const auto result = train(manifest, cfg, {cmd.out()});
  out << "trained " << result.log.size() << " steps";
  if (!result.log.empty()) out << ", last loss " << result.log.back().loss;
  out << "; checkpoint " << (cmd.out() / "final").string() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------
// eval-retrieval

int cmd_eval_retrieval(const Command& cmd, std::ostream& out) {
  const json resolved = cmd.resolve();
  const auto manifest_path = require_string(resolved, "manifest");
  const auto checkpoint_path = require_string(resolved, "checkpoint");
  write_run(cmd.out(), cmd.name(), resolved);

  const auto checkpoint = load_checkpoint(checkpoint_path);
  const auto manifest = load_manifest(manifest_path);
  if (manifest.empty()) config_error("eval manifest is empty: " + manifest_path);

  FeatureStore store;
  const auto [audio, text] = forward_pair_batch(manifest, checkpoint.params, store);
  const auto eval = evaluate_retrieval(audio, text);
  const json report = {{"text_to_audio", to_json(eval.text_to_audio)},
                       {"audio_to_text", to_json(eval.audio_to_text)}};
  write_json(cmd.out() / "retrieval.json", report);
  out << report.dump(2) << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------
// eval-zeroshot

std::vector<std::string> read_labels(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open label file: " + path);
  std::vector<std::string> labels;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) labels.push_back(line);
  }
  return labels;
}

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t");
  return std::string(s.substr(first, last - first + 1));
}

int cmd_eval_zeroshot(const Command& cmd, std::ostream& out) {
  const json resolved = cmd.resolve();
  const Domain domain = parse_domain(require_string(resolved, "domain"));
  const auto labels_path = require_string(resolved, "labels");
  const auto manifest_path = require_string(resolved, "manifest");
  const auto checkpoint_path = require_string(resolved, "checkpoint");
  write_run(cmd.out(), cmd.name(), resolved);

  ZeroShotTask task{read_labels(labels_path), domain, PromptTemplate::for_domain(domain),
                    resolved.at("multi_label").get<bool>()};
  task.validate();
  const auto checkpoint = load_checkpoint(checkpoint_path);
  const auto manifest = load_manifest(manifest_path);
  if (manifest.empty()) config_error("eval manifest is empty: " + manifest_path);

  std::map<std::string, std::size_t> label_index;
  for (std::size_t l = 0; l < task.labels.size(); ++l) label_index[task.labels[l]] = l;
  auto lookup = [&](const ManifestRecord& r, const std::string& label) {
    const auto it = label_index.find(label);
    if (it == label_index.end()) {
      config_error("record '" + r.id + "': caption label '" + label + "' is not in " + labels_path);
    }
    return it->second;
  };

  FeatureStore store;
  Matrix audio;
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    const auto e = embed_audio(store.row(manifest[i].feature_ref), checkpoint.params);
    if (i == 0) audio = Matrix(manifest.size(), e.values.size());
    std::copy(e.values.begin(), e.values.end(), audio.row(i).begin());
  }
  const auto result = zero_shot_classify(
      audio, task, [&](std::string_view prompt) { return embed_text(prompt, checkpoint.params); });

  json report = {{"domain", to_string(domain)},
                 {"multi_label", task.multi_label},
                 {"n_clips", manifest.size()},
                 {"prompts", json::array()}};
  for (const auto& label : task.labels) report["prompts"].push_back(task.prompt.render(label));

  if (task.multi_label) {
    std::vector<std::vector<bool>> truth(manifest.size(),
                                         std::vector<bool>(task.labels.size(), false));
    for (std::size_t i = 0; i < manifest.size(); ++i) {
      std::stringstream parts(manifest[i].caption);
      for (std::string part; std::getline(parts, part, ';');) {
        const auto label = trim(part);
        if (!label.empty()) truth[i][lookup(manifest[i], label)] = true;
      }
    }
    const auto m = multilabel_map(result.scores, truth);
    report["map"] = m.map;
    report["classes_used"] = m.classes_used;
    report["classes_excluded"] = m.classes_excluded;
  } else {
    std::vector<std::size_t> truth;
    for (const auto& r : manifest) truth.push_back(lookup(r, trim(r.caption)));
    report["accuracy"] = accuracy(result.predictions, truth);
  }
  write_json(cmd.out() / "zeroshot.json", report);
  out << report.dump(2) << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------
// gradcheck

int cmd_gradcheck(const Command& cmd, std::ostream& out) {
  const json resolved = cmd.resolve();
  const auto batch = resolved.at("B").get<std::uint64_t>();
  const auto seed = resolved.at("seed").get<std::uint64_t>();
  const auto loss = resolved.at("loss").get<std::string>();
  if (loss != "sigmoid" && loss != "infonce" && loss != "all") {
    config_error("--loss must be sigmoid, infonce or all (got '" + loss + "')");
  }
  write_run(cmd.out(), cmd.name(), resolved);

  json cases = json::array();
  double worst = 0.0;
  auto record = [&](const std::string& name, const std::string& form, double err) {
    cases.push_back({{"loss", name}, {"logit_form", form}, {"max_rel_error", err}});
    worst = std::max(worst, err);
    out << name << (form.empty() ? "" : " (" + form + ")") << ": max relative error " << err << '\n';
  };
  if (loss != "infonce") {
    for (auto form : {LogitForm::kSiglipConsistent, LogitForm::kPaperLiteral}) {
      record("sigmoid", to_string(form), siglip_gradcheck(batch, seed, form));
    }
  }
  if (loss != "sigmoid") record("infonce", "", infonce_gradcheck(batch, seed));

  const bool pass = worst <= kGradcheckTolerance;
  write_json(cmd.out() / "gradcheck.json", {{"B", batch},
                                            {"seed", seed},
                                            {"cases", cases},
                                            {"max_rel_error", worst},
                                            {"tolerance", kGradcheckTolerance},
                                            {"pass", pass}});
  out << "max relative error: " << worst << " (tolerance " << kGradcheckTolerance << ") "
      << (pass ? "PASS" : "FAIL") << '\n';
  return pass ? kExitOk : kExitCheckFailed;
}

// ---------------------------------------------------------------------------
// sample-audit

/// In-memory records with group sizes {1000, 100, 10, 5}; enough for the sampler.
std::vector<ManifestRecord> synthetic_audit_manifest() {
  constexpr std::array<std::size_t, kGroupCount> kSizes = {1000, 100, 10, 5};
  std::vector<ManifestRecord> records;
  for (std::size_t g = 0; g < kGroupCount; ++g) {
    for (std::size_t i = 0; i < kSizes[g]; ++i) {
      ManifestRecord r;
      r.group = static_cast<Group>(g);
      r.id = to_string(r.group) + "-" + std::to_string(i);
      records.push_back(std::move(r));
    }
  }
  return records;
}

inline constexpr double kAuditTarget = 0.25;
inline constexpr double kAuditTolerance = 0.03;

int cmd_sample_audit(const Command& cmd, std::ostream& out) {
  const json resolved = cmd.resolve();
  const auto draws = resolved.at("draws").get<std::uint64_t>();
  const auto batch_size = resolved.at("batch_size").get<std::uint64_t>();
  const auto strategy = parse_strategy(resolved.at("strategy").get<std::string>());
  const auto seed = resolved.at("seed").get<std::uint64_t>();
  const auto manifest_path = resolved.at("manifest").get<std::string>();
  if (draws == 0) config_error("--draws must be positive");
  if (batch_size < kMinBatch) config_error("--batch-size must be at least " + std::to_string(kMinBatch));
  write_run(cmd.out(), cmd.name(), resolved);

  const auto manifest = manifest_path.empty() ? synthetic_audit_manifest() : load_manifest(manifest_path);
  const GroupIndex index(manifest);
  index.require_all_groups();

  const std::size_t batches = (draws + batch_size - 1) / batch_size;
  const std::size_t floor_count = batch_size / kGroupCount;
  std::array<std::uint64_t, kGroupCount> counts{};
  std::uint64_t counted = 0;
  std::size_t bad_batches = 0;
  EpochIterator it(index, SamplerState::create(seed, strategy), batch_size, batches);
  while (!it.done()) {
    const Batch batch = it.next();
    std::array<std::size_t, kGroupCount> in_batch{};
    for (const Group g : batch.groups) {
      ++in_batch[static_cast<std::size_t>(g)];
      if (counted < draws) {
        ++counts[static_cast<std::size_t>(g)];
        ++counted;
      }
    }
    if (strategy == SamplingStrategy::kPerBatchStratified) {
      const bool exact = std::all_of(in_batch.begin(), in_batch.end(), [&](std::size_t c) {
        return c == floor_count || (batch_size % kGroupCount != 0 && c == floor_count + 1);
      });
      if (!exact) ++bad_batches;
    }
  }

  bool pass = bad_batches == 0;
  json report = {{"strategy", to_string(strategy)}, {"draws", draws},
                 {"batch_size", batch_size},        {"batches", batches},
                 {"counts", json::object()},        {"frequencies", json::object()}};
  for (std::size_t g = 0; g < kGroupCount; ++g) {
    const auto name = to_string(static_cast<Group>(g));
    const double freq = double(counts[g]) / double(draws);
    report["counts"][name] = counts[g];
    report["frequencies"][name] = freq;
    if (strategy == SamplingStrategy::kPerExampleUniform &&
        std::abs(freq - kAuditTarget) > kAuditTolerance + 1e-12) {
      pass = false;
    }
    out << name << ": " << counts[g] << " (" << freq << ")\n";
  }
  if (strategy == SamplingStrategy::kPerBatchStratified) {
    report["per_batch_quota"] = floor_count;
    report["batches_off_quota"] = bad_batches;
    out << "batches off the per-group quota of " << floor_count << ": " << bad_batches << '\n';
  }
  report["pass"] = pass;
  write_json(cmd.out() / "audit.json", report);
  out << (pass ? "PASS" : "FAIL") << '\n';
  return pass ? kExitOk : kExitCheckFailed;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"GLAP: contrastive language-audio pretraining toolkit", "glap"};
  app.require_subcommand(1);

  json train_defaults = to_json(TrainConfig{});
  train_defaults["manifest"] = "";
  Command train_cmd(app, "train", "train the dual towers", train_defaults);
  std::optional<std::uint64_t> steps;
  train_cmd.app()->add_option("--steps", steps, "shorthand for --epochs 1 --steps-per-epoch N");

  Command retrieval_cmd(app, "eval-retrieval", "text-to-audio and audio-to-text retrieval",
                        {{"manifest", ""}, {"checkpoint", ""}});
  Command zeroshot_cmd(app, "eval-zeroshot", "zero-shot classification with prompt templates",
                       {{"manifest", ""},
                        {"checkpoint", ""},
                        {"labels", ""},
                        {"domain", ""},
                        {"multi_label", false}});
  Command gradcheck_cmd(app, "gradcheck", "finite-difference check of the loss gradients",
                        {{"B", std::uint64_t{8}}, {"seed", std::uint64_t{0}}, {"loss", "all"}});
  Command audit_cmd(app, "sample-audit", "per-group frequencies of the batch sampler",
                    {{"manifest", ""},
                     {"draws", std::uint64_t{4000}},
                     {"batch_size", std::uint64_t{64}},
                     {"strategy", "uniform"},
                     {"seed", std::uint64_t{0}}});

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }

  try {
    if (*train_cmd.app()) return cmd_train(train_cmd, steps, out);
    if (*retrieval_cmd.app()) return cmd_eval_retrieval(retrieval_cmd, out);
    if (*zeroshot_cmd.app()) return cmd_eval_zeroshot(zeroshot_cmd, out);
    if (*gradcheck_cmd.app()) return cmd_gradcheck(gradcheck_cmd, out);
    if (*audit_cmd.app()) return cmd_sample_audit(audit_cmd, out);
  } catch (const Error& e) {
    err << "error (" << to_string(e.code()) << "): " << e.what() << '\n';
    return e.code() == ErrorCode::kNumeric ? kExitNumeric : kExitConfig;
  } catch (const json::exception& e) {
    err << "error (config): " << e.what() << '\n';
    return kExitConfig;
  } catch (const fs::filesystem_error& e) {
    err << "error (io): " << e.what() << '\n';
    return kExitConfig;
  }
  return kExitConfig;
}

}  // namespace glap
