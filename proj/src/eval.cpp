// Copyright 2026 The GLAP Authors
// SPDX-License-Identifier: Apache-2.0

#include "glap/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>
#include <numeric>
#include <unordered_set>

namespace glap {

void RelevanceMap::validate(std::size_t query_count, std::size_t gallery_size) const {
  if (relevant.size() != query_count) {
    throw Error(ErrorCode::kConfig, "relevance map has " + std::to_string(relevant.size()) +
                                        " queries, similarity matrix has " +
                                        std::to_string(query_count));
  }
  for (std::size_t q = 0; q < relevant.size(); ++q) {
    if (relevant[q].empty()) {
      throw Error(ErrorCode::kConfig, "query " + std::to_string(q) + " has no relevant items");
    }
    for (auto g : relevant[q]) {
      if (g >= gallery_size) {
        throw Error(ErrorCode::kConfig, "query " + std::to_string(q) +
                                            " references gallery item " + std::to_string(g) +
                                            " outside the gallery");
      }
    }
  }
}

RelevanceMap relevance_by_source(const std::vector<std::string>& query_ids,
                                 const std::vector<std::string>& gallery_ids) {
  std::map<std::string_view, std::vector<std::size_t>> by_source;
  for (std::size_t g = 0; g < gallery_ids.size(); ++g) {
    by_source[source_id(gallery_ids[g])].push_back(g);
  }
  RelevanceMap rel;
  rel.relevant.reserve(query_ids.size());
  for (const auto& q : query_ids) {
    auto it = by_source.find(source_id(q));
    rel.relevant.push_back(it == by_source.end() ? std::vector<std::size_t>{} : it->second);
  }
  return rel;
}

std::vector<std::size_t> rank_gallery(std::span<const float> scores) {
  for (std::size_t j = 0; j < scores.size(); ++j) {
    if (!std::isfinite(scores[j])) {
      throw NumericError("non-finite retrieval score at column " + std::to_string(j));
    }
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

namespace {

template <typename PerQuery>
double mean_over_queries(const SimilarityMatrix& s, const RelevanceMap& rel, PerQuery f) {
  const auto& m = s.scores;
  rel.validate(m.rows(), m.cols());
  if (m.rows() == 0) throw Error(ErrorCode::kConfig, "no queries to evaluate");
  double total = 0.0;
  for (std::size_t q = 0; q < m.rows(); ++q) {
    const auto order = rank_gallery(m.row(q));
    const std::unordered_set<std::size_t> hits(rel.relevant[q].begin(), rel.relevant[q].end());
    total += f(order, hits);
  }
  return total / double(m.rows());
}

}  // namespace

double recall_at_k(const SimilarityMatrix& s, const RelevanceMap& rel, std::size_t k) {
  if (k == 0) throw Error(ErrorCode::kConfig, "recall@k needs k >= 1");
  return mean_over_queries(s, rel, [k](const auto& order, const auto& hits) {
    const std::size_t depth = std::min(k, order.size());
    for (std::size_t r = 0; r < depth; ++r) {
      if (hits.count(order[r])) return 1.0;
    }
    return 0.0;
  });
}

namespace {
constexpr std::size_t kMapDepth = 10;
}

double map_at_10(const SimilarityMatrix& s, const RelevanceMap& rel) {
  return mean_over_queries(s, rel, [](const auto& order, const auto& hits) {
    const std::size_t depth = std::min(kMapDepth, order.size());
    double found = 0.0, sum = 0.0;
    for (std::size_t r = 0; r < depth; ++r) {
      if (hits.count(order[r])) {
        found += 1.0;
        sum += found / double(r + 1);
      }
    }
    return sum / double(std::min(hits.size(), kMapDepth));
  });
}

std::string to_string(Direction d) {
  return d == Direction::kTextToAudio ? "text_to_audio" : "audio_to_text";
}

RetrievalReport retrieval_report(const SimilarityMatrix& s, const RelevanceMap& rel,
                                 Direction direction) {
  RetrievalReport r;
  r.direction = direction;
  r.r1 = recall_at_k(s, rel, 1);
  r.r5 = recall_at_k(s, rel, 5);
  r.r10 = recall_at_k(s, rel, 10);
  r.map10 = map_at_10(s, rel);
  r.n_queries = s.scores.rows();
  return r;
}

nlohmann::json to_json(const RetrievalReport& r) {
  return {{"direction", to_string(r.direction)},
          {"r1", r.r1},
          {"r5", r.r5},
          {"r10", r.r10},
          {"map10", r.map10},
          {"n_queries", r.n_queries}};
}

RetrievalEvaluation evaluate_retrieval(const EmbeddingBatch& audio, const EmbeddingBatch& text) {
  if (audio.size() != text.size() || audio.size() == 0) {
    throw Error(ErrorCode::kConfig, "retrieval needs one audio row per caption and at least one pair");
  }
  // One gallery audio per source id.
  std::vector<std::string> audio_ids;
  std::vector<std::size_t> audio_rows;
  std::unordered_set<std::string_view> seen;
  for (std::size_t i = 0; i < audio.size(); ++i) {
    if (seen.insert(source_id(audio.ids()[i])).second) {
      audio_ids.emplace_back(source_id(audio.ids()[i]));
      audio_rows.push_back(i);
    }
  }
  Matrix gallery(audio_rows.size(), audio.dim());
  for (std::size_t g = 0; g < audio_rows.size(); ++g) {
    std::copy(audio.rows().row(audio_rows[g]).begin(), audio.rows().row(audio_rows[g]).end(),
              gallery.row(g).begin());
  }
  const auto t2a = cosine_similarity_matrix(text.rows(), gallery);
  const auto a2t = cosine_similarity_matrix(gallery, text.rows());
  return {retrieval_report(t2a, relevance_by_source(text.ids(), audio_ids), Direction::kTextToAudio),
          retrieval_report(a2t, relevance_by_source(audio_ids, text.ids()), Direction::kAudioToText)};
}

// ---------------------------------------------------------------------------
// Zero-shot

namespace {
constexpr std::string_view kSlot = "{label}";
}

PromptTemplate::PromptTemplate(std::string pattern) : pattern_(std::move(pattern)) {
  slot_ = pattern_.find(kSlot);
  if (slot_ == std::string::npos || pattern_.find(kSlot, slot_ + 1) != std::string::npos) {
    throw Error(ErrorCode::kConfig, "prompt template needs exactly one {label} slot: " + pattern_);
  }
}

std::string PromptTemplate::render(std::string_view label) const {
  std::string out = pattern_;
  out.replace(slot_, kSlot.size(), label);
  return out;
}

PromptTemplate PromptTemplate::for_domain(Domain domain) {
  switch (domain) {
    case Domain::kSpeech: return PromptTemplate("{label}");
    case Domain::kMusic: return PromptTemplate("The music in the style of {label}.");
    case Domain::kSound: return PromptTemplate("The sound of {label} can be heard.");
  }
  throw Error(ErrorCode::kConfig, "unknown domain");
}

void ZeroShotTask::validate() const {
  if (labels.empty()) throw Error(ErrorCode::kConfig, "zero-shot task has no labels");
  std::unordered_set<std::string> unique;
  for (const auto& l : labels) {
    if (!unique.insert(l).second) throw Error(ErrorCode::kConfig, "duplicate label: " + l);
  }
}

ZeroShotResult zero_shot_classify(const Matrix& audio, const ZeroShotTask& task,
                                  const TextEmbedder& embed_text) {
  task.validate();
  Matrix label_rows;
  for (std::size_t l = 0; l < task.labels.size(); ++l) {
    const Embedding e = embed_text(task.prompt.render(task.labels[l]));
    if (l == 0) label_rows = Matrix(task.labels.size(), e.values.size());
    if (e.values.size() != label_rows.cols()) {
      throw Error(ErrorCode::kShape, "label embeddings differ in width");
    }
    std::copy(e.values.begin(), e.values.end(), label_rows.row(l).begin());
  }
  ZeroShotResult out{cosine_similarity_matrix(audio, label_rows).scores, {}};
  if (!task.multi_label) {
    out.predictions.reserve(audio.rows());
    for (std::size_t i = 0; i < audio.rows(); ++i) {
      out.predictions.push_back(rank_gallery(out.scores.row(i)).front());
    }
  }
  return out;
}

double accuracy(const std::vector<std::size_t>& predictions,
                const std::vector<std::size_t>& truth) {
  if (predictions.size() != truth.size() || truth.empty()) {
    throw Error(ErrorCode::kConfig, "accuracy needs one truth label per prediction");
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) correct += predictions[i] == truth[i];
  return double(correct) / double(truth.size());
}

MultilabelMap multilabel_map(const Matrix& scores, const std::vector<std::vector<bool>>& truth) {
  if (truth.size() != scores.rows()) {
    throw Error(ErrorCode::kShape, "truth rows differ from score rows");
  }
  for (const auto& row : truth) {
    if (row.size() != scores.cols()) throw Error(ErrorCode::kShape, "truth width differs from labels");
  }
  MultilabelMap out;
  double total = 0.0;
  std::vector<float> column(scores.rows());
  for (std::size_t c = 0; c < scores.cols(); ++c) {
    for (std::size_t i = 0; i < scores.rows(); ++i) column[i] = scores(i, c);
    std::size_t positives = 0;
    for (std::size_t i = 0; i < scores.rows(); ++i) positives += truth[i][c];
    if (positives == 0) {
      ++out.classes_excluded;
      continue;
    }
    const auto order = rank_gallery(column);
    double found = 0.0, sum = 0.0;
    for (std::size_t r = 0; r < order.size(); ++r) {
      if (truth[order[r]][c]) {
        found += 1.0;
        sum += found / double(r + 1);
      }
    }
    total += sum / double(positives);
    ++out.classes_used;
  }
  if (out.classes_excluded > 0) {
    std::cerr << "warning: " << out.classes_excluded
              << " class(es) without positives excluded from mAP\n";
  }
  if (out.classes_used == 0) throw Error(ErrorCode::kConfig, "no class has a positive example");
  out.map = total / double(out.classes_used);
  return out;
}

}  // namespace glap
