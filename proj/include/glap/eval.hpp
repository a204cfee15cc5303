// Copyright 2026 The GLAP Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "glap/core.hpp"
#include "glap/data.hpp"
#include "json.hpp"

namespace glap {

/// relevant[q] holds the gallery columns that count as hits for query row q.
struct RelevanceMap {
  std::vector<std::vector<std::size_t>> relevant;

  /// Every query needs at least one relevant column inside [0, gallery_size).
  void validate(std::size_t query_count, std::size_t gallery_size) const;
};

/// Relevance by shared source id ("clip3#0" matches "clip3#4" and "clip3").
RelevanceMap relevance_by_source(const std::vector<std::string>& query_ids,
                                 const std::vector<std::string>& gallery_ids);

/// Gallery columns by descending score; equal scores keep ascending column order.
std::vector<std::size_t> rank_gallery(std::span<const float> scores);

double recall_at_k(const SimilarityMatrix& s, const RelevanceMap& rel, std::size_t k);

/// Mean over queries of sum_{r<=10} Prec@r * rel(r) / min(|relevant|, 10).
double map_at_10(const SimilarityMatrix& s, const RelevanceMap& rel);

enum class Direction { kTextToAudio, kAudioToText };
std::string to_string(Direction d);

struct RetrievalReport {
  Direction direction = Direction::kTextToAudio;
  double r1 = 0.0;
  double r5 = 0.0;
  double r10 = 0.0;
  double map10 = 0.0;
  std::size_t n_queries = 0;
};

RetrievalReport retrieval_report(const SimilarityMatrix& s, const RelevanceMap& rel,
                                 Direction direction);
nlohmann::json to_json(const RetrievalReport& r);

/// Both retrieval directions over a set of clips with one or more captions.
/// Records sharing a source id form one audio item; every record contributes
/// one caption. Audio rows are taken from the first record of each source.
struct RetrievalEvaluation {
  RetrievalReport text_to_audio;
  RetrievalReport audio_to_text;
};

RetrievalEvaluation evaluate_retrieval(const EmbeddingBatch& audio, const EmbeddingBatch& text);

// ---------------------------------------------------------------------------
// Zero-shot

class PromptTemplate {
 public:
  /// Throws unless `pattern` contains exactly one "{label}".
  explicit PromptTemplate(std::string pattern);

  const std::string& pattern() const noexcept { return pattern_; }
  std::string render(std::string_view label) const;

  /// Built-in prompt per domain: speech "{label}", music "The music in the
  /// style of {label}.", sound "The sound of {label} can be heard."
  static PromptTemplate for_domain(Domain domain);

 private:
  std::string pattern_;
  std::size_t slot_ = 0;
};

inline std::string render_prompt(const PromptTemplate& t, std::string_view label) {
  return t.render(label);
}

struct ZeroShotTask {
  std::vector<std::string> labels;
  Domain domain = Domain::kSound;
  PromptTemplate prompt = PromptTemplate::for_domain(Domain::kSound);
  bool multi_label = false;

  void validate() const;
};

struct ZeroShotResult {
  Matrix scores;                         // N audios x L labels, cosine
  std::vector<std::size_t> predictions;  // argmax per audio (single-label tasks only)
};

using TextEmbedder = std::function<Embedding(std::string_view)>;

/// Embeds every rendered prompt and scores each audio row against it. Ties in
/// the argmax go to the lowest label index.
ZeroShotResult zero_shot_classify(const Matrix& audio, const ZeroShotTask& task,
                                  const TextEmbedder& embed_text);

double accuracy(const std::vector<std::size_t>& predictions,
                const std::vector<std::size_t>& truth);

struct MultilabelMap {
  double map = 0.0;
  std::size_t classes_used = 0;
  std::size_t classes_excluded = 0;  // no positives
};

/// Macro mAP: per class, rank every clip by score (ties by ascending clip
/// index) and average precision over the full ranking.
MultilabelMap multilabel_map(const Matrix& scores, const std::vector<std::vector<bool>>& truth);

}  // namespace glap
