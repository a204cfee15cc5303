// Copyright 2026 The GLAP Authors
// SPDX-License-Identifier: Apache-2.0

#include "glap/core.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <sstream>
#include <thread>
#include <unordered_set>

namespace glap {

template <typename T>
BasicMatrix<T>::BasicMatrix(std::size_t rows, std::size_t cols, std::vector<T> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    std::ostringstream msg;
    msg << "matrix data has " << data_.size() << " values, expected " << rows << "x" << cols;
    throw Error(ErrorCode::kShape, msg.str());
  }
}

template <typename T>
BasicMatrix<T> BasicMatrix<T>::transposed() const {
  BasicMatrix out(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) out(c, r) = (*this)(r, c);
  return out;
}

template <typename T>
BasicMatrix<T> BasicMatrix<T>::identity(std::size_t n) {
  BasicMatrix out(n, n);
  for (std::size_t i = 0; i < n; ++i) out(i, i) = T{1};
  return out;
}

template class BasicMatrix<float>;
template class BasicMatrix<double>;

EmbeddingBatch::EmbeddingBatch(Matrix rows, std::vector<std::string> ids)
    : rows_(std::move(rows)), ids_(std::move(ids)) {
  if (ids_.size() != rows_.rows()) {
    throw Error(ErrorCode::kShape, "embedding batch needs one id per row");
  }
  std::unordered_set<std::string> seen;
  for (const auto& id : ids_) {
    if (!seen.insert(id).second) {
      throw Error(ErrorCode::kInvalidInput, "duplicate id in embedding batch: " + id);
    }
  }
}

SignMatrix::SignMatrix(std::size_t batch) : batch_(batch) {
  if (batch == 0) throw Error(ErrorCode::kInvalidInput, "sign matrix needs B >= 1");
}

double dot(std::span<const float> a, std::span<const float> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += double(a[i]) * double(b[i]);
  return acc;
}

namespace {

void require_finite(std::span<const float> v) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) {
      throw Error(ErrorCode::kInvalidInput,
                  "non-finite embedding value at index " + std::to_string(i));
    }
  }
}

std::vector<double> row_norms(const Matrix& m) {
  std::vector<double> norms(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) norms[r] = std::sqrt(dot(m.row(r), m.row(r)));
  return norms;
}

}  // namespace

Embedding l2_normalize(std::span<const float> v) {
  require_finite(v);
  const double norm = std::sqrt(dot(v, v));
  const double scale = 1.0 / std::max(norm, kNormFloor);
  Embedding out;
  out.values.resize(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out.values[i] = float(double(v[i]) * scale);
  out.normalized = norm > kNormFloor;
  return out;
}

void l2_normalize_rows(Matrix& m) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    const double scale = 1.0 / std::max(std::sqrt(dot(row, row)), kNormFloor);
    for (auto& x : row) x = float(double(x) * scale);
  }
}

SimilarityMatrix cosine_similarity_matrix(const Matrix& a, const Matrix& t) {
  if (a.cols() != t.cols()) {
    std::ostringstream msg;
    msg << "cosine similarity needs equal widths, got " << a.cols() << " and " << t.cols();
    throw Error(ErrorCode::kShape, msg.str());
  }
  const auto na = row_norms(a);
  const auto nt = row_norms(t);
  SimilarityMatrix s{Matrix(a.rows(), t.rows())};
  parallel_for(a.rows(), [&](std::size_t i) {
    for (std::size_t j = 0; j < t.rows(); ++j) {
      const double denom = std::max(na[i], kNormFloor) * std::max(nt[j], kNormFloor);
      s.scores(i, j) = float(dot(a.row(i), t.row(j)) / denom);
    }
  });
  return s;
}

SimilarityMatrix cosine_similarity_matrix(const EmbeddingBatch& a, const EmbeddingBatch& t) {
  return cosine_similarity_matrix(a.rows(), t.rows());
}

SignMatrix sign_matrix(std::size_t batch) { return SignMatrix(batch); }

std::size_t thread_count() {
  const char* env = std::getenv("GLAP_THREADS");
  if (env == nullptr || *env == '\0') return 1;
  char* end = nullptr;
  const long n = std::strtol(env, &end, 10);
  if (end == env || n < 1) return 1;
  return static_cast<std::size_t>(n);
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min(thread_count(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) fn(i);
    });
  }
}

}  // namespace glap

namespace glap {

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (auto b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fnv1a64(std::string_view text) {
  return fnv1a64(std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace glap
