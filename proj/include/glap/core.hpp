// Copyright 2026 The GLAP Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "glap/error.hpp"

namespace glap {

/// Dense row-major matrix. Value type; copies are deep.
template <typename T>
class BasicMatrix {
 public:
  using value_type = T;

  BasicMatrix() = default;
  BasicMatrix(std::size_t rows, std::size_t cols, T fill = T{0})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  BasicMatrix(std::size_t rows, std::size_t cols, std::vector<T> data);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  const std::vector<T>& values() const noexcept { return data_; }

  BasicMatrix transposed() const;

  template <typename U>
  BasicMatrix<U> cast() const {
    return BasicMatrix<U>(rows_, cols_, std::vector<U>(data_.begin(), data_.end()));
  }

  static BasicMatrix identity(std::size_t n);

  friend bool operator==(const BasicMatrix&, const BasicMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

using Matrix = BasicMatrix<float>;
using MatrixD = BasicMatrix<double>;

extern template class BasicMatrix<float>;
extern template class BasicMatrix<double>;

struct Embedding {
  std::vector<float> values;
  bool normalized = false;
};

/// N rows of equal width with unique ids.
class EmbeddingBatch {
 public:
  EmbeddingBatch() = default;
  EmbeddingBatch(Matrix rows, std::vector<std::string> ids);

  const Matrix& rows() const noexcept { return rows_; }
  const std::vector<std::string>& ids() const noexcept { return ids_; }
  std::size_t size() const noexcept { return rows_.rows(); }
  std::size_t dim() const noexcept { return rows_.cols(); }

 private:
  Matrix rows_;
  std::vector<std::string> ids_;
};

/// Cosine scores; entry (i, j) pairs query row i with gallery row j.
struct SimilarityMatrix {
  Matrix scores;
};

/// psi: +1 on matched pairs (the diagonal), -1 elsewhere.
class SignMatrix {
 public:
  explicit SignMatrix(std::size_t batch);

  std::size_t size() const noexcept { return batch_; }
  double operator()(std::size_t i, std::size_t j) const noexcept { return i == j ? 1.0 : -1.0; }

 private:
  std::size_t batch_;
};

inline constexpr double kNormFloor = 1e-12;
inline constexpr double kSimilaritySlack = 1e-5;

Embedding l2_normalize(std::span<const float> v);
inline Embedding l2_normalize(const Embedding& v) { return l2_normalize(v.values); }

/// Normalizes each row in place with the same zero-vector guard.
void l2_normalize_rows(Matrix& m);

SimilarityMatrix cosine_similarity_matrix(const Matrix& a, const Matrix& t);
SimilarityMatrix cosine_similarity_matrix(const EmbeddingBatch& a, const EmbeddingBatch& t);

SignMatrix sign_matrix(std::size_t batch);

/// Dot product accumulated in double.
double dot(std::span<const float> a, std::span<const float> b);

/// Worker count from GLAP_THREADS (default 1).
std::size_t thread_count();

/// Runs fn(i) for i in [0, n). Each index is visited exactly once; callers
/// must write disjoint outputs so results do not depend on the thread count,
/// and fn must not throw.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace glap

namespace glap {

/// 64-bit FNV-1a. Stable across platforms; used for text hashing and config digests.
std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes);
std::uint64_t fnv1a64(std::string_view text);

}  // namespace glap
