// Copyright 2026 The GLAP Authors
// SPDX-License-Identifier: Apache-2.0

// Small dense kernels with double accumulation.

#pragma once

#include <algorithm>
#include <vector>

#include "glap/core.hpp"

namespace glap::linalg {

/// A (n x k) * B (k x m). Zero entries of A are skipped, which keeps sparse
/// hashed text inputs cheap.
template <typename T>
BasicMatrix<T> matmul(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  if (a.cols() != b.rows()) throw Error(ErrorCode::kShape, "matmul: inner dimensions differ");
  BasicMatrix<T> out(a.rows(), b.cols());
  std::vector<double> acc(b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double x = a(i, k);
      if (x == 0.0) continue;
      const auto brow = b.row(k);
      for (std::size_t j = 0; j < brow.size(); ++j) acc[j] += x * double(brow[j]);
    }
    for (std::size_t j = 0; j < acc.size(); ++j) out(i, j) = T(acc[j]);
  }
  return out;
}

/// A^T (k x n)^T * B (k x m) -> n x m.
template <typename T>
BasicMatrix<T> matmul_tn(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  if (a.rows() != b.rows()) throw Error(ErrorCode::kShape, "matmul_tn: row counts differ");
  BasicMatrix<double> acc(a.cols(), b.cols());
  for (std::size_t k = 0; k < a.rows(); ++k) {
    const auto brow = b.row(k);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double x = a(k, i);
      if (x == 0.0) continue;
      auto out = acc.row(i);
      for (std::size_t j = 0; j < brow.size(); ++j) out[j] += x * double(brow[j]);
    }
  }
  return acc.template cast<T>();
}

/// A (n x k) * B^T (m x k)^T -> n x m.
template <typename T>
BasicMatrix<T> matmul_nt(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  if (a.cols() != b.cols()) throw Error(ErrorCode::kShape, "matmul_nt: column counts differ");
  BasicMatrix<T> out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.rows(); ++j) {
      double acc = 0.0;
      const auto ar = a.row(i);
      const auto br = b.row(j);
      for (std::size_t k = 0; k < ar.size(); ++k) acc += double(ar[k]) * double(br[k]);
      out(i, j) = T(acc);
    }
  }
  return out;
}

}  // namespace glap::linalg
