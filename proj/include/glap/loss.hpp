// Copyright 2026 The GLAP Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

#include "glap/core.hpp"

namespace glap {

/// How the learnable temperature and bias enter the pairwise logit.
///   kSiglipConsistent: s' = s / tau + beta
///   kPaperLiteral:     s' = (s + beta) / tau
enum class LogitForm { kSiglipConsistent, kPaperLiteral };

std::string to_string(LogitForm form);
LogitForm parse_logit_form(std::string_view name);

/// Temperature and bias of the sigmoid loss. The temperature is stored as
/// log_tau so that any real value keeps tau positive.
struct LossParams {
  double log_tau = 0.0;
  double beta = 0.0;

  double tau() const;

  static LossParams from_tau(double tau, double beta);
  /// tau = 0.07, beta = -10.
  static LossParams initial();
};

struct LossOutput {
  double loss = 0.0;
  MatrixD grad_s;          // dL/ds
  double grad_u = 0.0;     // dL/d(log tau)
  double grad_beta = 0.0;  // dL/d(beta)
};

/// Loss over precomputed logits, with dL/ds'.
struct LogitLoss {
  double loss = 0.0;
  MatrixD grad_logits;
};

double softplus(double x);
/// log(sigmoid(z)), evaluated as -softplus(-z).
double log_sigmoid(double z);
double sigmoid(double z);

MatrixD siglip_logits(const MatrixD& s, const LossParams& p, LogitForm form);

/// -(1/B) sum_ij log sigmoid(s'_ij * psi_ij).
LogitLoss siglip_loss(const MatrixD& logits, const SignMatrix& psi);

/// Full objective from similarities, gradients chain-ruled to s, log tau and beta.
LossOutput siglip_loss(const MatrixD& s, const LossParams& p, LogitForm form);
LossOutput siglip_loss(const SimilarityMatrix& s, const LossParams& p, LogitForm form);

/// Symmetric InfoNCE: mean of row-wise and column-wise softmax cross-entropy
/// of s / tau against the diagonal. grad_u is taken w.r.t. log tau; grad_beta is 0.
LossOutput infonce_loss(const MatrixD& s, double tau);
LossOutput infonce_loss(const SimilarityMatrix& s, double tau);

inline constexpr double kGradcheckStep = 1e-3;
inline constexpr double kGradcheckTolerance = 1e-4;
/// Denominator floor for relative errors of gradients that are numerically zero.
inline constexpr double kGradcheckFloor = 1e-6;

double relative_error(double analytic, double numeric);

/// Central differences of the sigmoid loss at tau = 0.07, beta = -10 on a
/// seeded S in [-1, 1]^{BxB}. Returns the max relative error over
/// grad_s, grad_u and grad_beta. Requires 2 <= B <= 64.
double siglip_gradcheck(std::size_t batch, std::uint64_t seed, LogitForm form);

/// Same check for infonce_loss at tau = 0.07 (grad_s and grad_u).
double infonce_gradcheck(std::size_t batch, std::uint64_t seed);

/// Seeded uniform [-1, 1] square matrix used by both gradchecks.
MatrixD random_similarity(std::size_t batch, std::uint64_t seed);

}  // namespace glap
