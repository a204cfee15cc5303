// Copyright 2026 The GLAP Authors
// SPDX-License-Identifier: Apache-2.0

#include "glap/loss.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

namespace glap {

std::string to_string(LogitForm form) {
  return form == LogitForm::kSiglipConsistent ? "siglip_consistent" : "paper_literal";
}

LogitForm parse_logit_form(std::string_view name) {
  if (name == "siglip_consistent") return LogitForm::kSiglipConsistent;
  if (name == "paper_literal") return LogitForm::kPaperLiteral;
  throw Error(ErrorCode::kConfig, "unknown logit form: " + std::string(name));
}

double LossParams::tau() const { return std::exp(log_tau); }

LossParams LossParams::from_tau(double tau, double beta) {
  if (!(tau > 0.0) || !std::isfinite(tau)) {
    throw Error(ErrorCode::kInvalidInput, "temperature must be positive and finite");
  }
  return {std::log(tau), beta};
}

LossParams LossParams::initial() { return from_tau(0.07, -10.0); }

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double log_sigmoid(double z) { return -softplus(-z); }

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

namespace {

void require_square(const MatrixD& m, const char* what) {
  if (m.rows() != m.cols() || m.rows() == 0) {
    std::ostringstream msg;
    msg << what << " must be a non-empty square matrix, got " << m.rows() << "x" << m.cols();
    throw Error(ErrorCode::kShape, msg.str());
  }
}

void require_finite(const MatrixD& m, const char* what) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
      if (!std::isfinite(m(i, j))) {
        std::ostringstream msg;
        msg << "non-finite " << what << " at (" << i << ", " << j << ")";
        throw NumericError(msg.str(), std::make_pair(i, j));
      }
    }
  }
}

}  // namespace

MatrixD siglip_logits(const MatrixD& s, const LossParams& p, LogitForm form) {
  require_square(s, "similarity matrix");
  const double tau = p.tau();
  MatrixD out(s.rows(), s.cols());
  for (std::size_t i = 0; i < s.rows(); ++i) {
    for (std::size_t j = 0; j < s.cols(); ++j) {
      out(i, j) = form == LogitForm::kSiglipConsistent ? s(i, j) / tau + p.beta
                                                       : (s(i, j) + p.beta) / tau;
    }
  }
  return out;
}

LogitLoss siglip_loss(const MatrixD& logits, const SignMatrix& psi) {
  require_square(logits, "logit matrix");
  if (logits.rows() != psi.size()) {
    throw Error(ErrorCode::kShape, "logit matrix and sign matrix sizes differ");
  }
  require_finite(logits, "logit");
  const std::size_t b = logits.rows();
  const double inv_b = 1.0 / double(b);
  LogitLoss out{0.0, MatrixD(b, b)};
  // Row-major summation order keeps the reduction deterministic.
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < b; ++j) {
      const double sign = psi(i, j);
      const double z = logits(i, j) * sign;
      out.loss += softplus(-z);
      out.grad_logits(i, j) = -sign * inv_b * sigmoid(-z);
    }
  }
  out.loss *= inv_b;
  return out;
}

LossOutput siglip_loss(const MatrixD& s, const LossParams& p, LogitForm form) {
  require_finite(s, "similarity");
  const MatrixD logits = siglip_logits(s, p, form);
  LogitLoss raw = siglip_loss(logits, sign_matrix(s.rows()));

  const double inv_tau = 1.0 / p.tau();
  LossOutput out{raw.loss, MatrixD(s.rows(), s.cols()), 0.0, 0.0};
  for (std::size_t i = 0; i < s.rows(); ++i) {
    for (std::size_t j = 0; j < s.cols(); ++j) {
      const double g = raw.grad_logits(i, j);
      out.grad_s(i, j) = g * inv_tau;
      if (form == LogitForm::kSiglipConsistent) {
        out.grad_u += g * (-s(i, j) * inv_tau);
        out.grad_beta += g;
      } else {
        out.grad_u += g * (-logits(i, j));
        out.grad_beta += g * inv_tau;
      }
    }
  }
  return out;
}

LossOutput siglip_loss(const SimilarityMatrix& s, const LossParams& p, LogitForm form) {
  return siglip_loss(s.scores.cast<double>(), p, form);
}

LossOutput infonce_loss(const MatrixD& s, double tau) {
  require_square(s, "similarity matrix");
  require_finite(s, "similarity");
  if (!(tau > 0.0) || !std::isfinite(tau)) {
    throw Error(ErrorCode::kInvalidInput, "temperature must be positive and finite");
  }
  const std::size_t b = s.rows();
  MatrixD z(b, b);
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < b; ++j) z(i, j) = s(i, j) / tau;

  // grad_z accumulates softmax(row) + softmax(col) - 2I, scaled at the end.
  MatrixD grad_z(b, b);
  double row_loss = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    double mx = z(i, 0);
    for (std::size_t j = 1; j < b; ++j) mx = std::max(mx, z(i, j));
    double sum = 0.0;
    for (std::size_t j = 0; j < b; ++j) sum += std::exp(z(i, j) - mx);
    const double lse = mx + std::log(sum);
    row_loss += lse - z(i, i);
    for (std::size_t j = 0; j < b; ++j) grad_z(i, j) += std::exp(z(i, j) - lse);
    grad_z(i, i) -= 1.0;
  }
  double col_loss = 0.0;
  for (std::size_t j = 0; j < b; ++j) {
    double mx = z(0, j);
    for (std::size_t i = 1; i < b; ++i) mx = std::max(mx, z(i, j));
    double sum = 0.0;
    for (std::size_t i = 0; i < b; ++i) sum += std::exp(z(i, j) - mx);
    const double lse = mx + std::log(sum);
    col_loss += lse - z(j, j);
    for (std::size_t i = 0; i < b; ++i) grad_z(i, j) += std::exp(z(i, j) - lse);
    grad_z(j, j) -= 1.0;
  }

  const double scale = 0.5 / double(b);
  LossOutput out{scale * (row_loss + col_loss), MatrixD(b, b), 0.0, 0.0};
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < b; ++j) {
      const double g = grad_z(i, j) * scale;
      out.grad_s(i, j) = g / tau;
      out.grad_u += g * (-z(i, j));
    }
  }
  if (!std::isfinite(out.loss)) throw NumericError("non-finite InfoNCE loss");
  return out;
}

LossOutput infonce_loss(const SimilarityMatrix& s, double tau) {
  return infonce_loss(s.scores.cast<double>(), tau);
}

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), kGradcheckFloor});
  return std::abs(analytic - numeric) / denom;
}

MatrixD random_similarity(std::size_t batch, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  MatrixD s(batch, batch);
  for (auto& x : s.data()) x = unit(rng);
  return s;
}

namespace {

void require_gradcheck_batch(std::size_t batch) {
  if (batch < 2 || batch > 64) {
    throw Error(ErrorCode::kInvalidInput, "gradcheck batch must be in [2, 64]");
  }
}

// Central difference of f over s(i, j), log tau and beta against the analytic output.
template <typename LossFn>
double check_gradients(const MatrixD& s, const LossParams& p, bool has_beta, LossFn f) {
  const double h = kGradcheckStep;
  const LossOutput analytic = f(s, p);
  double worst = 0.0;
  MatrixD probe = s;
  for (std::size_t i = 0; i < s.rows(); ++i) {
    for (std::size_t j = 0; j < s.cols(); ++j) {
      const double orig = probe(i, j);
      probe(i, j) = orig + h;
      const double up = f(probe, p).loss;
      probe(i, j) = orig - h;
      const double down = f(probe, p).loss;
      probe(i, j) = orig;
      worst = std::max(worst, relative_error(analytic.grad_s(i, j), (up - down) / (2 * h)));
    }
  }
  {
    LossParams up = p, down = p;
    up.log_tau += h;
    down.log_tau -= h;
    const double numeric = (f(s, up).loss - f(s, down).loss) / (2 * h);
    worst = std::max(worst, relative_error(analytic.grad_u, numeric));
  }
  if (has_beta) {
    LossParams up = p, down = p;
    up.beta += h;
    down.beta -= h;
    const double numeric = (f(s, up).loss - f(s, down).loss) / (2 * h);
    worst = std::max(worst, relative_error(analytic.grad_beta, numeric));
  }
  return worst;
}

}  // namespace

double siglip_gradcheck(std::size_t batch, std::uint64_t seed, LogitForm form) {
  require_gradcheck_batch(batch);
  return check_gradients(random_similarity(batch, seed), LossParams::initial(), true,
                         [form](const MatrixD& s, const LossParams& p) {
                           return siglip_loss(s, p, form);
                         });
}

double infonce_gradcheck(std::size_t batch, std::uint64_t seed) {
  require_gradcheck_batch(batch);
  return check_gradients(random_similarity(batch, seed), LossParams::initial(), false,
                         [](const MatrixD& s, const LossParams& p) {
                           return infonce_loss(s, p.tau());
                         });
}

}  // namespace glap
