// Copyright 2026 The GLAP Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "glap/loss.hpp"

using namespace glap;

namespace {

const LossParams kInit = LossParams::initial();

MatrixD constant(std::size_t b, double v) { return MatrixD(b, b, v); }

}  // namespace

TEST_CASE("loss params initialization") {
  CHECK(kInit.tau() == 0.07);
  CHECK(kInit.beta == -10.0);
}

TEST_CASE("siglip_logits examples") {
  const auto consistent = siglip_logits(constant(3, 0.0), kInit, LogitForm::kSiglipConsistent);
  for (double x : consistent.data()) CHECK(x == doctest::Approx(-10.0).epsilon(1e-12));

  const auto literal = siglip_logits(constant(3, 0.0), kInit, LogitForm::kPaperLiteral);
  for (double x : literal.data()) CHECK(x == doctest::Approx(-10.0 / 0.07).epsilon(1e-12));

  const auto unit = LossParams::from_tau(1.0, 0.0);
  CHECK(siglip_logits(constant(1, 1.0), unit, LogitForm::kSiglipConsistent)(0, 0) == 1.0);
  CHECK(siglip_logits(constant(1, 1.0), unit, LogitForm::kPaperLiteral)(0, 0) == 1.0);

  CHECK_THROWS_AS(siglip_logits(MatrixD(2, 3), kInit, LogitForm::kSiglipConsistent), Error);
}

TEST_CASE("siglip_loss examples") {
  // -log sigmoid(1) = log(1 + e^-1)
  auto one = siglip_loss(constant(1, 1.0), sign_matrix(1));
  CHECK(one.loss == doctest::Approx(std::log1p(std::exp(-1.0))).epsilon(1e-12));
  CHECK(one.loss == doctest::Approx(0.31326).epsilon(1e-5));

  auto two = siglip_loss(constant(2, 0.0), sign_matrix(2));
  CHECK(std::abs(two.loss - 2.0 * std::log(2.0)) < 1e-12);
  CHECK(two.grad_logits(0, 0) == -0.25);
  CHECK(two.grad_logits(0, 1) == 0.25);
  CHECK(two.grad_logits(1, 0) == 0.25);
  CHECK(two.grad_logits(1, 1) == -0.25);

  // B diagonal softplus(10) terms plus B(B-1) softplus(-10) terms, over B.
  const double diag = std::log1p(std::exp(10.0)), off = std::log1p(std::exp(-10.0));
  const double expected = diag + 127.0 * off;
  auto big = siglip_loss(constant(128, 0.0), kInit, LogitForm::kSiglipConsistent);
  CHECK(std::abs(big.loss - expected) < 1e-9);
  CHECK(std::abs(big.loss - 10.00581) < 1e-4);

  auto literal = siglip_loss(constant(128, 0.0), kInit, LogitForm::kPaperLiteral);
  CHECK(literal.loss == doctest::Approx(10.0 / 0.07).epsilon(1e-3));
}

TEST_CASE("siglip_loss rejects non-finite logits with index") {
  MatrixD m = constant(3, 0.0);
  m(1, 2) = std::nan("");
  try {
    siglip_loss(m, sign_matrix(3));
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    REQUIRE(e.where().has_value());
    CHECK(e.where()->first == 1);
    CHECK(e.where()->second == 2);
  }
  CHECK_THROWS_AS(siglip_loss(constant(2, 0.0), sign_matrix(3)), Error);
}

TEST_CASE("siglip gradients against finite differences") {
  CHECK(siglip_gradcheck(4, 0, LogitForm::kSiglipConsistent) < kGradcheckTolerance);
  CHECK(siglip_gradcheck(8, 7, LogitForm::kPaperLiteral) < kGradcheckTolerance);
  CHECK_THROWS_AS(siglip_gradcheck(1, 0, LogitForm::kPaperLiteral), Error);
  CHECK_THROWS_AS(siglip_gradcheck(65, 0, LogitForm::kPaperLiteral), Error);

  // B=2, S=0: dL/dbeta by central difference.
  const double h = 1e-3;
  for (auto form : {LogitForm::kSiglipConsistent, LogitForm::kPaperLiteral}) {
    const auto analytic = siglip_loss(constant(2, 0.0), kInit, form);
    LossParams up = kInit, down = kInit;
    up.beta += h;
    down.beta -= h;
    const double numeric = (siglip_loss(constant(2, 0.0), up, form).loss -
                            siglip_loss(constant(2, 0.0), down, form).loss) / (2 * h);
    CHECK(std::abs(analytic.grad_beta - numeric) < 1e-6);
  }
}

TEST_CASE("siglip_loss properties") {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> wide(-20.0, 20.0);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t b = 2 + trial % 6;
    MatrixD logits(b, b);
    for (auto& x : logits.data()) x = wide(rng);
    const auto psi = sign_matrix(b);
    const auto base = siglip_loss(logits, psi);
    CHECK(base.loss >= 0.0);

    // Simultaneous row/column permutation keeps pairs intact.
    std::vector<std::size_t> perm(b);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    MatrixD permuted(b, b);
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t j = 0; j < b; ++j) permuted(i, j) = logits(perm[i], perm[j]);
    CHECK(siglip_loss(permuted, psi).loss == doctest::Approx(base.loss).epsilon(1e-12));

    // Monotonicity in diagonal and off-diagonal entries.
    MatrixD up = logits;
    up(0, 0) += 0.5;
    CHECK(siglip_loss(up, psi).loss < base.loss);
    up = logits;
    up(0, 1) += 0.5;
    CHECK(siglip_loss(up, psi).loss > base.loss);

    double along_psi = 0.0;
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t j = 0; j < b; ++j) along_psi += base.grad_logits(i, j) * psi(i, j);
    CHECK(along_psi < 0.0);
  }
}

TEST_CASE("siglip_loss is stable at large magnitudes") {
  for (double mag : {143.0, 1e3, 1e4}) {
    MatrixD logits(3, 3);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j) logits(i, j) = (i + j) % 2 ? mag : -mag;
    const auto out = siglip_loss(logits, sign_matrix(3));
    CHECK(std::isfinite(out.loss));
    for (double g : out.grad_logits.data()) CHECK(std::isfinite(g));
  }
}

TEST_CASE("infonce_loss examples") {
  CHECK(std::abs(infonce_loss(constant(2, 0.0), 1.0).loss - std::log(2.0)) < 1e-12);

  MatrixD margin(3, 3, -10.0);
  for (std::size_t i = 0; i < 3; ++i) margin(i, i) = 10.0;
  CHECK(infonce_loss(margin, 1.0).loss < 1e-6);

  CHECK(infonce_gradcheck(4, 3) < kGradcheckTolerance);
  CHECK(infonce_loss(constant(4, 0.3), 0.5).grad_beta == 0.0);
}
