#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>

#include "deft/decompose.hpp"
#include "deft/errors.hpp"
#include "deft/linalg.hpp"
#include "deft/rng.hpp"
#include "oracles.hpp"

using deft::BackendKind;
using deft::Matrix;

namespace {

double orthonormality_defect(const Matrix& q) {
  return deft::frobenius_norm(deft::subtract(deft::matmul_tn(q, q), Matrix::identity(q.cols())));
}

Matrix projector(const Matrix& q) { return deft::matmul_nt(q, q); }

}  // namespace

TEST(Backend, NamesRoundTrip) {
  for (BackendKind k : deft::kAllBackends) EXPECT_EQ(deft::parse_backend(deft::backend_name(k)), k);
  EXPECT_EQ(deft::backend_name(BackendKind::kRelaxNmf), "relax-nmf");
  EXPECT_THROW(deft::parse_backend("svd"), deft::ConfigError);
  EXPECT_TRUE(deft::is_orthonormal_backend(BackendKind::kQr));
  EXPECT_FALSE(deft::is_orthonormal_backend(BackendKind::kLrmf));
}

TEST(FullSvd, MatchesEigenSingularValues) {
  deft::Rng rng(4);
  for (auto [m, n] : {std::pair{7, 4}, {4, 7}, {12, 12}}) {
    const Matrix a = deft::gaussian(rng, m, n, 1.0);
    const auto svd = deft::full_svd_oracle(a);
    const auto ref = oracle::singular_values(a);
    ASSERT_EQ(svd.singular_values.size(), ref.size());
    for (std::size_t k = 0; k < ref.size(); ++k) EXPECT_NEAR(svd.singular_values[k], ref[k], 1e-12 * ref[0]);
    Matrix us = svd.u;
    for (std::size_t j = 0; j < us.cols(); ++j) {
      for (std::size_t i = 0; i < us.rows(); ++i) us(i, j) *= svd.singular_values[j];
    }
    EXPECT_LT(deft::relative_error(deft::matmul_nt(us, svd.v), a), 1e-13);
    EXPECT_LT(orthonormality_defect(svd.u), 1e-12);
    EXPECT_LT(orthonormality_defect(svd.v), 1e-12);
  }
}

TEST(FullSvd, RankDeficientGetsCompletedBasis) {
  const Matrix a = Matrix::from_rows({{1, 2}, {2, 4}, {3, 6}});
  const auto svd = deft::full_svd_oracle(a);
  EXPECT_NEAR(svd.singular_values[1], 0.0, 1e-14);
  EXPECT_LT(orthonormality_defect(svd.u), 1e-12);
}

TEST(SymmetricEigen, MatchesEigen) {
  deft::Rng rng(8);
  const Matrix g = deft::gaussian(rng, 9, 9, 1.0);
  const Matrix s = deft::add(g, deft::transpose(g));
  const auto eig = deft::symmetric_eigen(s);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ref(oracle::to_eigen(s));
  for (std::size_t k = 0; k < 9; ++k) EXPECT_NEAR(eig.values[k], ref.eigenvalues()[8 - k], 1e-12);
  EXPECT_LT(orthonormality_defect(eig.vectors), 1e-12);
  EXPECT_THROW(deft::symmetric_eigen(Matrix(2, 3)), deft::ShapeError);
}

TEST(Qr, MatchesGramSchmidtOracle) {
  deft::Rng rng(12);
  const Matrix b = deft::gaussian(rng, 30, 6, 1.0);
  const auto res = deft::qr_decompose(b);
  EXPECT_LT(oracle::max_abs_diff(res.p_factor, oracle::mgs_q(b)), 1e-10);
  EXPECT_LT(deft::relative_error(deft::matmul(res.p_factor, *res.r_tri), b), 1e-13);
  for (std::size_t i = 0; i < 6; ++i) {
    for (std::size_t j = 0; j < i; ++j) EXPECT_EQ((*res.r_tri)(i, j), 0.0);
  }
  EXPECT_EQ(res.degenerate_columns, 0u);
}

TEST(Qr, DegenerateColumnsAreCompleted) {
  Matrix b = Matrix::from_rows({{1, 2, 0}, {1, 2, 0}, {0, 0, 0}, {1, 2, 0}});
  const auto res = deft::qr_decompose(b);
  EXPECT_EQ(res.degenerate_columns, 2u);
  EXPECT_LT(orthonormality_defect(res.p_factor), 1e-12);
  EXPECT_LT(deft::relative_error(deft::matmul(res.p_factor, *res.r_tri), b), 1e-13);

  const auto zero = deft::qr_decompose(Matrix(5, 3));
  EXPECT_EQ(zero.degenerate_columns, 3u);
  EXPECT_LT(orthonormality_defect(zero.p_factor), 1e-12);
  EXPECT_THROW(deft::qr_decompose(Matrix(2, 3)), deft::ShapeError);
}

TEST(Tsvd, ReachesEckartYoungBound) {
  deft::Rng rng(21);
  const Matrix b = deft::gaussian(rng, 15, 10, 1.0);
  for (std::size_t r : {1u, 4u, 10u}) {
    const auto res = deft::truncated_svd(b, r);
    EXPECT_EQ(res.p_factor.cols(), r);
    const double err = deft::frobenius_norm(deft::subtract(b, deft::low_rank_approximation(b, res)));
    EXPECT_NEAR(err, oracle::eckart_young_error(b, r), 1e-12 * deft::frobenius_norm(b));
  }
  EXPECT_THROW(deft::truncated_svd(b, 11), deft::ConfigError);
}

TEST(Lrmf, ScaledBasisReproducesProjectorTimesSigma) {
  deft::Rng rng(22);
  const Matrix b = deft::gaussian(rng, 12, 5, 1.0);
  const auto lrmf = deft::lrmf_decompose(b, 3);
  const auto tsvd = deft::truncated_svd(b, 3);
  // Ũ·Ũᵀ = U·S·Uᵀ
  Matrix us = tsvd.p_factor;
  for (std::size_t j = 0; j < 3; ++j) {
    for (std::size_t i = 0; i < us.rows(); ++i) us(i, j) *= tsvd.singular_values[j];
  }
  EXPECT_LT(deft::relative_error(projector(lrmf.p_factor), deft::matmul_nt(us, tsvd.p_factor)), 1e-12);
  EXPECT_LT(deft::relative_error(deft::low_rank_approximation(b, lrmf), deft::low_rank_approximation(b, tsvd)),
            1e-12);
}

TEST(Nmf, RecoversPlantedNonnegativeFactorization) {
  deft::Rng rng(31);
  const Matrix w = deft::uniform(rng, 20, 3);
  const Matrix h = deft::uniform(rng, 3, 8);
  const Matrix b = deft::matmul(w, h);
  const auto res = deft::nmf_decompose(b, 3, 5000, 0.0, 1);
  EXPECT_FALSE(res.clamped_negative);
  EXPECT_LT(deft::reconstruction_error(b, res), 1e-3);
  for (double v : res.p_factor.data()) EXPECT_GE(v, 0.0);
  for (double v : res.h_factor->data()) EXPECT_GE(v, 0.0);
}

TEST(Nmf, ErrorTraceIsNonIncreasing) {
  deft::Rng rng(32);
  const Matrix b = deft::uniform(rng, 25, 9);
  const auto res = deft::nmf_decompose(b, 4, 300, 0.0, 2);
  ASSERT_EQ(res.error_trace.size(), res.iterations + 1);
  const double slack = 1e-9 * res.error_trace.front();
  for (std::size_t k = 1; k < res.error_trace.size(); ++k) {
    EXPECT_LE(res.error_trace[k], res.error_trace[k - 1] + slack) << "iteration " << k;
  }
  // The tracked error is the actual residual.
  const double direct = deft::frobenius_norm(deft::subtract(b, deft::matmul(res.p_factor, *res.h_factor)));
  EXPECT_NEAR(res.error_trace.back(), direct, 1e-6 * deft::frobenius_norm(b));
}

TEST(Nmf, ClampsNegativesAndHandlesZero) {
  const Matrix b = Matrix::from_rows({{1, -1}, {2, 3}, {-4, 1}});
  EXPECT_TRUE(deft::nmf_decompose(b, 1).clamped_negative);
  const auto zero = deft::nmf_decompose(Matrix(4, 3), 2);
  EXPECT_TRUE(zero.p_factor.bit_equal(Matrix(4, 2)));
  EXPECT_EQ(zero.iterations, 0u);
}

TEST(Nmf, WarmStartIsCappedAndDeterministic) {
  deft::Rng rng(33);
  const Matrix b = deft::uniform(rng, 10, 4);
  const auto cold = deft::nmf_decompose(b, 4, 50, 0.0, 5);
  const deft::NmfWarmStart warm{cold.p_factor, *cold.h_factor};
  const auto a = deft::nmf_decompose(b, 4, 50, 0.0, 5, &warm, 3);
  const auto c = deft::nmf_decompose(b, 4, 50, 0.0, 5, &warm, 3);
  EXPECT_EQ(a.iterations, 3u);
  EXPECT_TRUE(a.p_factor.bit_equal(c.p_factor));
  EXPECT_LE(a.error_trace.back(), cold.error_trace.back() * (1.0 + 1e-12));
}

TEST(Eig, EigenvaluesAreSquaredSingularValues) {
  deft::Rng rng(41);
  // n < m takes the Gram route; n ≥ m forms BBᵀ directly.
  for (auto [m, n] : {std::pair{30, 5}, {6, 9}}) {
    const Matrix b = deft::gaussian(rng, m, n, 1.0);
    const auto res = deft::eig_project(b, 3);
    const auto sv = oracle::singular_values(b);
    for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(res.eigenvalues[k], sv[k] * sv[k], 1e-10 * sv[0] * sv[0]);
    EXPECT_LT(orthonormality_defect(res.p_factor), 1e-10);
    const auto tsvd = deft::truncated_svd(b, 3);
    EXPECT_LT(deft::relative_error(projector(res.p_factor), projector(tsvd.p_factor)), 1e-9);
  }
}

TEST(Eig, RankBeyondColumnsIsCompleted) {
  deft::Rng rng(42);
  const Matrix b = deft::gaussian(rng, 8, 2, 1.0);
  const auto res = deft::eig_project(b, 5);
  EXPECT_EQ(res.p_factor.cols(), 5u);
  EXPECT_LT(orthonormality_defect(res.p_factor), 1e-10);
  EXPECT_NEAR(res.eigenvalues[4], 0.0, 1e-12);
}

TEST(Relax, IsIdentityOrRelu) {
  const Matrix b = Matrix::from_rows({{1, -2}, {-3, 4}});
  EXPECT_TRUE(deft::relax(b, false).p_factor.bit_equal(b));
  EXPECT_EQ(deft::relax(b, true).p_factor, Matrix::from_rows({{1, 0}, {0, 4}}));
}

TEST(Decompose, DispatchUsesLeadingColumnsForQrAndRelax) {
  deft::Rng rng(51);
  const Matrix b = deft::gaussian(rng, 10, 4, 1.0);
  const auto qr = deft::decompose(b, {.kind = BackendKind::kQr, .rank = 2});
  EXPECT_EQ(qr.p_factor, deft::qr_decompose(b.columns(0, 2)).p_factor);
  const auto rx = deft::decompose(b, {.kind = BackendKind::kRelax, .rank = 2});
  EXPECT_EQ(rx.p_factor, b.columns(0, 2));
  for (BackendKind k : deft::kAllBackends) {
    const auto res = deft::decompose(b, {.kind = k, .rank = 3});
    EXPECT_EQ(res.kind, k);
    EXPECT_EQ(res.p_factor.rows(), 10u);
    EXPECT_EQ(res.p_factor.cols(), 3u);
  }
  EXPECT_THROW(deft::decompose(b, {.kind = BackendKind::kTsvd, .rank = 5}), deft::ConfigError);
}
