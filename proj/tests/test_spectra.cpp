#include <chrono>
#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "qdres/onebody.hpp"
#include "qdres/operators.hpp"
#include "qdres/resonance.hpp"
#include "qdres/spectra.hpp"

namespace {

using namespace qdres;

const std::shared_ptr<const ReducedOperators>& production_basis() {
  static const auto red = prepare_basis({14, 2.0});
  return red;
}

TEST(Threshold, BothSolversAgree) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto b = threshold_bessel(5.0);
  const auto g = threshold_grid(5.0);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_NEAR(b.epsilon, -1.091, 1e-3);
  EXPECT_NEAR(b.epsilon, -1.0912038, 1e-7);
  EXPECT_NEAR(b.epsilon, g.epsilon, 1e-6);
  EXPECT_LT(secs, 1.0);
}

TEST(Threshold, OtherDepths) {
  for (double V0 : {1.0, 2.0, 10.0}) EXPECT_NEAR(threshold_bessel(V0).epsilon, threshold_grid(V0).epsilon, 1e-6) << V0;
}

TEST(Threshold, ShallowWellHasNoBoundState) {
  EXPECT_THROW(threshold_bessel(0.5), Error);
  try {
    threshold_bessel(0.5);
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NoBoundState);
  }
  EXPECT_THROW(threshold_bessel(-1.0), Error);
}

TEST(Operators, SymmetryAndUnitDiagonal) {
  const auto ops = build_operator_set({4, 2.0});
  EXPECT_EQ(ops.size(), basis_size(4));
  for (const MatrixXld* A : {&ops.S, &ops.T, &ops.V, &ops.W}) EXPECT_EQ((*A - A->transpose()).cwiseAbs().maxCoeff(), 0.0L);
  for (Eigen::Index i = 0; i < ops.S.rows(); ++i) EXPECT_NEAR(static_cast<double>(ops.S(i, i)), 1.0, 1e-15);
}

TEST(Operators, BlockDiagonalOneBodyParts) {
  const auto ops = build_operator_set({4, 2.0});
  for (std::size_t i = 0; i < ops.size(); ++i)
    for (std::size_t j = 0; j < ops.size(); ++j)
      if (ops.index[i].l != ops.index[j].l) {
        const auto a = static_cast<Eigen::Index>(i), b = static_cast<Eigen::Index>(j);
        EXPECT_EQ(ops.S(a, b), 0.0L);
        EXPECT_EQ(ops.T(a, b), 0.0L);
        EXPECT_EQ(ops.V(a, b), 0.0L);
      }
}

TEST(Operators, CoulombAndKineticPositiveDefinite) {
  const auto red = prepare_basis({6, 2.0});
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> w(red->W), t(red->T), v(red->V);
  EXPECT_GT(w.eigenvalues().minCoeff(), 0.0);
  EXPECT_GT(t.eigenvalues().minCoeff(), 0.0);
  EXPECT_GT(v.eigenvalues().minCoeff(), 0.0);
}

TEST(Operators, Deterministic) {
  const auto a = build_operator_set({5, 1.7});
  const auto b = build_operator_set({5, 1.7});
  EXPECT_TRUE(a.S == b.S && a.T == b.T && a.V == b.V && a.W == b.W);
}

TEST(Operators, ScaledPotentialAtZeroAngleIsReal) {
  const auto ops = build_operator_set({4, 2.0});
  const MatrixXcld V = scaled_potential(ops, 0.0);
  EXPECT_LT((V.real() - ops.V).cwiseAbs().maxCoeff(), 1e-17L);
  EXPECT_EQ(V.imag().cwiseAbs().maxCoeff(), 0.0L);
}

TEST(Operators, RejectsOutOfRangeInput) {
  EXPECT_THROW(build_operator_set({21, 2.0}), Error);
  EXPECT_THROW((ModelParams{5.0, -0.1, 0.0}.validate()), Error);
  EXPECT_THROW((ModelParams{5.0, 1.0, std::numbers::pi / 4}.validate()), Error);
  EXPECT_THROW((ModelParams{0.0, 1.0, 0.0}.validate()), Error);
}

TEST(Canonical, ProductionBasisDimension) {
  const auto& red = production_basis();
  EXPECT_EQ(red->transform.full_dim(), 680);
  EXPECT_EQ(red->dim(), 461);
  EXPECT_GT(red->transform.condition(), 1e6);
}

TEST(Canonical, ReducedOverlapIsIdentity) {
  const auto red = prepare_basis({8, 2.0});
  const MatrixXld X = red->transform.dense();
  const MatrixXld I = X.transpose() * red->ops->S * X;
  EXPECT_LT((I - MatrixXld::Identity(I.rows(), I.cols())).cwiseAbs().maxCoeff(), 1e-9L);
}

TEST(Canonical, CutoffDropsDirections) {
  const auto ops = std::make_shared<const OperatorSet>(build_operator_set({10, 2.0}));
  const auto loose = reduce_operators(ops, 1e-6);
  const auto tight = reduce_operators(ops, 1e-12);
  EXPECT_LT(loose->dim(), tight->dim());
  EXPECT_LE(tight->dim(), static_cast<Eigen::Index>(ops->size()));
}

TEST(RealSpectrum, HylleraasUndheim) {
  // nested bases at fixed alpha: every level can only move down as N grows
  std::vector<Eigen::VectorXd> E;
  for (int N = 3; N <= 7; ++N) E.push_back(solve_real(prepare_basis({N, 2.0}), {5.0, 2.0, 0.0}, false).energies);
  for (std::size_t k = 1; k < E.size(); ++k)
    for (int j = 0; j < 5; ++j) EXPECT_LE(E[k](j), E[k - 1](j) + 1e-10) << "N step " << k << " level " << j;
}

TEST(RealSpectrum, NormalizedCoefficients) {
  const auto red = prepare_basis({6, 2.0});
  const auto s = solve_real(red, {5.0, 1.8, 0.0}, true, 4);
  ASSERT_EQ(s.Y.cols(), 4);
  const MatrixXld Sfull = red->ops->S;
  for (Eigen::Index j = 0; j < 4; ++j) {
    const Eigen::VectorXd c = s.coefficients(j);
    EXPECT_NEAR((c.transpose() * Sfull.cast<double>() * c)(0, 0), 1.0, 1e-9);
    const Eigen::VectorXd Hc = red->hamiltonian({5.0, 1.8, 0.0}) * s.Y.col(j);
    EXPECT_LT((Hc - s.energies(j) * s.Y.col(j)).norm(), 1e-10);
  }
  EXPECT_TRUE(std::is_sorted(s.energies.data(), s.energies.data() + s.energies.size()));
}

TEST(RealSpectrum, RejectsComplexAngle) {
  EXPECT_THROW(solve_real(prepare_basis({2, 2.0}), {5.0, 1.0, 0.1}), Error);
}

TEST(RealSpectrum, IonizationPointOfProductionBasis) {
  // E_1 reaches the threshold at lambda_th = 1.571 for N = 14, alpha = 2
  const auto& red = production_basis();
  const double eps = threshold_bessel(5.0).epsilon;
  double lo = 1.3, hi = 2.0;
  for (int i = 0; i < 30; ++i) {
    const double mid = 0.5 * (lo + hi);
    (solve_real(red, {5.0, mid, 0.0}, false).energies(0) < eps ? lo : hi) = mid;
  }
  EXPECT_NEAR(0.5 * (lo + hi), 1.571, 2e-3);
}

TEST(ComplexSpectrum, BoundStateStaysReal) {
  // a fixed real-alpha basis rotates the bound state only approximately; the
  // residual Im E does not shrink with N but stays below the resonance slack
  const auto red = prepare_basis({10, 2.0});
  const double E1 = solve_real(red, {5.0, 1.0, 0.0}, false).energies(0);
  for (double th : {std::numbers::pi / 20, std::numbers::pi / 10}) {
    const auto c = solve_complex(red, {5.0, 1.0, th}, true);
    Eigen::Index k = 0;
    (c.eigenvalues.array() - E1).abs().minCoeff(&k);
    EXPECT_NEAR(c.eigenvalues(k).real(), E1, 5e-4);
    EXPECT_LT(std::abs(c.eigenvalues(k).imag()), TrajectoryOptions{}.imag_slack);
    const Eigen::VectorXcd y = c.Y.col(k);
    EXPECT_NEAR(std::abs((y.transpose() * y)(0, 0) - 1.0), 0.0, 1e-10);
  }
}

TEST(ComplexSpectrum, InverseIterationMatchesDenseSolver) {
  const auto red = prepare_basis({8, 2.0});
  const ModelParams p{5.0, 2.0, std::numbers::pi / 10};
  const auto c = solve_complex(red, p, false);
  const Eigen::MatrixXcd H = red->scaled_hamiltonian(p);
  for (Eigen::Index k : {Eigen::Index(0), Eigen::Index(3), Eigen::Index(7)}) {
    std::complex<double> E;
    const auto y = complex_eigenvector(H, c.eigenvalues(k) + std::complex<double>(1e-7, 0.0), &E);
    EXPECT_LT(std::abs(E - c.eigenvalues(k)), 1e-9);
    EXPECT_LT((H * y - E * y).norm(), 1e-8);
    EXPECT_NEAR(std::abs((y.transpose() * y)(0, 0) - 1.0), 0.0, 1e-12);
  }
}

TEST(ComplexSpectrum, FullMatrixEntryPointAgrees) {
  const auto ops = std::make_shared<const OperatorSet>(build_operator_set({5, 2.0}));
  const ModelParams p{5.0, 1.9, std::numbers::pi / 20};
  const auto a = solve_complex(build_scaled_hamiltonian(*ops, p), ops, false);
  const auto b = solve_complex(reduce_operators(ops), p, false);
  ASSERT_EQ(a.eigenvalues.size(), b.eigenvalues.size());
  EXPECT_LT((a.eigenvalues - b.eigenvalues).cwiseAbs().maxCoeff(), 1e-10);
}

}  // namespace
