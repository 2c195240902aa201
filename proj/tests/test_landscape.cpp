#include <gtest/gtest.h>

#include <sstream>

#include "oracles.hpp"
#include "qapm/landscape.hpp"

using namespace qapm;
using namespace qapm::landscape;

namespace {

Vector random_vector(Eigen::Index n, Rng& rng) { return oracle::random_matrix(n, 1, rng); }

Matrix permutation_matrix(const Permutation& p) { return p.matrix().transpose(); }

}  // namespace

TEST(Krylov, IdentityGivesSquaredNorm) {
  Rng rng(1);
  const Vector y = random_vector(7, rng);
  const Matrix id = Matrix::Identity(7, 7);
  const MomentMatrices mm = krylov_moments(id, id, y, 3);
  const double nn = y.squaredNorm();
  for (const auto* q : {&mm.qab[0], &mm.qaa[0], &mm.qbb[0]}) {
    EXPECT_LT((q->array() - nn).abs().maxCoeff(), 1e-12 * nn);
  }
}

TEST(Krylov, DegreeZeroIsInnerProduct) {
  Rng rng(2);
  const Vector y = random_vector(6, rng);
  const MomentMatrices mm = krylov_moments(oracle::random_symmetric(6, rng), oracle::random_symmetric(6, rng), y, 0);
  ASSERT_EQ(mm.qab[0].rows(), 1);
  EXPECT_DOUBLE_EQ(mm.qab[0](0, 0), y.squaredNorm());
  EXPECT_DOUBLE_EQ(mm.qaa[0](0, 0), y.squaredNorm());
  EXPECT_DOUBLE_EQ(mm.qbb[0](0, 0), y.squaredNorm());
}

TEST(Krylov, MatchesEigenExpansion) {
  Rng rng(3);
  for (int t = 0; t < 20; ++t) {
    const Matrix a = oracle::random_symmetric(5, rng);
    const Matrix b = oracle::random_symmetric(5, rng);
    const Vector y = random_vector(5, rng);
    const int d = 4;
    const MomentMatrices mm = krylov_moments(a, b, y, d, false);
    Eigen::SelfAdjointEigenSolver<Matrix> ea(a), eb(b);
    const Vector ya = ea.eigenvectors().transpose() * y;
    const Vector yb = eb.eigenvectors().transpose() * y;
    const Matrix overlap = ea.eigenvectors().transpose() * eb.eigenvectors();
    for (int r = 0; r <= d; ++r) {
      for (int s = 0; s <= d; ++s) {
        double expect = 0.0;
        for (int i = 0; i < 5; ++i) {
          for (int j = 0; j < 5; ++j) {
            expect += std::pow(ea.eigenvalues()(i), r) * std::pow(eb.eigenvalues()(j), s) * ya(i) * yb(j) * overlap(i, j);
          }
        }
        EXPECT_NEAR(mm.qab[0](r, s), expect, 1e-9 * std::max(1.0, std::abs(expect)));
      }
    }
  }
}

TEST(Krylov, SelfMomentsArePsd) {
  Rng rng(4);
  const Matrix a = oracle::random_symmetric(10, rng);
  const Matrix b = oracle::random_symmetric(10, rng);
  const MomentMatrices mm = krylov_moments(a, b, Matrix(oracle::random_matrix(10, 3, rng)), 3);
  ASSERT_EQ(mm.columns(), 3);
  for (int t = 0; t < 3; ++t) {
    EXPECT_EQ(mm.qab[t], mm.qab[t].transpose());
    EXPECT_GE(Eigen::SelfAdjointEigenSolver<Matrix>(mm.qaa[t]).eigenvalues().minCoeff(), -1e-9);
    EXPECT_GE(Eigen::SelfAdjointEigenSolver<Matrix>(mm.qbb[t]).eigenvalues().minCoeff(), -1e-9);
  }
}

TEST(Krylov, OverflowIsNumericError) {
  const Matrix big = 1e100 * Matrix::Identity(3, 3);
  EXPECT_THROW(krylov_moments(big, big, Vector(Vector::Ones(3)), 3), NumericError);
  EXPECT_THROW(krylov_moments(big, big, Vector(Vector::Ones(3)), -1), ParameterError);
}

TEST(LossBeta, EqualMatricesGiveMinusHalf) {
  Rng rng(5);
  for (int t = 0; t < 50; ++t) {
    const Matrix a = oracle::random_symmetric(8, rng) / 3.0;
    const MomentMatrices mm = krylov_moments(a, a, random_vector(8, rng), 3);
    EXPECT_NEAR(loss_beta(mm, random_vector(4, rng)), -0.5, 1e-12);
  }
}

TEST(LossBeta, DegreeZeroIsMinusHalf) {
  Rng rng(6);
  const MomentMatrices mm = krylov_moments(oracle::random_symmetric(6, rng), oracle::random_symmetric(6, rng), random_vector(6, rng), 0);
  EXPECT_NEAR(loss_beta(mm, Matrix::Constant(1, 1, 0.3)), -0.5, 1e-15);
}

TEST(LossBeta, NeverBelowMinusHalf) {
  Rng rng(7);
  for (int t = 0; t < 300; ++t) {
    const Matrix a = oracle::random_symmetric(6, rng) / 2.0;
    const Matrix b = oracle::random_symmetric(6, rng) / 2.0;
    const MomentMatrices mm = krylov_moments(a, b, Matrix(oracle::random_matrix(6, 2, rng)), 3);
    EXPECT_GE(loss_beta(mm, oracle::random_matrix(4, 2, rng)), -0.5 - 1e-12);
  }
}

TEST(LossBeta, DegenerateDenominator) {
  Rng rng(8);
  const MomentMatrices mm = krylov_moments(oracle::random_symmetric(4, rng), oracle::random_symmetric(4, rng), random_vector(4, rng), 2);
  EXPECT_THROW(loss_beta(mm, Matrix::Zero(3, 1)), DegenerateInputError);
}

TEST(LossBeta, ConjugationEquivariance) {
  Rng rng(9);
  for (int t = 0; t < 20; ++t) {
    const Matrix a = oracle::random_symmetric(9, rng) / 3.0;
    const Matrix b = oracle::random_symmetric(9, rng) / 3.0;
    const Vector y = random_vector(9, rng);
    const Matrix p = permutation_matrix(Permutation::random(9, rng));
    const Vector beta = random_vector(4, rng);
    const double lhs = loss_beta(krylov_moments(p * a * p.transpose(), b, y, 3), beta);
    const double rhs = loss_beta(krylov_moments(a, p.transpose() * b * p, Vector(p.transpose() * y), 3), beta);
    EXPECT_NEAR(lhs, rhs, 1e-12);
  }
}

TEST(Quotient, GradientMatchesCentralDifferences) {
  Rng rng(10);
  for (int t = 0; t < 20; ++t) {
    const Matrix r = oracle::random_symmetric(4, rng);
    const Matrix s = oracle::random_spd(4, rng);
    const Vector beta = random_vector(4, rng);
    const Matrix numeric = oracle::central_difference([&](const Matrix& b) { return quotient_loss(r, s, Vector(b)); }, beta);
    EXPECT_LE(oracle::max_rel_error(quotient_gradient(r, s, beta), numeric), 1e-6);
  }
}

TEST(MeanField, EqualFormsGiveOne) {
  Rng rng(11);
  const Matrix s = oracle::random_spd(5, rng);
  EXPECT_NEAR(meanfield_opt(s, s).value, 1.0, 1e-10);
}

TEST(MeanField, DiagonalCase) {
  Matrix r = Matrix::Zero(2, 2);
  r.diagonal() << 2, 1;
  const MeanFieldOptimum opt = meanfield_opt(Matrix::Identity(2, 2), r);
  EXPECT_NEAR(opt.value, 2.0, 1e-14);
  EXPECT_NEAR(std::abs(opt.beta(0)), 1.0, 1e-14);
  EXPECT_NEAR(opt.beta(1), 0.0, 1e-14);
  EXPECT_FALSE(opt.ridge_applied);
}

TEST(MeanField, MatchesSphereSearch) {
  Rng rng(12);
  for (int t = 0; t < 10; ++t) {
    const Matrix s = oracle::random_spd(4, rng);
    const Matrix r = oracle::random_symmetric(4, rng);
    const MeanFieldOptimum opt = meanfield_opt(s, r);
    EXPECT_NEAR(opt.value, oracle::sphere_search_max(r, s, 100 + t), 1e-6);
    EXPECT_NEAR(opt.beta.dot(r * opt.beta) / opt.beta.dot(s * opt.beta), opt.value, 1e-10);
  }
}

TEST(MeanField, NeverBeatenByRandomDirections) {
  Rng rng(13);
  for (int t = 0; t < 20; ++t) {
    const Matrix s = oracle::random_spd(5, rng);
    const Matrix r = oracle::random_symmetric(5, rng);
    const double best = meanfield_opt(s, r).value;
    for (int k = 0; k < 200; ++k) {
      const Vector b = random_vector(5, rng).normalized();
      EXPECT_LE(b.dot(r * b) / b.dot(s * b), best + 1e-10);
    }
  }
}

TEST(MeanField, NotSpdAndRidge) {
  Matrix s = Matrix::Zero(3, 3);
  s.diagonal() << 1, 1, 0;
  const Matrix r = Matrix::Identity(3, 3);
  EXPECT_THROW(meanfield_opt(s, r), NotSpdError);
  EXPECT_THROW(meanfield_opt(-Matrix::Identity(3, 3), r, true), NotSpdError);
  const MeanFieldOptimum opt = meanfield_opt(s, r, true);
  EXPECT_TRUE(opt.ridge_applied);
  EXPECT_TRUE(opt.beta.allFinite());
  EXPECT_THROW(meanfield_opt(Matrix::Identity(2, 2), r), ShapeError);
}

TEST(Semicircle, KnownMoments) {
  EXPECT_NEAR(semicircle_moment(0), 1.0, 1e-14);
  EXPECT_NEAR(semicircle_moment(2), 1.0, 1e-14);
  EXPECT_NEAR(semicircle_moment(4), 2.0, 1e-14);
  EXPECT_NEAR(semicircle_moment(6), 5.0, 1e-13);
  EXPECT_EQ(semicircle_moment(3), 0.0);
  EXPECT_EQ(semicircle_moment(7), 0.0);
  EXPECT_NEAR(semicircle_moment(4, 2.5), 5.0, 1e-13);
  EXPECT_THROW(semicircle_moment(-2), ParameterError);
}

TEST(Semicircle, AgreesWithQuadratureAndCatalan) {
  for (int m = 0; m <= 20; m += 2) {
    EXPECT_NEAR(semicircle_moment(m), oracle::semicircle_quadrature(m), 1e-8 * oracle::catalan(m / 2)) << "m=" << m;
    EXPECT_NEAR(semicircle_moment(m), oracle::catalan(m / 2), 1e-9 * oracle::catalan(m / 2)) << "m=" << m;
  }
}

TEST(Wigner, SymmetricWithScaledEntries) {
  Rng rng(14);
  const Matrix a = sample_wigner(400, 0.5, rng);
  EXPECT_EQ(a, a.transpose());
  // Off-diagonal entries have variance 1/n.
  EXPECT_NEAR(a.squaredNorm() / (400.0 * 400.0) * 400.0, 1.0, 0.02);
}

TEST(Wigner, SpectralMomentMatchesTrace) {
  Rng rng(15);
  const Matrix a = sample_wigner(50, 0.5, rng);
  const auto pows = matrix_powers(a, 4);
  EXPECT_NEAR(spectral_moment(a, 4), pows[4].trace() / 50.0, 1e-10);
}

TEST(ExpectedMoments, SelfCaseIsPowerSumOfEigenvalues) {
  Rng rng(16);
  const Matrix a = sample_wigner(30, 0.5, rng);
  const auto pows = matrix_powers(a, 3);
  const Matrix e = expected_moments(pows, pows, 2.0);
  const Vector lambda = Eigen::SelfAdjointEigenSolver<Matrix>(a).eigenvalues();
  for (int r = 0; r <= 3; ++r) {
    for (int s = 0; s <= 3; ++s) EXPECT_NEAR(e(r, s), 2.0 * lambda.array().pow(r + s).sum(), 1e-9);
  }
}

TEST(ExpectedMoments, MonteCarloAverageOverY) {
  Rng rng(17);
  const Matrix a = sample_wigner(20, 0.5, rng);
  const Matrix b = a + sample_symmetric_noise(20, 0.3, rng);
  const Matrix expect = expected_moments(matrix_powers(a, 2), matrix_powers(b, 2), 1.0);
  Matrix avg = Matrix::Zero(3, 3);
  const int draws = 20000;
  for (int t = 0; t < draws; ++t) avg += krylov_moments(a, b, Vector(sample_gaussian(20, 1, 1.0, rng)), 2).qab[0] / draws;
  EXPECT_LT((avg - expect).cwiseAbs().maxCoeff(), 0.05 * expect.cwiseAbs().maxCoeff());
}

TEST(Concentration, DegreeZeroIsChiSquareDeviation) {
  Rng rng(18);
  const Matrix a = sample_wigner(100, 0.5, rng);
  Rng copy = rng;
  const Vector y = sample_gaussian(100, 1, 1.0, copy);
  const double expect = std::abs(y.squaredNorm() / 100.0 - 1.0);
  EXPECT_NEAR(concentration_trial(a, 0, 1, 1.0, 8, rng), expect, 1e-12);
}

TEST(Concentration, DeterministicAndValidated) {
  ConcentrationConfig cfg;
  cfg.sizes = {20, 40};
  cfg.trials = 1;
  cfg.seed = 5;
  const auto a = concentration_sweep(cfg);
  const auto b = concentration_sweep(cfg);
  std::stringstream sa, sb;
  write_sweep_csv(sa, a);
  write_sweep_csv(sb, b);
  EXPECT_EQ(sa.str(), sb.str());
  EXPECT_EQ(sa.str().substr(0, sa.str().find('\n')), "n,d,k,trial_count,metric_name,mean,std,seed");
  cfg.sizes = {40, 20};
  EXPECT_THROW(concentration_sweep(cfg), ParameterError);
}

TEST(GradGap, EqualMatricesGiveVanishingSampledGradient) {
  GradGapConfig cfg;
  cfg.spec.n = 40;
  cfg.beta = Vector::Ones(4);
  cfg.trials = 3;
  const GradGapReport rep = gradient_gap(cfg);
  for (const auto& t : rep.trials) {
    // Zero up to rounding in the two quotient terms that cancel.
    EXPECT_LT(t.sampled_grad.norm(), 1e-12);
    EXPECT_EQ(t.sampled_loss, -0.5);
  }
}

TEST(GradGap, SampledGradientMatchesFiniteDifferences) {
  Rng rng(19);
  const Matrix a = sample_wigner(50, 0.5, rng);
  const Matrix b = a + sample_symmetric_noise(50, 0.2, rng);
  const MomentMatrices mm = krylov_moments(a, b, Vector(sample_gaussian(50, 1, 1.0, rng)), 3);
  const Matrix r = MomentMatrices::total(mm.qab);
  const Matrix s = MomentMatrices::total(mm.qaa) + MomentMatrices::total(mm.qbb);
  const Vector beta = random_vector(4, rng);
  const Matrix numeric = oracle::central_difference([&](const Matrix& x) { return loss_beta(mm, x); }, beta);
  EXPECT_LE(oracle::max_rel_error(quotient_gradient(r, s, beta), numeric), 1e-6);
}

TEST(GradGap, ReportRows) {
  GradGapConfig cfg;
  cfg.spec.n = 30;
  cfg.spec.noise_level = 0.1;
  cfg.beta = Vector::Ones(4);
  cfg.trials = 4;
  const GradGapReport rep = gradient_gap(cfg);
  ASSERT_EQ(rep.trials.size(), 4u);
  const auto rows = gradient_gap_rows(cfg, rep);
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0].metric, "grad_distance");
  EXPECT_NEAR(rows[0].mean, rep.mean_distance(), 1e-15);
  for (const auto& t : rep.trials) {
    EXPECT_GE(t.term1, 0.0);
    EXPECT_GE(t.term2, 0.0);
  }
  cfg.beta = Vector::Ones(3);
  EXPECT_THROW(gradient_gap(cfg), ShapeError);
}
