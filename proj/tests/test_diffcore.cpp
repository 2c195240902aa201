#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>

#include "gradcheck.hpp"
#include "oracles.hpp"
#include "qapm/checkpoint.hpp"
#include "qapm/diffcore.hpp"
#include "qapm/optim.hpp"

using namespace qapm;
using ad::Tensor;
using ad::Var;

TEST(Tape, SumGradientIsOnes) {
  ad::Tape tape;
  ad::Parameter w{"w", Tensor::Random(3, 4), {}};
  w.zero_grad();
  tape.backward(ad::sum(tape.parameter(w)));
  EXPECT_EQ(w.grad, Tensor::Ones(3, 4));
}

TEST(Tape, SquaredProductMatchesClosedForm) {
  Rng rng(1);
  const Tensor x = oracle::random_matrix(5, 3, rng);
  ad::Parameter w{"w", oracle::random_matrix(3, 2, rng), {}};
  w.zero_grad();
  ad::Tape tape;
  tape.backward(ad::sum_squares(ad::matmul(tape.constant(x), tape.parameter(w))));
  const Tensor expect = 2.0 * x.transpose() * (x * w.value);
  EXPECT_LT((w.grad - expect).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Tape, NonScalarLossIsContractError) {
  ad::Tape tape;
  ad::Parameter w{"w", Tensor::Ones(2, 2), {}};
  EXPECT_THROW(tape.backward(tape.parameter(w)), ContractError);
}

TEST(Tape, MixingTapesIsContractError) {
  ad::Tape a, b;
  EXPECT_THROW(ad::add(a.constant(Tensor::Ones(1, 1)), b.constant(Tensor::Ones(1, 1))), ContractError);
}

TEST(Tape, ReverseSweepVisitsNodesInReverseOrder) {
  ad::Tape tape;
  ad::Parameter w{"w", Tensor::Ones(2, 2), {}};
  const Var p = tape.parameter(w);
  const Var a = ad::scale(p, 2.0);
  const Var b = ad::add(a, p);
  const Var l = ad::sum_squares(b);
  tape.backward(l);
  EXPECT_EQ(tape.sweep_order(), (std::vector<int>{l.id(), b.id(), a.id(), p.id()}));
}

TEST(Tape, GradientsAccumulateAcrossUses) {
  ad::Tape tape;
  ad::Parameter w{"w", Tensor::Constant(1, 1, 3.0), {}};
  w.zero_grad();
  const Var p = tape.parameter(w);
  tape.backward(ad::sum(ad::add(p, ad::scale(p, 4.0))));
  EXPECT_DOUBLE_EQ(w.grad(0, 0), 5.0);
}

TEST(Primitives, ShapeErrors) {
  ad::Tape tape;
  EXPECT_THROW(ad::matmul(tape.constant(Tensor::Ones(2, 3)), tape.constant(Tensor::Ones(2, 3))), ShapeError);
  EXPECT_THROW(ad::add(tape.constant(Tensor::Ones(2, 3)), tape.constant(Tensor::Ones(3, 2))), ShapeError);
  EXPECT_THROW(ad::split_rho(tape.constant(Tensor::Ones(2, 3))), ShapeError);
  EXPECT_THROW(ad::cross_entropy(tape.constant(Tensor::Constant(2, 2, 0.5)), {0}), ShapeError);
}

TEST(Primitives, NonFiniteInputIsNumericError) {
  ad::Tape tape;
  Tensor bad = Tensor::Zero(2, 2);
  bad(0, 1) = std::nan("");
  EXPECT_THROW(ad::row_softmax(tape.constant(bad)), NumericError);
  EXPECT_THROW(ad::matmul(tape.constant(bad), tape.constant(Tensor::Ones(2, 2))), NumericError);
}

TEST(Primitives, SplitRhoExample) {
  ad::Tape tape;
  Tensor z(1, 2);
  z << -1, -1;
  Tensor expect(1, 2);
  expect << 0, -1;
  EXPECT_EQ(ad::split_rho(tape.constant(z)).value(), expect);
}

TEST(Primitives, ExpExample) {
  ad::Tape tape;
  Tensor z(1, 3);
  z << 0, 1, -2;
  const Var e = ad::exp(tape.constant(z));
  EXPECT_DOUBLE_EQ(e.value()(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(e.value()(0, 1), std::exp(1.0));
  EXPECT_DOUBLE_EQ(e.value()(0, 2), std::exp(-2.0));
  Tensor big(1, 1);
  big << 1000;
  EXPECT_THROW(ad::exp(tape.constant(big)), NumericError);
}

TEST(Primitives, SoftmaxOfZerosIsUniform) {
  ad::Tape tape;
  EXPECT_TRUE(ad::row_softmax(tape.constant(Tensor::Zero(4, 4))).value().isApprox(Tensor::Constant(4, 4, 0.25), 1e-15));
}

TEST(Primitives, SoftmaxRowsAreStochastic) {
  Rng rng(4);
  for (int t = 0; t < 50; ++t) {
    ad::Tape tape;
    const Tensor p = ad::row_softmax(tape.constant(oracle::random_matrix(7, 7, rng, 5.0))).value();
    EXPECT_LT((p.rowwise().sum() - Eigen::VectorXd::Ones(7)).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_GT(p.minCoeff(), 0.0);
    EXPECT_LT(p.maxCoeff(), 1.0);
  }
}

TEST(Primitives, SoftmaxIsOverflowSafe) {
  ad::Tape tape;
  Tensor big(1, 3);
  big << 1000, 999, -1000;
  const Tensor p = ad::row_softmax(tape.constant(big)).value();
  EXPECT_TRUE(p.allFinite());
  EXPECT_NEAR(p(0, 0), 1.0 / (1.0 + std::exp(-1.0)), 1e-12);
}

TEST(Primitives, CrossEntropyOfOneHotIsZero) {
  ad::Tape tape;
  const Permutation pi({2, 0, 1});
  EXPECT_DOUBLE_EQ(ad::cross_entropy(tape.constant(pi.matrix()), pi.map()).value()(0, 0), 0.0);
}

TEST(Primitives, CrossEntropyIsNonNegative) {
  Rng rng(5);
  for (int t = 0; t < 50; ++t) {
    ad::Tape tape;
    const Permutation pi = Permutation::random(6, rng);
    const Var p = ad::row_softmax(tape.constant(oracle::random_matrix(6, 6, rng)));
    EXPECT_GT(ad::cross_entropy(p, pi.map()).value()(0, 0), 0.0);
  }
}

TEST(Primitives, CrossEntropyRequiresStochasticRows) {
  ad::Tape tape;
  EXPECT_THROW(ad::cross_entropy(tape.constant(Tensor::Ones(2, 2)), {0, 1}), ParameterError);
}

TEST(Primitives, RowNormalizeLeavesZeroRows) {
  ad::Tape tape;
  Tensor x(2, 2);
  x << 3, 4, 0, 0;
  const Tensor y = ad::row_normalize(tape.constant(x)).value();
  EXPECT_NEAR(y(0, 0), 0.6, 1e-15);
  EXPECT_NEAR(y(0, 1), 0.8, 1e-15);
  EXPECT_EQ(y.row(1), Tensor::Zero(1, 2));
}

TEST(BatchNorm, NormalizesColumns) {
  Rng rng(6);
  ad::Tape tape;
  const Tensor x = oracle::random_matrix(200, 5, rng, 30.0);
  ad::BatchNormOptions opt;
  opt.eps = 0.0;
  const Tensor y = ad::batch_norm(tape.constant(x), tape.constant(Tensor::Ones(1, 5)), tape.constant(Tensor::Zero(1, 5)), opt).value();
  const Eigen::RowVectorXd mean = y.colwise().mean();
  const Eigen::RowVectorXd var = (y.rowwise() - mean).array().square().colwise().mean();
  EXPECT_LT(mean.cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_LT((var.array() - 1.0).abs().maxCoeff(), 1e-6);
}

TEST(BatchNorm, DefaultEpsKeepsLargeVarianceColumnsNormalized) {
  Rng rng(6);
  ad::Tape tape;
  const Tensor x = oracle::random_matrix(100, 3, rng, 100.0);
  const Tensor y = ad::batch_norm(tape.constant(x), tape.constant(Tensor::Ones(1, 3)), tape.constant(Tensor::Zero(1, 3))).value();
  const Eigen::RowVectorXd mean = y.colwise().mean();
  const Eigen::RowVectorXd var = (y.rowwise() - mean).array().square().colwise().mean();
  EXPECT_LT(mean.cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_LT((var.array() - 1.0).abs().maxCoeff(), 1e-6);
}

TEST(BatchNorm, RunningStatisticsUseMomentum) {
  ad::Tape tape;
  Tensor x(2, 1);
  x << 1, 3;
  ad::RunningStats stats = ad::RunningStats::fresh(1);
  ad::BatchNormOptions opt;
  opt.stats = &stats;
  ad::batch_norm(tape.constant(x), tape.constant(Tensor::Ones(1, 1)), tape.constant(Tensor::Zero(1, 1)), opt);
  EXPECT_NEAR(stats.mean(0, 0), 0.2, 1e-15);
  EXPECT_NEAR(stats.var(0, 0), 0.9 + 0.1 * 1.0, 1e-15);

  opt.mode = ad::NormMode::running;
  const Tensor y = ad::batch_norm(tape.constant(x), tape.constant(Tensor::Ones(1, 1)), tape.constant(Tensor::Zero(1, 1)), opt).value();
  EXPECT_NEAR(y(0, 0), (1.0 - 0.2) / std::sqrt(1.0 + 1e-5), 1e-12);
}

TEST(BatchNorm, RunningModeWithoutStatsIsContractError) {
  ad::Tape tape;
  ad::BatchNormOptions opt;
  opt.mode = ad::NormMode::running;
  EXPECT_THROW(ad::batch_norm(tape.constant(Tensor::Ones(2, 1)), tape.constant(Tensor::Ones(1, 1)), tape.constant(Tensor::Zero(1, 1)), opt),
               ContractError);
}

TEST(GradCheck, EveryPrimitiveMatchesCentralDifferences) {
  for (const auto& c : gradcheck::primitive_cases()) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) EXPECT_LE(c.run(seed), 1e-4) << c.name << " seed " << seed;
  }
}

TEST(GradCheck, SmallNetworkLoss) { EXPECT_LE(gradcheck::gnn_loss_error(0), 1e-4); }

TEST(Adamax, ZeroGradientLeavesParametersUnchanged) {
  ad::Parameter p{"p", Tensor::Constant(2, 2, 0.5), Tensor::Zero(2, 2)};
  ad::Adamax opt;
  std::vector<ad::Parameter*> ps{&p};
  opt.step(ps);
  EXPECT_EQ(p.value, Tensor::Constant(2, 2, 0.5));
}

TEST(Adamax, FirstStepMovesByLearningRate) {
  // m = 0.1, u = 1, lr_t = lr / 0.1, so Δ = lr · 1/(1+ε).
  ad::Parameter p{"p", Tensor::Constant(1, 1, 1.0), Tensor::Ones(1, 1)};
  ad::Adamax opt;
  std::vector<ad::Parameter*> ps{&p};
  opt.step(ps);
  EXPECT_NEAR(1.0 - p.value(0, 0), 1e-3 / (1.0 + 1e-8), 1e-15);
}

TEST(Adamax, RepeatedGradientStepSizesDoNotGrow) {
  ad::Parameter p{"p", Tensor::Constant(1, 1, 0.0), Tensor::Constant(1, 1, 0.3)};
  ad::Adamax opt;
  std::vector<ad::Parameter*> ps{&p};
  double prev = p.value(0, 0);
  double last_step = std::numeric_limits<double>::infinity();
  for (int t = 0; t < 10; ++t) {
    opt.step(ps);
    const double step = std::abs(p.value(0, 0) - prev);
    EXPECT_LE(step, last_step + 1e-18);
    last_step = step;
    prev = p.value(0, 0);
  }
}

TEST(Adamax, InfinityNormAccumulatorIsMonotoneUnderMaxRule) {
  Rng rng(8);
  ad::Parameter p{"p", Tensor::Zero(3, 3), {}};
  ad::Adamax opt;
  std::vector<ad::Parameter*> ps{&p};
  Tensor prev_u = Tensor::Zero(3, 3);
  for (int t = 0; t < 20; ++t) {
    p.grad = oracle::random_matrix(3, 3, rng);
    opt.step(ps);
    const Tensor& u = opt.state().u[0];
    EXPECT_GE(u.minCoeff(), 0.0);
    EXPECT_TRUE((u.array() >= (0.999 * prev_u).array()).all());
    EXPECT_TRUE((u.array() >= p.grad.cwiseAbs().array()).all());
    prev_u = u;
  }
}

TEST(Adamax, NonFiniteGradientRejectsStep) {
  ad::Parameter p{"p", Tensor::Constant(1, 2, 1.0), Tensor::Ones(1, 2)};
  ad::Adamax opt;
  std::vector<ad::Parameter*> ps{&p};
  opt.step(ps);
  const Tensor before = p.value;
  p.grad(0, 1) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(opt.step(ps), NumericError);
  EXPECT_EQ(p.value, before);
  EXPECT_EQ(opt.state().step, 1);
}

TEST(Checkpoint, TensorRoundTrip) {
  Rng rng(9);
  ad::TensorMap m{{"a", oracle::random_matrix(3, 5, rng)}, {"b", oracle::random_matrix(1, 1, rng)}};
  const auto path = (std::filesystem::temp_directory_path() / "qapm_ckpt_test.json").string();
  ad::write_json_file(path, ad::checkpoint_to_json(m, {{"k", 1}}));
  auto [back, cfg] = ad::checkpoint_from_json(ad::read_json_file(path));
  std::remove(path.c_str());
  EXPECT_EQ(back, m);
  EXPECT_EQ(cfg.at("k"), 1);
}

TEST(Checkpoint, RowMajorLayoutAndValidation) {
  Tensor t(2, 2);
  t << 1, 2, 3, 4;
  const auto j = ad::tensor_to_json(t);
  EXPECT_EQ(j.at("data"), nlohmann::json({1.0, 2.0, 3.0, 4.0}));
  nlohmann::json bad = j;
  bad["data"].push_back(5.0);
  EXPECT_ANY_THROW(ad::tensor_from_json(bad));
  nlohmann::json doc = ad::checkpoint_to_json({{"t", t}}, {});
  doc["version"] = 99;
  EXPECT_ANY_THROW(ad::checkpoint_from_json(doc));
}
