#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace paramflow;

namespace {

OperatorA constant_identity_A(long d = 3) {
  const auto map = FeatureMap<double>::identity(d);
  const auto gen = Generator<double>::constant(d, 2);
  LatentSampler<double> z(2, 1);
  return assemble_A(map, gen, oracle::randn(d, 2), z.sample(4));
}

Spectrum diag_spectrum(std::vector<double> diag, double thr = 1e-8) {
  VectorX v = Eigen::Map<VectorX>(diag.data(), static_cast<long>(diag.size()));
  return spectrum_of(MatrixX(v.asDiagonal()), thr);
}

}  // namespace

TEST(AssembleA, ConstantIdentityIsIdentity) {
  const OperatorA a = constant_identity_A();
  EXPECT_LT((a.matrix - MatrixX::Identity(3, 3)).norm(), 1e-15);
  const RkhsFunction<double> f(oracle::randn(3, 5));
  EXPECT_LT(oracle::rel(apply_L(a, f), f.weights), 1e-15);
  EXPECT_LT(oracle::rel(apply_Lt(a, f.weights).weights, f.weights), 1e-15);
  EXPECT_LT(oracle::rel(apply_D(a, f).weights, f.weights), 1e-15);
}

TEST(AssembleA, MatchesPerSampleOracle) {
  const auto pr = oracle::problem(1);
  const OperatorA a = assemble_A(pr.map, pr.gen, pr.theta, pr.z);
  EXPECT_LT(oracle::rel(a.matrix, oracle::per_sample_A(pr.map, pr.gen, pr.theta, pr.z)), 1e-13);
}

TEST(AssembleA, LargeBatchCrossesChunkBoundary) {
  auto pr = oracle::problem(2, 6, 8);
  LatentSampler<double> zs(3, 77);
  const MatrixX z = zs.sample(70);
  const OperatorA a = assemble_A(pr.map, pr.gen, pr.theta, z);
  EXPECT_LT(oracle::rel(a.matrix, oracle::per_sample_A(pr.map, pr.gen, pr.theta, z)), 1e-13);
}

TEST(AssembleA, DuplicatedBatchUnchanged) {
  const auto pr = oracle::problem(3);
  MatrixX twice(pr.z.rows(), 2 * pr.z.cols());
  twice << pr.z, pr.z;
  const OperatorA a = assemble_A(pr.map, pr.gen, pr.theta, pr.z);
  const OperatorA b = assemble_A(pr.map, pr.gen, pr.theta, twice);
  EXPECT_LT(oracle::rel(b.matrix, a.matrix), 1e-14);
}

TEST(AssembleA, Errors) {
  const auto pr = oracle::problem(4);
  EXPECT_THROW(assemble_A(pr.map, pr.gen, pr.theta, MatrixX(3, 0)), DimensionError);
  EXPECT_THROW(assemble_A(pr.map, pr.gen, pr.theta, MatrixX::Zero(4, 2)), DimensionError);
  const auto gen3 = Generator<double>::mlp({3, 4, 3});
  EXPECT_THROW(assemble_A(pr.map, gen3, gen3.initial_theta(1), pr.z), DimensionError);
}

TEST(ApplyL, ZeroAndFiniteDifferences) {
  const auto pr = oracle::problem(5);
  const OperatorA a = assemble_A(pr.map, pr.gen, pr.theta, pr.z);
  EXPECT_TRUE(apply_L(a, RkhsFunction<double>::zero(10)).isZero(0));
  EXPECT_TRUE(apply_Lt(a, VectorX::Zero(a.param_dim())).weights.isZero(0));
  const VectorX w = oracle::randn(10, 6);
  const VectorX fd = oracle::fd_gradient([&](const VectorX& t) { return oracle::batch_mean_f(pr.map, pr.gen, t, pr.z, w); },
                                         pr.theta);
  EXPECT_LT(oracle::rel(apply_L(a, RkhsFunction<double>(w)), fd), 1e-4);
  EXPECT_THROW(apply_L(a, RkhsFunction<double>::zero(9)), DimensionError);
  EXPECT_THROW(apply_Lt(a, VectorX::Zero(3)), DimensionError);
}

TEST(ApplyL, AdjointOnHundredPairs) {
  const auto pr = oracle::problem(6);
  const OperatorA a = assemble_A(pr.map, pr.gen, pr.theta, pr.z);
  for (int t = 0; t < 100; ++t) {
    const RkhsFunction<double> f(oracle::randn(10, 1000 + t));
    const VectorX v = oracle::randn(a.param_dim(), 2000 + t);
    EXPECT_LT(oracle::rel(apply_L(a, f).dot(v), f.inner(apply_Lt(a, v))), 1e-12);
  }
}

TEST(ApplyD, SymmetricPositive) {
  const auto pr = oracle::problem(7);
  const OperatorA a = assemble_A(pr.map, pr.gen, pr.theta, pr.z);
  for (int t = 0; t < 20; ++t) {
    const RkhsFunction<double> f(oracle::randn(10, 10 + t));
    const RkhsFunction<double> g(oracle::randn(10, 50 + t));
    EXPECT_GE(f.inner(apply_D(a, f)), 0.0);
    EXPECT_LT(oracle::rel(apply_D(a, f).inner(g), f.inner(apply_D(a, g))), 1e-12);
  }
  EXPECT_THROW(apply_D(a, RkhsFunction<double>::zero(4)), DimensionError);
  const MatrixX d = gram(a);
  EXPECT_EQ((d - d.transpose()).norm(), 0.0);
  EXPECT_LT(oracle::rel(d, MatrixX(a.matrix.transpose() * a.matrix)), 1e-13);
}

TEST(Spectrum, IdentityAllOnes) {
  const Spectrum s = spectrum(constant_identity_A());
  EXPECT_LT((s.eigenvalues - VectorX::Ones(3)).norm(), 1e-15);
  EXPECT_DOUBLE_EQ(smallest_nonzero_eig(s), 1.0);
  EXPECT_DOUBLE_EQ(nullspace_alignment(s, RkhsFunction<double>(oracle::randn(3, 4))), 1.0);
}

TEST(Spectrum, ReconstructionAndOrthonormality) {
  const auto pr = oracle::problem(8);
  const OperatorA a = assemble_A(pr.map, pr.gen, pr.theta, pr.z);
  const Spectrum s = spectrum(a);
  const MatrixX d = gram(a);
  const MatrixX v = s.eigenvectors;
  EXPECT_LE((d - v * s.eigenvalues.asDiagonal() * v.transpose()).norm(), 1e-8 * d.norm());
  EXPECT_LE((v.transpose() * v - MatrixX::Identity(10, 10)).norm(), 1e-8);
  for (long j = 1; j < s.eigenvalues.size(); ++j) EXPECT_GE(s.eigenvalues(j - 1), s.eigenvalues(j));
}

TEST(Spectrum, RankDeficientWhenFewParameters) {
  // p = 2 * (1 + 1) = 4 parameters against m = 10 features.
  auto pr = oracle::problem(9, 10, 8, {1, 2});
  const OperatorA a = assemble_A(pr.map, pr.gen, pr.theta, pr.z);
  ASSERT_LT(a.param_dim(), 10);
  const Spectrum s = spectrum(a);
  long nulls = 0;
  for (long j = 0; j < 10; ++j) nulls += s.is_null(j);
  EXPECT_GE(nulls, 10 - a.param_dim());
  const VectorX oracle_s2 = oracle::squared_singular_values(a.matrix, 10);
  long nonzero = 0;
  for (long j = 0; j < 10; ++j) nonzero += oracle_s2(j) > 1e-8 * oracle_s2(0);
  EXPECT_LT(oracle::rel(smallest_nonzero_eig(s), oracle_s2(nonzero - 1)), 1e-8);
  // A null eigenvector has zero alignment.
  EXPECT_NEAR(nullspace_alignment(s, RkhsFunction<double>(s.eigenvectors.col(9))), 0.0, 1e-12);
}

TEST(Spectrum, MatchesSvdOracle) {
  for (std::uint64_t seed = 10; seed < 15; ++seed) {
    const auto pr = oracle::problem(seed);
    const OperatorA a = assemble_A(pr.map, pr.gen, pr.theta, pr.z);
    const Spectrum s = spectrum(a);
    const VectorX s2 = oracle::squared_singular_values(a.matrix, 10);
    for (long j = 0; j < 10; ++j) {
      if (s2(j) > 1e-10 * s2(0)) {
        EXPECT_LT(oracle::rel(s.eigenvalues(j), s2(j)), 1e-8) << "j=" << j;
      }
    }
  }
}

TEST(Spectrum, DiagonalCases) {
  EXPECT_DOUBLE_EQ(smallest_nonzero_eig(diag_spectrum({4, 1, 0})), 1.0);
  EXPECT_THROW(smallest_nonzero_eig(diag_spectrum({0, 0})), DegenerateOperatorError);
  const Spectrum s = diag_spectrum({1, 0});
  for (double angle : {0.1, 0.7, 1.3, 2.9}) {
    const double c = std::cos(angle), sn = std::sin(angle);
    const VectorX f = (VectorX(2) << 2 * c, 2 * sn).finished();
    EXPECT_NEAR(nullspace_alignment(s, RkhsFunction<double>(f)), c * c / (c * c + sn * sn), 1e-14);
  }
  EXPECT_THROW(nullspace_alignment(s, RkhsFunction<double>::zero(2)), NullSpaceStallError);
  EXPECT_THROW(spectrum_of(MatrixX::Zero(2, 3)), DimensionError);
  MatrixX bad = MatrixX::Identity(2, 2);
  bad(0, 1) = std::nan("");
  EXPECT_THROW(spectrum_of(bad), NumericError);
}

TEST(Spectrum, CsvDump) {
  const OperatorA a = constant_identity_A(2);
  std::ostringstream op, sp;
  write_operator_csv(op, a);
  write_spectrum_csv(sp, spectrum(a));
  EXPECT_EQ(op.str(), "1,0\n0,1\n");
  EXPECT_EQ(sp.str(), "index,eigenvalue,is_null\n0,1,0\n1,1,0\n");
}
