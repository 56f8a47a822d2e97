#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace paramflow;

namespace {

struct Instance {
  oracle::Problem pr;
  OperatorA a;
  RkhsFunction<double> mu;
};

Instance setup(std::uint64_t seed, std::vector<long> gen_widths = {3, 6, 2}) {
  Instance s{oracle::problem(seed, 10, 8, gen_widths), {}, {}};
  s.a = assemble_A(s.pr.map, s.pr.gen, s.pr.theta, s.pr.z);
  s.mu = mean_embedding(s.pr.map, s.pr.x) - mean_embedding(s.pr.map, s.pr.gen.forward_batch(s.pr.theta, s.pr.z));
  return s;
}

OperatorA identity_A(long d) {
  LatentSampler<double> z(1, 3);
  return assemble_A(FeatureMap<double>::identity(d), Generator<double>::constant(d), oracle::randn(d, 4), z.sample(2));
}

}  // namespace

TEST(Witness, ScalarResolventWhenDIsIdentity) {
  const OperatorA a = identity_A(3);
  const RkhsFunction<double> mu(oracle::randn(3, 1));
  const RegularizationParams params{2.0, 0.5};
  const WitnessSolution sol = witness_solve(a, mu, params);
  EXPECT_LT(oracle::rel(sol.f_star.weights, mu.weights / 2.5), 1e-15);
  EXPECT_LT(oracle::rel(sol.value, mu.norm() / std::sqrt(5.0)), 1e-15);
  EXPECT_DOUBLE_EQ(mmd_ab(a, mu, params), sol.value);
}

TEST(Witness, AlphaZeroIsRidge) {
  const Instance s = setup(1);
  const WitnessSolution sol = witness_solve(s.a, s.mu, {0.0, 0.25});
  EXPECT_EQ(sol.f_star.weights, s.mu.weights / 0.25);
  EXPECT_LT(oracle::rel(sol.value, s.mu.norm() / std::sqrt(0.5)), 1e-15);
  // beta = 1/2 gives plain MMD.
  const double plain = mmd(s.pr.map, s.pr.x, s.pr.gen.forward_batch(s.pr.theta, s.pr.z));
  EXPECT_LT(oracle::rel(mmd_ab(s.a, s.mu, {0.0, 0.5}), plain), 1e-15);
}

TEST(Witness, ZeroEmbeddingDifference) {
  const Instance s = setup(2);
  const WitnessSolution sol = witness_solve(s.a, RkhsFunction<double>::zero(10), {3.0, 1.0});
  EXPECT_TRUE(sol.f_star.weights.isZero(0));
  EXPECT_EQ(sol.value, 0.0);
}

TEST(Witness, ResidualAndFingerprint) {
  const Instance s = setup(3);
  const RegularizationParams params{50.0, 0.1};
  const WitnessSolution sol = witness_solve(s.a, s.mu, params);
  const VectorX lhs = params.alpha * apply_D(s.a, sol.f_star).weights + params.beta * sol.f_star.weights;
  EXPECT_LE(oracle::rel(lhs, s.mu.weights), 1e-8);
  EXPECT_LE(sol.residual, 1e-8);
  EXPECT_EQ(sol.operator_fingerprint, s.a.fingerprint);
}

TEST(Witness, Errors) {
  const Instance s = setup(4);
  EXPECT_THROW(witness_solve(s.a, s.mu, {1.0, 0.0}), ConfigError);
  EXPECT_THROW(witness_solve(s.a, s.mu, {-1.0, 1.0}), ConfigError);
  EXPECT_THROW(witness_solve(s.a, RkhsFunction<double>::zero(3), {1.0, 1.0}), DimensionError);
  RkhsFunction<double> bad = s.mu;
  bad.weights(0) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(witness_solve(s.a, bad, {1.0, 1.0}), NumericError);
}

TEST(PlainMmdBound, BoundedByPlainMmdWithGapIdentity) {
  for (std::uint64_t seed = 100; seed < 200; ++seed) {
    const Instance s = setup(seed);
    const RegularizationParams params{std::pow(10.0, static_cast<double>(seed % 5) - 2), 0.1 + (seed % 7) * 0.2};
    const WitnessSolution sol = witness_solve(s.a, s.mu, params);
    const double lhs = std::sqrt(2 * params.beta) * sol.value;
    EXPECT_LE(lhs, s.mu.norm() * (1 + 1e-10));
    const double gap = s.mu.squared_norm() - 2 * params.beta * sol.value * sol.value;
    const double want = params.alpha * s.mu.inner(apply_D(s.a, sol.f_star));
    EXPECT_LE(std::abs(gap - want), 1e-10 * s.mu.squared_norm());
  }
}

TEST(PlainMmdBound, EqualityInNullSpace) {
  const Instance s = setup(5, {1, 2});
  const Spectrum sp = spectrum(s.a);
  const RkhsFunction<double> mu(sp.eigenvectors.col(9) * 0.7);
  ASSERT_LT((s.a.matrix * mu.weights).norm(), 1e-10);
  const RegularizationParams params{10.0, 0.3};
  EXPECT_LT(oracle::rel(std::sqrt(2 * params.beta) * mmd_ab(s.a, mu, params), mu.norm()), 1e-10);
}

TEST(Duality, RandomFeasibleNeverBeatsWitness) {
  const Instance s = setup(6);
  const RegularizationParams params{5.0, 0.5};
  const WitnessSolution sol = witness_solve(s.a, s.mu, params);
  const RkhsFunction<double> mu_p = mean_embedding(s.pr.map, s.pr.x);
  const RkhsFunction<double> mu_q = mu_p - s.mu;
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int t = 0; t < 1000; ++t) {
    RkhsFunction<double> f(oracle::randn(10, 5000 + t));
    f = std::sqrt(unif(rng)) * normalize_to_constraint(s.a, f, params);
    ASSERT_LE(constraint_value(s.a, f, params), 1 + 1e-12);
    EXPECT_LE(delta(f, mu_p, mu_q), sol.value * (1 + 1e-12));
  }
  const RkhsFunction<double> star = normalize_to_constraint(s.a, sol.f_star, params);
  EXPECT_NEAR(constraint_value(s.a, star, params), 1.0, 1e-12);
  EXPECT_LT(oracle::rel(delta(star, mu_p, mu_q), sol.value), 1e-10);
  EXPECT_EQ(constraint_value(s.a, RkhsFunction<double>::zero(10), params), 0.0);
  EXPECT_EQ(delta(RkhsFunction<double>::zero(10), mu_p, mu_q), 0.0);
  EXPECT_LT(oracle::rel(delta(s.mu, mu_p, mu_q), s.mu.squared_norm()), 1e-14);
  // Unconstrained form peaks at f* with value MMD_ab^2.
  EXPECT_LT(oracle::rel(regularized_objective(s.a, sol.f_star, s.mu, params), sol.value * sol.value), 1e-12);
  for (int t = 0; t < 20; ++t) {
    const RkhsFunction<double> g = sol.f_star + RkhsFunction<double>(oracle::randn(10, 9000 + t, 0.1));
    EXPECT_LT(regularized_objective(s.a, g, s.mu, params), regularized_objective(s.a, sol.f_star, s.mu, params));
  }
}

TEST(Duality, MonotoneInBeta) {
  const Instance s = setup(7);
  double prev = std::numeric_limits<double>::infinity();
  for (double beta : {0.01, 0.1, 1.0, 10.0}) {
    const double v = mmd_ab(s.a, s.mu, {2.0, beta});
    EXPECT_LT(v, prev);
    prev = v;
  }
}

TEST(Resolvent, ReuseAcrossRightHandSides) {
  const Instance s = setup(8);
  const Resolvent r(s.a, {4.0, 0.2});
  for (int t = 0; t < 5; ++t) {
    const VectorX b = oracle::randn(10, 70 + t);
    double res = 1;
    const VectorX x = r.solve(b, &res);
    EXPECT_LE(res, 1e-12);
    EXPECT_LT(oracle::rel(VectorX(4.0 * gram(s.a) * x + 0.2 * x), b), 1e-12);
  }
  EXPECT_THROW(r.solve(VectorX::Zero(4)), DimensionError);
}
