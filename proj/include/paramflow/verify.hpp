#pragma once

// Property suites behind `paramflow verify`. Every check runs on a small
// seeded instance and finishes in well under a second.

#include <functional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/SVD>

#include "paramflow/discrepancy.hpp"
#include "paramflow/flow.hpp"
#include "paramflow/generator.hpp"
#include "paramflow/operators.hpp"
#include "paramflow/rkhs.hpp"
#include "paramflow/targets.hpp"
#include "paramflow/trainer.hpp"

namespace paramflow::verify {

struct CheckResult {
  std::string suite;
  std::string name;
  bool passed = false;
  std::string detail;
};

/// A small random problem: rectifier feature map, rectifier generator, a
/// latent batch and a target batch.
struct Instance {
  FeatureMap<double> map;
  Generator<double> gen;
  VectorX theta;
  MatrixX z;
  MatrixX x;
};

inline Instance small_instance(std::uint64_t seed, long m = 12, long n = 6) {
  Instance in;
  in.map = FeatureMap<double>::network(2, {16, 16}, m, detail::derive_seed(seed, 1), true);
  in.gen = Generator<double>::mlp({3, 5, 2});
  in.theta = in.gen.initial_theta(detail::derive_seed(seed, 2));
  // Nonzero biases so the bias rows of the Jacobian are exercised.
  std::mt19937_64 rng(detail::derive_seed(seed, 3));
  std::normal_distribution<double> normal(0.0, 0.3);
  for (long k = 0; k < in.theta.size(); ++k) in.theta(k) += normal(rng);
  LatentSampler<double> zs(3, detail::derive_seed(seed, 4));
  in.z = zs.sample(n);
  TargetSampler xs(eight_gaussians(1.0, 0.1, 0), detail::derive_seed(seed, 5));
  in.x = xs.sample(n + 2);
  return in;
}

inline VectorX random_vector(long n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  VectorX v(n);
  for (long i = 0; i < n; ++i) v(i) = normal(rng);
  return v;
}

inline double rel_err(double got, double want) {
  const double scale = std::max(std::abs(want), 1e-300);
  return std::abs(got - want) / scale;
}

inline double rel_err(const VectorX& got, const VectorX& want) {
  const double scale = std::max(want.norm(), 1e-300);
  return (got - want).norm() / scale;
}

/// Central differences of theta -> (1/N) sum_i f(G_theta(z_i)).
inline VectorX fd_batch_mean_gradient(const FeatureMap<double>& map, const Generator<double>& gen,
                                      const VectorX& theta, const MatrixX& z, const RkhsFunction<double>& f,
                                      double h = 1e-5) {
  VectorX g(theta.size());
  auto value = [&](const VectorX& t) { return mean_embedding(map, gen.forward_batch(t, z)).inner(f); };
  for (long k = 0; k < theta.size(); ++k) {
    VectorX tp = theta, tm = theta;
    tp(k) += h;
    tm(k) -= h;
    g(k) = (value(tp) - value(tm)) / (2 * h);
  }
  return g;
}

class Recorder {
 public:
  explicit Recorder(std::string suite) : suite_(std::move(suite)) {}

  void check(const std::string& name, bool ok, const std::string& detail = "") {
    results_.push_back({suite_, name, ok, detail});
  }

  /// Records `value <= tol`, with the value in the detail column.
  void within(const std::string& name, double value, double tol) {
    std::ostringstream os;
    os << "err=" << value << " tol=" << tol;
    check(name, value <= tol, os.str());
  }

  std::vector<CheckResult> take() { return std::move(results_); }

 private:
  std::string suite_;
  std::vector<CheckResult> results_;
};

inline std::vector<CheckResult> suite_rkhs() {
  Recorder r("rkhs");
  const auto a = FeatureMap<double>::network(2, {16, 16}, 12, 7);
  const auto b = FeatureMap<double>::network(2, {16, 16}, 12, 7);
  r.check("build is deterministic", a == b);

  const auto id = FeatureMap<double>::identity(2);
  const VectorX x0 = (VectorX(2) << 3, -1).finished();
  r.check("identity map returns x", id.phi(x0) == x0);
  r.check("identity jacobian is I", id.phi_jacobian(x0).isApprox(MatrixX::Identity(2, 2)));

  // Gram PSD
  MatrixX pts(2, 20);
  for (long i = 0; i < 20; ++i) pts.col(i) = random_vector(2, 100 + static_cast<std::uint64_t>(i));
  const MatrixX feats = a.phi_batch(pts);
  const MatrixX K = feats.transpose() * feats;
  const Eigen::SelfAdjointEigenSolver<MatrixX> es(K);
  r.check("kernel gram is PSD", es.eigenvalues().minCoeff() >= -1e-8 * es.eigenvalues().maxCoeff());

  // Jacobian against finite differences at points away from kinks.
  double worst = 0;
  long tested = 0;
  for (std::uint64_t s = 0; s < 40 && tested < 10; ++s) {
    const VectorX x = random_vector(2, 200 + s);
    detail::Tape<double> tape;
    detail::forward<double>(a.layers(), MatrixX(x), &tape);
    bool smooth = true;
    for (std::size_t l = 0; l + 1 < tape.pre.size(); ++l) smooth = smooth && tape.pre[l].cwiseAbs().minCoeff() > 1e-3;
    if (!smooth) continue;
    ++tested;
    const MatrixX J = a.phi_jacobian(x);
    for (long i = 0; i < 2; ++i) {
      VectorX xp = x, xm = x;
      xp(i) += 1e-5;
      xm(i) -= 1e-5;
      const VectorX fd = (a.phi(xp) - a.phi(xm)) / 2e-5;
      worst = std::max(worst, rel_err(VectorX(J.row(i).transpose()), fd));
    }
  }
  r.check("found smooth probe points", tested > 0);
  r.within("phi_jacobian matches finite differences", worst, 1e-4);

  const RkhsFunction<double> f(random_vector(12, 300));
  r.check("f(x) = <w, phi(x)>", a.evaluate(f, x0) == f.weights.dot(a.phi(x0)));
  r.check("|f|^2 = <w, w>", f.squared_norm() == f.weights.dot(f.weights));

  const MatrixX p1 = pts.leftCols(10), p2 = pts.rightCols(10);
  MatrixX both(2, 20);
  both << p1, p2;
  const VectorX mu_union = mean_embedding(a, both).weights;
  const VectorX mu_avg = 0.5 * (mean_embedding(a, p1).weights + mean_embedding(a, p2).weights);
  r.within("mean embedding is linear in the measure", rel_err(mu_union, mu_avg), 1e-12);
  r.check("mmd is symmetric", mmd(a, p1, p2) == mmd(a, p2, p1));
  r.check("mmd of identical batches is 0", mmd(a, p1, p1) == 0.0);
  return r.take();
}

inline std::vector<CheckResult> suite_generator() {
  Recorder r("generator");
  const Instance in = small_instance(11);
  r.check("flatten(unflatten(theta)) == theta", in.gen.flatten(in.gen.unflatten(in.theta)) == in.theta);
  r.check("param count", in.gen.param_count() == 5 * 3 + 5 + 2 * 5 + 2);

  double worst = 0;
  for (long i = 0; i < in.z.cols(); ++i) {
    const VectorX z = in.z.col(i);
    const MatrixX J = in.gen.jacobian_theta(in.theta, z);
    for (long k = 0; k < in.theta.size(); ++k) {
      VectorX tp = in.theta, tm = in.theta;
      tp(k) += 1e-5;
      tm(k) -= 1e-5;
      const VectorX fd = (in.gen.forward(tp, z) - in.gen.forward(tm, z)) / 2e-5;
      worst = std::max(worst, (VectorX(J.row(k).transpose()) - fd).norm() / std::max(J.norm(), 1e-300));
    }
  }
  r.within("jacobian_theta matches finite differences", worst, 1e-4);

  const VectorX z1 = in.z.col(0), z2 = in.z.col(1);
  const MatrixX g12 = in.gen.gamma_kernel(in.theta, z1, z2);
  const MatrixX g21 = in.gen.gamma_kernel(in.theta, z2, z1);
  r.check("gamma transpose symmetry", g12.transpose().isApprox(g21, 1e-14));
  const MatrixX g11 = in.gen.gamma_kernel(in.theta, z1, z1);
  const Eigen::SelfAdjointEigenSolver<MatrixX> es(g11);
  r.check("gamma(z, z) is PSD", es.eigenvalues().minCoeff() >= -1e-10 * g11.norm());

  const auto c = Generator<double>::constant(2);
  const VectorX t = (VectorX(2) << 2, 5).finished();
  r.check("constant generator returns theta", c.forward(t, VectorX::Zero(1)) == t);

  LatentSampler<double> s1(4, 9), s2(4, 9);
  const MatrixX b1 = s1.sample(5);
  r.check("latent stream reproducible", b1 == s2.sample(5));
  r.check("latent stream advances", s1.sample(5) != b1);
  return r.take();
}

inline std::vector<CheckResult> suite_operators() {
  Recorder r("operators");
  const Instance in = small_instance(21);
  const OperatorA A = assemble_A(in.map, in.gen, in.theta, in.z);

  double worst_adj = 0;
  for (std::uint64_t k = 0; k < 100; ++k) {
    const RkhsFunction<double> f(random_vector(A.feature_dim(), 1000 + k));
    const VectorX v = random_vector(A.param_dim(), 5000 + k);
    const double lhs = apply_L(A, f).dot(v);
    const double rhs = f.inner(apply_Lt(A, v));
    worst_adj = std::max(worst_adj, std::abs(lhs - rhs) / std::max(std::abs(lhs), 1e-300));
  }
  r.within("adjointness <Lf, v> = <f, L^T v>", worst_adj, 1e-12);

  const MatrixX D = gram(A);
  r.within("D is symmetric", (D - D.transpose()).norm() / D.norm(), 1e-15);
  const Spectrum s = spectrum(A);
  r.check("D is PSD", s.min_raw_eigenvalue >= -1e-8 * s.lambda_max());
  const MatrixX recon = s.eigenvectors * s.eigenvalues.asDiagonal() * s.eigenvectors.transpose();
  r.within("spectrum reconstructs D", (D - recon).norm() / D.norm(), 1e-8);
  r.within("eigenvectors orthonormal",
           (s.eigenvectors.transpose() * s.eigenvectors - MatrixX::Identity(D.rows(), D.cols())).norm(), 1e-8);

  const RkhsFunction<double> f(random_vector(A.feature_dim(), 77));
  const VectorX fd = fd_batch_mean_gradient(in.map, in.gen, in.theta, in.z, f);
  r.within("energy identity <f, Df> = |grad_theta E f o G|^2", rel_err(f.inner(apply_D(A, f)), fd.squaredNorm()),
           1e-3);
  r.within("apply_L matches finite differences", rel_err(apply_L(A, f), fd), 1e-4);

  // Integral representation with Gamma on a tiny instance.
  const auto map2 = FeatureMap<double>::network(2, {4}, 2, 5, true);
  const MatrixX z4 = in.z.leftCols(4);
  const OperatorA A2 = assemble_A(map2, in.gen, in.theta, z4);
  const RkhsFunction<double> f2(random_vector(2, 8)), g2(random_vector(2, 9));
  const MatrixX pts = in.gen.forward_batch(in.theta, z4);
  double dbl = 0;
  for (long i = 0; i < 4; ++i) {
    for (long k = 0; k < 4; ++k) {
      const VectorX gf = map2.gradient(f2, pts.col(i));
      const VectorX gg = map2.gradient(g2, pts.col(k));
      dbl += gf.dot(in.gen.gamma_kernel(in.theta, z4.col(i), z4.col(k)) * gg);
    }
  }
  dbl /= 16.0;
  r.within("<f, Dg> equals the Gamma double sum", rel_err(f2.inner(apply_D(A2, g2)), dbl), 1e-12);

  // Eigenvalues against squared singular values.
  const Eigen::BDCSVD<MatrixX> svd(A.matrix);
  const VectorX sv = svd.singularValues();
  double worst_sv = 0;
  for (long j = 0; j < sv.size(); ++j) {
    if (sv(j) * sv(j) > s.cutoff()) worst_sv = std::max(worst_sv, rel_err(s.eigenvalues(j), sv(j) * sv(j)));
  }
  r.within("eigenvalues equal squared singular values", worst_sv, 1e-8);
  return r.take();
}

inline std::vector<CheckResult> suite_discrepancy() {
  Recorder r("discrepancy");
  const Instance in = small_instance(31);
  const PushforwardAssembly st = assemble(in.map, in.gen, in.theta, in.z);
  const RkhsFunction<double> mu = mean_embedding(in.map, in.x) - st.mu_q;
  const RegularizationParams params{2.0, 0.5};
  const WitnessSolution w = witness_solve(st.op, mu, params);
  r.within("witness residual", w.residual, 1e-8);

  const double M = mu.norm();
  const double gap = M * M - 2 * params.beta * w.value * w.value;
  const double identity_rhs = params.alpha * mu.inner(apply_D(st.op, w.f_star));
  r.within("MMD^2 - 2 beta MMD_ab^2 = alpha <mu, D f*>", rel_err(gap, identity_rhs), 1e-10);
  r.check("sqrt(2 beta) MMD_ab <= MMD", std::sqrt(2 * params.beta) * w.value <= M * (1 + 1e-10));

  const RkhsFunction<double> fhat = normalize_to_constraint(st.op, w.f_star, params);
  r.within("normalized witness attains MMD_ab", rel_err(mu.inner(fhat), w.value), 1e-10);
  r.within("normalized witness on the boundary", std::abs(constraint_value(st.op, fhat, params) - 1.0), 1e-12);

  bool sup_ok = true;
  bool duality_ok = true;
  for (std::uint64_t k = 0; k < 1000; ++k) {
    const RkhsFunction<double> g = normalize_to_constraint(st.op, RkhsFunction<double>(random_vector(mu.dim(), k)),
                                                           params);
    sup_ok = sup_ok && mu.inner(g) <= w.value * (1 + 1e-10);
    duality_ok = duality_ok && regularized_objective(st.op, g, mu, params) <= w.value * w.value * (1 + 1e-10);
  }
  r.check("feasible f never beats MMD_ab", sup_ok);
  r.check("duality sandwich", duality_ok);
  r.within("duality attained at f*",
           rel_err(regularized_objective(st.op, w.f_star, mu, params), w.value * w.value), 1e-10);

  const WitnessSolution plain = witness_solve(st.op, mu, {0.0, 0.5});
  r.check("alpha = 0, beta = 1/2 gives plain MMD", plain.value == M);

  double prev = std::numeric_limits<double>::infinity();
  bool mono = true;
  for (double beta : {0.1, 0.2, 0.5, 1.0, 2.0}) {
    const double v = mmd_ab(st.op, mu, {params.alpha, beta});
    mono = mono && v < prev;
    prev = v;
  }
  r.check("MMD_ab strictly decreasing in beta", mono);
  return r.take();
}

inline std::vector<CheckResult> suite_flow() {
  Recorder r("flow");
  // Closed-form oracle: constant generator, identity map.
  {
    const auto map = FeatureMap<double>::identity(2);
    const auto gen = Generator<double>::constant(2);
    MatrixX target(2, 3);
    target << 1, 2, 3, -1, 0, 4;
    const VectorX m = target.rowwise().mean();
    const VectorX theta0 = (VectorX(2) << -2, 0.5).finished();
    FlowConfig cfg;
    cfg.alpha = 0.7;
    cfg.beta = 0.3;
    cfg.step.c = 0.05;
    cfg.iterations = 200;
    cfg.latent_batch = 2;
    const Trajectory tr = run_flow(map, gen, theta0, target, cfg);
    const double q = 1 - cfg.step.c / (cfg.alpha + cfg.beta);
    const double F0 = 0.5 * (m - theta0).squaredNorm();
    double worst = 0;
    bool bound = true, decay = true;
    for (const auto& row : tr.rows) {
      worst = std::max(worst, rel_err(row.F, F0 * std::pow(q, 2.0 * static_cast<double>(row.iter))));
      bound = bound && row.bound_ok;
    }
    for (auto st : decay_bound_check(tr.rows, cfg.tau)) decay = decay && st == DecayStatus::holds;
    r.within("constant/identity flow contracts by 1 - eps/(alpha+beta)", worst, 1e-10);
    r.check("constant/identity flow meets the exponential bound", bound);
    r.check("constant/identity flow meets the decay bound", decay);
    r.within("chi = 1/(alpha+beta)", rel_err(tr.rows.front().chi, 1 / (cfg.alpha + cfg.beta)), 1e-12);
  }

  const Instance in = small_instance(41);
  const PushforwardAssembly st = assemble(in.map, in.gen, in.theta, in.z);
  const RkhsFunction<double> mu_p = mean_embedding(in.map, in.x);
  FlowConfig cfg;
  cfg.alpha = 1.5;
  cfg.beta = 0.5;
  cfg.step.c = 1e-3;
  const FlowStepResult step = flow_step(in.map, in.gen, in.theta, mu_p, in.z, cfg);
  const FunctionalGradient fg = functional_gradient(MmdToTarget{mu_p}, in.map, st, {cfg.alpha, cfg.beta});
  const FlowEvaluation ev = evaluate_state(in.map, in.gen, in.theta, mu_p, in.z, cfg);
  r.within("mmd_to_target gradient is minus the flow direction", rel_err(-fg.grad, ev.direction), 1e-12);
  r.within("flow step moves along the direction", rel_err(step.theta, in.theta + cfg.step.c * ev.direction), 1e-15);
  r.check("descent rate is nonpositive", step.row.rate <= 1e-12);

  // First-derivative identity for the potential functional.
  const PotentialEnergy pot{RkhsFunction<double>(random_vector(in.map.feature_dim(), 3))};
  const RegularizationParams params{1.0, 0.5};
  const FunctionalGradient pg = functional_gradient(pot, in.map, st, params);
  const double h = 1e-5;
  auto value_at = [&](const VectorX& t) {
    return functional_value(pot, in.map, mean_embedding(in.map, in.gen.forward_batch(t, in.z)));
  };
  const double fd = (value_at(in.theta - h * pg.grad) - value_at(in.theta + h * pg.grad)) / (2 * h);
  r.within("potential: dF/dt = -[alpha |Du|^2 + beta |Au|^2]", rel_err(fd, pg.rate), 1e-3);

  const RkhsFunction<double> f(random_vector(in.map.feature_dim(), 5));
  const RkhsFunction<double> Df = apply_D(st.op, f);
  const double dir = -(cfg.alpha * Df.squared_norm() + cfg.beta * f.inner(Df));
  r.check("strict descent when A f != 0", dir < 0);

  r.within("chi arithmetic", rel_err(chi(1, 1, 0.25, 0.25), 2.0), 1e-15);
  r.within("step size bound arithmetic", rel_err(step_size_bound(10, 1, 4), 1.0 / 30.0), 1e-15);
  return r.take();
}

inline std::vector<CheckResult> suite_trainer() {
  Recorder r("trainer");
  {
    RmsPropState<double> st(1, 0.9, 1e-8, 0.01);
    VectorX p = VectorX::Zero(1);
    rmsprop_step(st, p, VectorX(VectorX::Constant(1, 4.0)));
    r.within("rmsprop first step", rel_err(p(0), -0.01 * 4 / (std::sqrt(1.6) + 1e-8)), 1e-12);
  }
  const Instance in = small_instance(51);
  const CriticBatch<double> batch(in.map, in.gen, in.theta, in.x, in.z);
  const VectorX w = random_vector(in.map.feature_dim(), 6);
  const CriticOptions opt{3.0, 0.0, false};
  const CriticValue<double> cv = critic_objective(batch, w, opt);
  VectorX fd(w.size());
  for (long k = 0; k < w.size(); ++k) {
    VectorX wp = w, wm = w;
    wp(k) += 1e-5;
    wm(k) -= 1e-5;
    fd(k) = (critic_objective(batch, wp, opt).M - critic_objective(batch, wm, opt).M) / 2e-5;
  }
  r.within("critic gradient matches finite differences", rel_err(cv.grad_w, fd), 1e-6);

  const OperatorA A = assemble_A(in.map, in.gen, in.theta, in.z);
  const VectorX pen = cv.grad_w - batch.embedding_diff();
  r.within("penalty gradient = 2 alpha L^T L w", rel_err(pen, 2 * opt.alpha * apply_Lt(A, apply_L(A, RkhsFunction<double>(w))).weights),
           1e-12);
  const VectorX dtheta = generator_direction(in.map, in.gen, in.theta, w, in.z);
  const VectorX fdg = fd_batch_mean_gradient(in.map, in.gen, in.theta, in.z, RkhsFunction<double>(w));
  r.within("generator direction = -grad of batch mean", rel_err(dtheta, VectorX(-fdg)), 1e-4);
  const CriticValue<double> cv0 = critic_objective(batch, w, CriticOptions{0.0, 0.0, false});
  r.check("alpha = 0 gradient is the embedding difference", cv0.grad_w == batch.embedding_diff());
  return r.take();
}

inline std::vector<CheckResult> suite_targets() {
  Recorder r("targets");
  const MixtureTarget t = eight_gaussians(2, 0.04, 1);
  r.check("eight components", t.components() == 8);
  r.check("mean_0 = (2, 0)", t.means(0, 0) == 2.0 && t.means(1, 0) == 0.0);
  r.check("mean_2 = (0, 2)", t.means(0, 2) == 0.0 && t.means(1, 2) == 2.0);
  TargetSampler a(t, 3), b(t, 3);
  const MatrixX s = a.sample(10000);
  r.check("sampler reproducible", s == b.sample(10000));
  const auto occ = mode_occupancy(t, s);
  bool in_band = true;
  const double sd = std::sqrt(0.125 * 0.875 / 10000.0);
  for (double o : occ) in_band = in_band && std::abs(o - 0.125) <= 3 * sd;
  r.check("occupancy within 3 sigma of uniform", in_band);
  return r.take();
}

using Suite = std::function<std::vector<CheckResult>()>;

inline const std::vector<std::pair<std::string, Suite>>& suites() {
  static const std::vector<std::pair<std::string, Suite>> all{
      {"rkhs", suite_rkhs},       {"generator", suite_generator}, {"operators", suite_operators},
      {"discrepancy", suite_discrepancy}, {"flow", suite_flow},   {"trainer", suite_trainer},
      {"targets", suite_targets}};
  return all;
}

/// Runs one suite by name, or every suite for "all". Throws ConfigError for
/// unknown names.
inline std::vector<CheckResult> run(const std::string& name) {
  std::vector<CheckResult> out;
  bool found = false;
  for (const auto& [suite_name, suite] : suites()) {
    if (name != "all" && name != suite_name) continue;
    found = true;
    try {
      auto res = suite();
      out.insert(out.end(), res.begin(), res.end());
    } catch (const std::exception& e) {
      out.push_back({suite_name, "suite raised", false, e.what()});
    }
  }
  if (!found) {
    std::string names = "all";
    for (const auto& s : suites()) names += ", " + s.first;
    throw ConfigError("unknown suite '" + name + "' (valid: " + names + ")");
  }
  return out;
}

}  // namespace paramflow::verify
