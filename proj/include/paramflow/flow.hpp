#pragma once

// Exact-solve discrete flow: at every step the witness of MMD_{alpha,beta} is
// solved for directly and theta moves along L_theta f. Also hosts the flows
// of general functionals under the metric g_theta and the convergence
// diagnostics that go with them.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "paramflow/discrepancy.hpp"
#include "paramflow/generator.hpp"
#include "paramflow/operators.hpp"
#include "paramflow/rkhs.hpp"

namespace paramflow {

enum class BetaRule { fixed, adaptive };
enum class StepSchedule { constant, inv_sqrt, inv };

struct StepSizeSchedule {
  StepSchedule kind = StepSchedule::constant;
  double c = 1e-3;

  /// eps_ell for ell = 1, 2, ...
  double at(long ell) const {
    const double l = static_cast<double>(std::max<long>(ell, 1));
    switch (kind) {
      case StepSchedule::constant:
        return c;
      case StepSchedule::inv_sqrt:
        return c / std::sqrt(l);
      case StepSchedule::inv:
        return c / l;
    }
    return c;
  }
};

/// Probe counts for the empirical Lipschitz estimates.
struct LipschitzProbe {
  long point_pairs = 64;   // x-pairs for L and L~
  long theta_pairs = 8;    // theta-perturbations per latent probe
  long latent_probes = 32; // z samples averaged for E[D], E[D^2], E[D~]
  double point_radius = 0.5;
  double theta_radius = 1e-2;
  std::uint64_t seed = 0;

  void validate() const {
    if (point_pairs < 2 || theta_pairs < 2 || latent_probes < 2) {
      throw ConfigError("estimate_lipschitz: every probe count must be >= 2");
    }
    if (!(point_radius > 0) || !(theta_radius > 0)) throw ConfigError("estimate_lipschitz: radii must be > 0");
  }
};

struct FlowConfig {
  double alpha = 100.0;
  double beta = 1.0;
  BetaRule beta_rule = BetaRule::fixed;
  StepSizeSchedule step;
  long target_batch = 512;
  long latent_batch = 512;
  long iterations = 100;
  double tau = 0.5;
  std::uint64_t latent_seed = 0;
  bool resample_latent = false;
  double f_tolerance = 0.0;  // stop once F <= f_tolerance (0 disables)
  bool halt_on_stall = false;
  bool backtrack = false;
  int max_backtracks = 10;
  double rank_threshold = kDefaultRankThreshold;
  bool compute_spectrum = true;
  // C for the step-size condition; 0 means estimate it at theta_0.
  double lipschitz_C = 0.0;
  bool estimate_C = true;
  LipschitzProbe probe;
  long snapshot_every = 0;  // 0 disables theta snapshots
  bool record_wallclock = false;

  /// alpha actually used; the adaptive rule pins it to tau / 2.
  double effective_alpha() const { return beta_rule == BetaRule::adaptive ? 0.5 * tau : alpha; }

  void validate() const {
    if (!(tau > 0 && tau < 1)) throw ConfigError("tau must lie in (0, 1)");
    if (beta_rule == BetaRule::fixed) {
      if (!std::isfinite(alpha) || !(alpha > 0)) throw ConfigError("flow alpha must be finite and > 0");
      if (!std::isfinite(beta) || !(beta > 0)) throw ConfigError("flow beta must be finite and > 0");
    }
    if (!(step.c > 0) || !std::isfinite(step.c)) throw ConfigError("step size constant must be finite and > 0");
    if (target_batch < 1 || latent_batch < 1) throw ConfigError("batch sizes must be >= 1");
    if (iterations < 0) throw ConfigError("iterations must be >= 0");
    if (max_backtracks < 0) throw ConfigError("max_backtracks must be >= 0");
    if (!(rank_threshold > 0 && rank_threshold < 1)) throw ConfigError("rank_threshold must lie in (0, 1)");
    if (lipschitz_C < 0) throw ConfigError("lipschitz_C must be >= 0");
    if (snapshot_every < 0) throw ConfigError("snapshot_every must be >= 0");
  }
};

/// One trajectory row. Row `iter` describes the state after `iter` steps and
/// the step taken from it.
struct FlowDiagnostics {
  long iter = 0;
  double F = 0;
  double mmd = 0;
  double mmd_ab = 0;
  double lambda_i = 0;
  double a = 0;
  double chi = 0;
  double eps = 0;
  double bound = 0;
  double rate = 0;
  double rate_residual = std::numeric_limits<double>::quiet_NaN();
  bool stepcond_ok = false;
  double wallclock_ms = 0;
  double alpha = 0;
  double beta = 0;
  bool null_ok = false;
  bool bound_ok = false;
  bool degenerate = false;
  int backtracks = 0;
};

// ---------------------------------------------------------------------------
// Scalar diagnostics

/// Continuous-time rate dF/dt = -(2/alpha) (F - beta MMD_{alpha,beta}^2).
inline double descent_rate(double F, double mmd_ab_value, double alpha, double beta) {
  if (!(alpha > 0)) throw ConfigError("descent_rate: alpha must be > 0");
  return -(2.0 / alpha) * (F - beta * mmd_ab_value * mmd_ab_value);
}

inline double chi(double lambda_i, double a, double alpha, double beta) {
  if (!(a > 0)) throw NullSpaceStallError("chi: alignment a must be > 0");
  if (!(lambda_i > 0)) throw DegenerateOperatorError("chi: lambda_i must be > 0");
  if (!(alpha > 0) || !(beta > 0)) throw ConfigError("chi: alpha and beta must be > 0");
  return lambda_i * a / (alpha * lambda_i * a + beta);
}

/// Largest eps allowed by 2 C (2 beta)^-1 (1 + sqrt(F_1)) <= 1 / eps.
inline double step_size_bound(double C, double beta, double F_initial) {
  if (!(C > 0)) throw ConfigError("step_size_bound: C must be > 0");
  if (!(beta > 0)) throw ConfigError("step_size_bound: beta must be > 0");
  if (!(F_initial >= 0)) throw ConfigError("step_size_bound: F must be >= 0");
  return beta / (C * (1.0 + std::sqrt(F_initial)));
}

// ---------------------------------------------------------------------------
// Lipschitz estimates

struct LipschitzEstimate {
  double L = 0;        // |Phi(x) - Phi(y)| <= L |x - y|
  double L_tilde = 0;  // |JPhi(x) - JPhi(y)|_F <= L~ |x - y|
  double mean_D = 0;   // E[D(z)]
  double mean_D2 = 0;  // E[D(z)^2]
  double mean_D_tilde = 0;
  double C1 = 0, C2 = 0, C3 = 0, C4 = 0;
  double C = 0;
  long point_pairs = 0;
  long theta_pairs = 0;
};

namespace detail {

/// Frobenius distance between two stacked Jacobian blocks.
inline double block_distance(const MatrixX& a, const MatrixX& b) { return (a - b).norm(); }

}  // namespace detail

/// Empirical maxima of difference quotients. Probe k is drawn from its own
/// derived stream, so a run with more pairs extends the earlier probe set and
/// every estimate is a running max over a growing set.
inline LipschitzEstimate estimate_lipschitz(const FeatureMap<double>& map, const Generator<double>& gen,
                                            const VectorX& theta, const LipschitzProbe& probe) {
  probe.validate();
  const long d = gen.output_dim();
  const long p = gen.param_count();
  detail::require_dim(map.input_dim(), d, "estimate_lipschitz");
  LipschitzEstimate est;
  est.point_pairs = probe.point_pairs;
  est.theta_pairs = probe.theta_pairs;

  LatentSampler<double> zs_sampler(gen.latent_dim(), detail::derive_seed(probe.seed, 1));
  const MatrixX zs = zs_sampler.sample(probe.latent_probes);
  const MatrixX base = gen.forward_batch(theta, zs);

  // Kernel side: pairs (x, x + r u) around pushforward points.
  for (long k = 0; k < probe.point_pairs; ++k) {
    std::mt19937_64 rng(detail::derive_seed(probe.seed, 1000 + static_cast<std::uint64_t>(k)));
    std::normal_distribution<double> normal(0.0, 1.0);
    const VectorX x = base.col(k % base.cols());
    VectorX u(d);
    for (long j = 0; j < d; ++j) u(j) = normal(rng);
    if (u.norm() == 0) continue;
    const VectorX y = x + probe.point_radius * u / u.norm();
    MatrixX pts(d, 2);
    pts.col(0) = x;
    pts.col(1) = y;
    MatrixX feats, jac;
    map.phi_and_jacobian_batch(pts, feats, jac);
    const double dist = (x - y).norm();
    est.L = std::max(est.L, (feats.col(0) - feats.col(1)).norm() / dist);
    double jd2 = 0;
    for (long j = 0; j < d; ++j) jd2 += (jac.col(2 * j) - jac.col(2 * j + 1)).squaredNorm();
    est.L_tilde = std::max(est.L_tilde, std::sqrt(jd2) / dist);
  }

  // Generator side: theta perturbations shared by every latent probe.
  VectorX D = VectorX::Zero(probe.latent_probes);
  VectorX D_tilde = VectorX::Zero(probe.latent_probes);
  const MatrixX jac0 = gen.jacobian_theta_batch(theta, zs);
  for (long k = 0; k < probe.theta_pairs; ++k) {
    std::mt19937_64 rng(detail::derive_seed(probe.seed, 2000 + static_cast<std::uint64_t>(k)));
    std::normal_distribution<double> normal(0.0, 1.0);
    VectorX u(p);
    for (long j = 0; j < p; ++j) u(j) = normal(rng);
    const VectorX delta = probe.theta_radius * u / u.norm();
    const VectorX theta2 = theta + delta;
    const double dist = delta.norm();
    const MatrixX out2 = gen.forward_batch(theta2, zs);
    const MatrixX jac2 = gen.jacobian_theta_batch(theta2, zs);
    for (long i = 0; i < probe.latent_probes; ++i) {
      D(i) = std::max(D(i), (out2.col(i) - base.col(i)).norm() / dist);
      const double jd = detail::block_distance(jac2.middleCols(i * d, d), jac0.middleCols(i * d, d));
      D_tilde(i) = std::max(D_tilde(i), jd / dist);
    }
  }
  est.mean_D = D.mean();
  est.mean_D2 = D.squaredNorm() / static_cast<double>(D.size());
  est.mean_D_tilde = D_tilde.mean();
  est.C1 = est.L * est.mean_D;
  est.C2 = std::sqrt(static_cast<double>(d * p)) * est.L * est.mean_D;
  est.C3 = std::sqrt(static_cast<double>(p)) * est.L_tilde * est.mean_D2;
  est.C4 = std::sqrt(static_cast<double>(d)) * est.L * est.mean_D_tilde;
  // The cross term carries |mu_{p-q}| = sqrt(2 F), hence the sqrt(2).
  est.C = est.C1 * est.C2 + std::sqrt(2.0) * (est.C3 + est.C4);
  return est;
}

// ---------------------------------------------------------------------------
// Exact-solve step

/// Everything known about one state theta_ell: operator, witness and the
/// spectral quantities used by the step-size and decay diagnostics.
struct FlowEvaluation {
  PushforwardAssembly assembly;
  RkhsFunction<double> mu_diff;
  double F = 0;
  double mmd = 0;
  RegularizationParams params;
  WitnessSolution witness;
  std::optional<Spectrum> spec;
  double lambda_i = std::numeric_limits<double>::quiet_NaN();
  double a = std::numeric_limits<double>::quiet_NaN();
  double chi = std::numeric_limits<double>::quiet_NaN();
  bool degenerate = false;
  VectorX direction;  // L_theta f = A w
  double rate = 0;
};

inline FlowEvaluation evaluate_state(const FeatureMap<double>& map, const Generator<double>& gen,
                                     const VectorX& theta, const RkhsFunction<double>& target_mu,
                                     const MatrixX& latent_batch, const FlowConfig& config) {
  detail::require_dim(target_mu.dim(), map.feature_dim(), "flow target embedding");
  FlowEvaluation ev;
  ev.assembly = assemble(map, gen, theta, latent_batch);
  ev.mu_diff = target_mu - ev.assembly.mu_q;
  ev.mmd = ev.mu_diff.norm();
  ev.F = 0.5 * ev.mmd * ev.mmd;

  const MatrixX D = gram(ev.assembly.op);
  const double alpha = config.effective_alpha();
  if (config.compute_spectrum || config.beta_rule == BetaRule::adaptive) {
    ev.spec = spectrum_of(D, config.rank_threshold);
    try {
      ev.lambda_i = smallest_nonzero_eig(*ev.spec);
    } catch (const DegenerateOperatorError&) {
      ev.degenerate = true;
      ev.lambda_i = 0;
    }
  }
  ev.params.alpha = alpha;
  ev.params.beta = config.beta;
  // A degenerate operator has no lambda_i; fall back to the configured beta.
  if (config.beta_rule == BetaRule::adaptive && !ev.degenerate) ev.params.beta = alpha * ev.lambda_i;

  const Resolvent resolvent(D, ev.params);
  ev.witness = witness_solve(resolvent, ev.mu_diff, ev.assembly.op.fingerprint);
  ev.direction = apply_L(ev.assembly.op, ev.witness.f_star);
  ev.rate = descent_rate(ev.F, ev.witness.value, ev.params.alpha, ev.params.beta);

  if (ev.spec) {
    if (ev.witness.f_star.squared_norm() > 0) {
      ev.a = nullspace_alignment(*ev.spec, ev.witness.f_star);
    } else {
      ev.a = 1.0;  // f = 0 has nothing in the null space
    }
    ev.chi = (ev.a > 0 && ev.lambda_i > 0) ? chi(ev.lambda_i, ev.a, ev.params.alpha, ev.params.beta) : 0.0;
  }
  return ev;
}

struct FlowStepResult {
  VectorX theta;
  FlowDiagnostics row;
};

/// Row for an evaluated state plus the update theta + eps A w.
inline FlowStepResult step_from(const FlowEvaluation& ev, const VectorX& theta, double eps, long iter,
                                double tau) {
  FlowStepResult out;
  out.theta = theta + eps * ev.direction;
  if (!out.theta.allFinite()) throw NumericError("flow_step: non-finite theta after update");
  auto& r = out.row;
  r.iter = iter;
  r.F = ev.F;
  r.mmd = ev.mmd;
  r.mmd_ab = ev.witness.value;
  r.lambda_i = ev.lambda_i;
  r.a = ev.a;
  r.chi = ev.chi;
  r.eps = eps;
  r.rate = ev.rate;
  r.alpha = ev.params.alpha;
  r.beta = ev.params.beta;
  r.null_ok = ev.a > tau;
  r.degenerate = ev.degenerate;
  return out;
}

/// One update theta_{ell+1} = theta_ell + eps_ell L_theta f_ell on a given
/// latent batch. `ell` selects eps from the schedule (1-based).
inline FlowStepResult flow_step(const FeatureMap<double>& map, const Generator<double>& gen, const VectorX& theta,
                                const RkhsFunction<double>& target_mu, const MatrixX& latent_batch,
                                const FlowConfig& config, long ell = 1) {
  config.validate();
  const FlowEvaluation ev = evaluate_state(map, gen, theta, target_mu, latent_batch, config);
  return step_from(ev, theta, config.step.at(ell), ell - 1, config.tau);
}

struct Trajectory {
  std::vector<FlowDiagnostics> rows;
  std::vector<std::pair<long, VectorX>> snapshots;
  std::optional<LipschitzEstimate> lipschitz;
  double step_bound_C = 0;
  std::string stop_reason = "iterations";
  bool aborted = false;
  VectorX final_theta;
};

/// Iterates flow_step. The trajectory holds iterations + 1 rows; the last
/// row is the final state with eps = 0.
inline Trajectory run_flow(const FeatureMap<double>& map, const Generator<double>& gen, const VectorX& theta0,
                           const MatrixX& target_samples, const FlowConfig& config) {
  config.validate();
  detail::require_dim(theta0.size(), gen.param_count(), "run_flow theta0");
  if (target_samples.cols() == 0) throw DimensionError("run_flow: empty target batch");
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();

  Trajectory traj;
  const RkhsFunction<double> target_mu = mean_embedding(map, target_samples);
  LatentSampler<double> latent(gen.latent_dim(), config.latent_seed);
  MatrixX z = latent.sample(config.latent_batch);

  traj.step_bound_C = config.lipschitz_C;
  if (traj.step_bound_C == 0 && config.estimate_C) {
    traj.lipschitz = estimate_lipschitz(map, gen, theta0, config.probe);
    traj.step_bound_C = traj.lipschitz->C;
  }

  VectorX theta = theta0;
  try {
    FlowEvaluation ev = evaluate_state(map, gen, theta, target_mu, z, config);
    const double F1 = ev.F;
    double chi_sum = 0;

    for (long it = 0;; ++it) {
      if (config.snapshot_every > 0 && it % config.snapshot_every == 0) traj.snapshots.emplace_back(it, theta);
      const bool last = it == config.iterations;
      const bool converged = config.f_tolerance > 0 && ev.F <= config.f_tolerance;
      const double eps = (last || converged) ? 0.0 : config.step.at(it + 1);
      FlowStepResult res = step_from(ev, theta, eps, it, config.tau);
      FlowDiagnostics& row = res.row;
      row.bound = F1 * std::exp(-chi_sum);
      row.bound_ok = row.F <= row.bound * (1 + 1e-12) + 1e-300;
      if (traj.step_bound_C > 0) row.stepcond_ok = eps <= step_size_bound(traj.step_bound_C, ev.params.beta, F1);

      if (last || converged) {
        if (config.record_wallclock) {
          row.wallclock_ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
        }
        traj.rows.push_back(row);
        if (converged && !last) traj.stop_reason = "f_tolerance";
        break;
      }

      if (config.resample_latent) z = latent.sample(config.latent_batch);
      FlowEvaluation next = evaluate_state(map, gen, res.theta, target_mu, z, config);
      double step = eps;
      int backtracks = 0;
      while (config.backtrack && next.spec && !(next.a > config.tau) && backtracks < config.max_backtracks) {
        step *= 0.5;
        ++backtracks;
        res.theta = theta + step * ev.direction;
        next = evaluate_state(map, gen, res.theta, target_mu, z, config);
      }
      FlowDiagnostics& final_row = res.row;
      if (backtracks > 0) {
        final_row.backtracks = backtracks;
        final_row.eps = step;
        if (traj.step_bound_C > 0) final_row.stepcond_ok = step <= step_size_bound(traj.step_bound_C, ev.params.beta, F1);
      }
      if (std::abs(final_row.rate) > 0) {
        final_row.rate_residual = std::abs((next.F - ev.F) / step - final_row.rate) / std::abs(final_row.rate);
      } else {
        final_row.rate_residual = std::abs(next.F - ev.F) / step;
      }
      if (config.record_wallclock) {
        final_row.wallclock_ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
      }
      traj.rows.push_back(final_row);
      if (std::isfinite(ev.chi)) chi_sum += step * ev.chi;

      theta = std::move(res.theta);
      ev = std::move(next);
      const bool stalled = ev.spec && !(ev.a > config.tau);
      if (stalled && config.halt_on_stall) {
        FlowStepResult tail = step_from(ev, theta, 0.0, it + 1, config.tau);
        tail.row.bound = F1 * std::exp(-chi_sum);
        tail.row.bound_ok = tail.row.F <= tail.row.bound * (1 + 1e-12) + 1e-300;
        traj.rows.push_back(tail.row);
        traj.stop_reason = "null_space_stall";
        break;
      }
    }
  } catch (const NumericError& e) {
    // Divergence: keep the rows recorded so far.
    traj.aborted = true;
    traj.stop_reason = e.what();
  }
  traj.final_theta = theta;
  return traj;
}

// ---------------------------------------------------------------------------
// General functionals

struct MmdToTarget {
  RkhsFunction<double> mu_p;
};
struct PotentialEnergy {
  RkhsFunction<double> V;
};
struct InteractionEnergy {
  RkhsFunction<double> f;
  RkhsFunction<double> g;
};
/// F(q) = sum_k w_k f(mu_q(x_k)), a quadrature of int f(mu_q(x)) dx.
struct EntropyFunctional {
  std::function<double(double)> f;
  std::function<double(double)> fprime;
  MatrixX nodes;  // d x K
  VectorX weights;
};

using FunctionalSpec = std::variant<MmdToTarget, PotentialEnergy, InteractionEnergy, EntropyFunctional>;

inline MmdToTarget mmd_to_target(const FeatureMap<double>& map, const MatrixX& target_samples) {
  return MmdToTarget{mean_embedding(map, target_samples)};
}

/// Tensor grid with n points per axis over [lo, hi]^d and equal cell weights.
inline std::pair<MatrixX, VectorX> uniform_grid(long d, double lo, double hi, long n) {
  if (d < 1 || d > 2) throw ConfigError("uniform_grid: only d = 1 or d = 2 is supported");
  if (n < 2 || !(hi > lo)) throw ConfigError("uniform_grid: need n >= 2 and hi > lo");
  const long total = d == 1 ? n : n * n;
  MatrixX nodes(d, total);
  const double h = (hi - lo) / static_cast<double>(n - 1);
  for (long k = 0; k < total; ++k) {
    nodes(0, k) = lo + h * static_cast<double>(k % n);
    if (d == 2) nodes(1, k) = lo + h * static_cast<double>(k / n);
  }
  const double cell = std::pow(hi - lo, static_cast<double>(d)) / static_cast<double>(total);
  return {nodes, VectorX::Constant(total, cell)};
}

namespace detail {

inline void check_entropy(const EntropyFunctional& e, const FeatureMap<double>& map) {
  if (e.nodes.cols() == 0) throw ConfigError("entropy functional needs a quadrature set");
  if (!e.f || !e.fprime) throw ConfigError("entropy functional needs f and f'");
  require_dim(e.nodes.rows(), map.input_dim(), "entropy quadrature nodes");
  require_dim(e.weights.size(), e.nodes.cols(), "entropy quadrature weights");
}

}  // namespace detail

/// Value of the functional at the pushforward embedding mu_q.
inline double functional_value(const FunctionalSpec& spec, const FeatureMap<double>& map,
                               const RkhsFunction<double>& mu_q) {
  return std::visit(
      [&](const auto& s) -> double {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, MmdToTarget>) {
          detail::require_dim(s.mu_p.dim(), mu_q.dim(), "mmd_to_target");
          return 0.5 * (s.mu_p.weights - mu_q.weights).squaredNorm();
        } else if constexpr (std::is_same_v<S, PotentialEnergy>) {
          return s.V.inner(mu_q);
        } else if constexpr (std::is_same_v<S, InteractionEnergy>) {
          return s.f.inner(mu_q) * s.g.inner(mu_q);
        } else {
          detail::check_entropy(s, map);
          const VectorX vals = map.phi_batch(s.nodes).transpose() * mu_q.weights;
          double total = 0;
          for (long k = 0; k < vals.size(); ++k) total += s.weights(k) * s.f(vals(k));
          return total;
        }
      },
      spec);
}

/// h_theta: the first variation of the functional in feature coordinates.
inline RkhsFunction<double> functional_derivative(const FunctionalSpec& spec, const FeatureMap<double>& map,
                                                  const RkhsFunction<double>& mu_q) {
  return std::visit(
      [&](const auto& s) -> RkhsFunction<double> {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, MmdToTarget>) {
          detail::require_dim(s.mu_p.dim(), mu_q.dim(), "mmd_to_target");
          return mu_q - s.mu_p;
        } else if constexpr (std::is_same_v<S, PotentialEnergy>) {
          detail::require_dim(s.V.dim(), mu_q.dim(), "potential");
          return s.V;
        } else if constexpr (std::is_same_v<S, InteractionEnergy>) {
          return s.f.inner(mu_q) * s.g + s.g.inner(mu_q) * s.f;
        } else {
          detail::check_entropy(s, map);
          const MatrixX feats = map.phi_batch(s.nodes);
          const VectorX vals = feats.transpose() * mu_q.weights;
          VectorX coef(vals.size());
          for (long k = 0; k < vals.size(); ++k) coef(k) = s.weights(k) * s.fprime(vals(k));
          return RkhsFunction<double>(feats * coef);
        }
      },
      spec);
}

struct FunctionalGradient {
  RkhsFunction<double> h;
  RkhsFunction<double> u;  // (alpha D + beta I) u = h
  VectorX grad;            // A u; the flow moves theta along -grad
  double rate = 0;         // -[alpha |D u|^2 + beta |A u|^2]
};

inline FunctionalGradient functional_gradient(const FunctionalSpec& spec, const FeatureMap<double>& map,
                                              const PushforwardAssembly& state, const RegularizationParams& params) {
  params.validate();
  FunctionalGradient out;
  out.h = functional_derivative(spec, map, state.mu_q);
  detail::require_dim(out.h.dim(), state.op.feature_dim(), "functional_gradient");
  const Resolvent resolvent(state.op, params);
  out.u = RkhsFunction<double>(resolvent.solve(out.h.weights));
  out.grad = apply_L(state.op, out.u);
  const RkhsFunction<double> Du = apply_Lt(state.op, out.grad);
  out.rate = -(params.alpha * Du.squared_norm() + params.beta * out.grad.squaredNorm());
  return out;
}

/// g_theta(xi_1, xi_2) = alpha <D phi_1, D phi_2> + beta <A phi_1, A phi_2>.
inline double metric_tensor(const OperatorA& a, const RkhsFunction<double>& phi1, const RkhsFunction<double>& phi2,
                            const RegularizationParams& params) {
  const VectorX l1 = apply_L(a, phi1);
  const VectorX l2 = apply_L(a, phi2);
  const VectorX d1 = a.matrix.transpose() * l1;
  const VectorX d2 = a.matrix.transpose() * l2;
  return params.alpha * d1.dot(d2) + params.beta * l1.dot(l2);
}

struct FunctionalFlowRow {
  long iter = 0;
  double value = 0;
  double rate = 0;
  double grad_norm = 0;
  double eps = 0;
};

/// Explicit Euler on theta' = -A u over a fixed latent batch.
inline std::vector<FunctionalFlowRow> run_functional_flow(const FunctionalSpec& spec, const FeatureMap<double>& map,
                                                          const Generator<double>& gen, VectorX theta,
                                                          const MatrixX& latent_batch,
                                                          const RegularizationParams& params, double eps,
                                                          long iterations, VectorX* final_theta = nullptr) {
  if (!(eps > 0)) throw ConfigError("functional flow: eps must be > 0");
  std::vector<FunctionalFlowRow> rows;
  for (long it = 0; it <= iterations; ++it) {
    const PushforwardAssembly state = assemble(map, gen, theta, latent_batch);
    const FunctionalGradient g = functional_gradient(spec, map, state, params);
    FunctionalFlowRow r;
    r.iter = it;
    r.value = functional_value(spec, map, state.mu_q);
    r.rate = g.rate;
    r.grad_norm = g.grad.norm();
    r.eps = it < iterations ? eps : 0.0;
    rows.push_back(r);
    if (it == iterations) break;
    theta -= eps * g.grad;
    if (!theta.allFinite()) throw NumericError("functional flow: non-finite theta");
  }
  if (final_theta != nullptr) *final_theta = theta;
  return rows;
}

// ---------------------------------------------------------------------------
// Decay bound

enum class DecayStatus { holds, violated, not_covered };

/// Checks F_t <= F_0 exp(-sum_{s<t} eps_s lambda_s a_s gamma_s / (alpha lambda_s a_s + beta)) with a left
/// Riemann sum. Rows after any step with a <= tau are not covered by the
/// statement and are reported as such.
inline std::vector<DecayStatus> decay_bound_check(const std::vector<FlowDiagnostics>& rows, double tau,
                                                  const std::function<double(const FlowDiagnostics&)>& gamma_fn) {
  std::vector<DecayStatus> out;
  if (rows.empty()) return out;
  const double F0 = rows.front().F;
  double sum = 0;
  bool covered = true;
  for (std::size_t t = 0; t < rows.size(); ++t) {
    const auto& r = rows[t];
    if (std::isnan(r.lambda_i) || std::isnan(r.a)) throw ConfigError("decay_bound_check: trajectory lacks lambda_i / a");
    covered = covered && r.a > tau;
    if (!covered) {
      out.push_back(DecayStatus::not_covered);
    } else {
      const double bound = F0 * std::exp(-sum);
      out.push_back(r.F <= bound * (1 + 1e-12) + 1e-300 ? DecayStatus::holds : DecayStatus::violated);
    }
    const double la = r.lambda_i * r.a;
    sum += r.eps * la * gamma_fn(r) / (r.alpha * la + r.beta);
  }
  return out;
}

inline std::vector<DecayStatus> decay_bound_check(const std::vector<FlowDiagnostics>& rows, double tau) {
  return decay_bound_check(rows, tau, [](const FlowDiagnostics&) { return 2.0; });
}

}  // namespace paramflow
