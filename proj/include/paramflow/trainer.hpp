#pragma once

// Min-max training loop with the generator-parameter gradient penalty, fixed
// kernel: the critic is the linear read-out w on top of the frozen Phi, so the
// penalty alpha |A w|^2 is quadratic in w and its gradient is exact.
//
// Everything here is matrix-free: A w is one generator vector-Jacobian
// product, A^T v one generator tangent sweep followed by the feature
// Jacobians at the generated points.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "paramflow/common.hpp"
#include "paramflow/generator.hpp"
#include "paramflow/rkhs.hpp"
#include "paramflow/targets.hpp"

namespace paramflow {

template <typename T = double>
struct RmsPropState {
  Vec<T> accumulator;
  double rho = 0.9;
  double eps_num = 1e-8;
  double lr = 1e-4;

  RmsPropState() = default;
  RmsPropState(long n, double rho_, double eps_num_, double lr_)
      : accumulator(Vec<T>::Zero(n)), rho(rho_), eps_num(eps_num_), lr(lr_) {
    if (!(rho > 0 && rho < 1)) throw ConfigError("rmsprop: rho must lie in (0, 1)");
    if (!(eps_num > 0)) throw ConfigError("rmsprop: eps_num must be > 0");
    if (!(lr > 0)) throw ConfigError("rmsprop: learning rate must be > 0");
  }
};

/// s <- rho s + (1 - rho) g^2;  params <- params - lr g / (sqrt(s) + eps_num).
template <typename T>
void rmsprop_step(RmsPropState<T>& state, Vec<T>& params, const Vec<T>& grad) {
  detail::require_dim(grad.size(), params.size(), "rmsprop_step");
  detail::require_dim(state.accumulator.size(), params.size(), "rmsprop_step state");
  if (!grad.allFinite()) throw NumericError("rmsprop_step: non-finite gradient");
  const T rho = static_cast<T>(state.rho);
  state.accumulator = rho * state.accumulator + (T(1) - rho) * grad.cwiseAbs2();
  params.array() -= static_cast<T>(state.lr) * grad.array() /
                    (state.accumulator.array().sqrt() + static_cast<T>(state.eps_num));
}

/// Everything about a (theta, x, z) triple that the critic steps reuse.
template <typename T>
class CriticBatch {
 public:
  CriticBatch(const FeatureMap<T>& map, const Generator<T>& gen, const Vec<T>& theta, const Mat<T>& x_batch,
              const Mat<T>& z_batch)
      : gen_(&gen), n_(z_batch.cols()), d_(gen.output_dim()) {
    if (x_batch.cols() == 0 || z_batch.cols() == 0) throw DimensionError("critic: empty batch");
    detail::require_dim(map.input_dim(), gen.output_dim(), "critic feature map vs generator");
    detail::require_dim(x_batch.rows(), map.input_dim(), "critic target batch");
    mu_p_ = column_mean<T>(map.phi_batch(x_batch));
    layers_ = gen.unflatten(theta);
    if (gen.mode() == GeneratorMode::constant) {
      points_ = gen.forward_batch(theta, z_batch);
    } else {
      points_ = detail::forward<T>(layers_, z_batch, &tape_);
    }
    Mat<T> feats;
    map.phi_and_jacobian_batch(points_, feats, jac_);
    mu_q_ = column_mean<T>(feats);
    diff_ = mu_q_ - mu_p_;
  }

  long size() const { return n_; }
  const Vec<T>& mu_p() const { return mu_p_; }
  const Vec<T>& mu_q() const { return mu_q_; }
  const Vec<T>& embedding_diff() const { return diff_; }  // mu_q - mu_p
  const Mat<T>& points() const { return points_; }

  /// A w restricted to samples [start, start + count): (1/count) sum_i J_theta G(z_i) grad f(G(z_i)).
  Vec<T> apply_A(const Vec<T>& w, long start = 0, long count = -1) const {
    if (count < 0) count = n_ - start;
    Mat<T> cot = Mat<T>::Zero(d_, n_);
    for (long j = 0; j < d_; ++j) cot.row(j).segment(start, count) = w.transpose() * jac_.middleCols(j * n_ + start, count);
    Vec<T> g;
    if (gen_->mode() == GeneratorMode::constant) {
      g = cot.rowwise().sum();
    } else {
      g = detail::param_vjp<T>(layers_, tape_, std::move(cot), gen_->param_count());
    }
    return g / static_cast<T>(count);
  }

  /// A^T v over samples [start, start + count).
  Vec<T> apply_At(const Vec<T>& v, long start = 0, long count = -1) const {
    if (count < 0) count = n_ - start;
    Mat<T> t;
    if (gen_->mode() == GeneratorMode::constant) {
      t = v.replicate(1, n_);
    } else {
      t = detail::param_jvp<T>(layers_, tape_, v);
    }
    Vec<T> out = Vec<T>::Zero(jac_.rows());
    for (long j = 0; j < d_; ++j) {
      out.noalias() += jac_.middleCols(j * n_ + start, count) * t.row(j).segment(start, count).transpose();
    }
    return out / static_cast<T>(count);
  }

 private:
  const Generator<T>* gen_;
  long n_;
  long d_;
  detail::LayerStack<T> layers_;
  detail::Tape<T> tape_;
  Mat<T> points_;
  Mat<T> jac_;  // m x (d N), column j*N + i
  Vec<T> mu_p_, mu_q_, diff_;
};

struct CriticOptions {
  double alpha = 100.0;
  double ridge_beta = 0.0;  // optional (beta/2)|w|^2
  bool split_batch = false;
};

template <typename T>
struct CriticValue {
  double M = 0;
  Vec<T> grad_w;
  Vec<T> Aw;  // generator-side gradient of the batch mean of f o G
};

/// M = <w, mu_q - mu_p> + alpha |A w|^2 (+ (beta/2)|w|^2) and its gradient.
/// With split_batch the penalty is <A_1 w, A_2 w> over two disjoint halves.
template <typename T>
CriticValue<T> critic_objective(const CriticBatch<T>& batch, const Vec<T>& w, const CriticOptions& opt) {
  detail::require_dim(w.size(), batch.mu_p().size(), "critic_objective");
  CriticValue<T> out;
  const T alpha = static_cast<T>(opt.alpha);
  out.grad_w = batch.embedding_diff();
  double M = static_cast<double>(w.dot(batch.embedding_diff()));
  if (opt.split_batch) {
    const long half = batch.size() / 2;
    if (half < 1) throw DimensionError("critic: split batch needs at least 2 samples");
    const Vec<T> a1 = batch.apply_A(w, 0, half);
    const Vec<T> a2 = batch.apply_A(w, half, half);
    out.Aw = batch.apply_A(w);
    if (opt.alpha != 0) {
      M += opt.alpha * static_cast<double>(a1.dot(a2));
      out.grad_w += alpha * (batch.apply_At(a2, 0, half) + batch.apply_At(a1, half, half));
    }
  } else {
    out.Aw = batch.apply_A(w);
    if (opt.alpha != 0) {
      M += opt.alpha * static_cast<double>(out.Aw.squaredNorm());
      out.grad_w += T(2) * alpha * batch.apply_At(out.Aw);
    }
  }
  if (opt.ridge_beta != 0) {
    M += 0.5 * opt.ridge_beta * static_cast<double>(w.squaredNorm());
    out.grad_w += static_cast<T>(opt.ridge_beta) * w;
  }
  out.M = M;
  return out;
}

template <typename T>
CriticValue<T> critic_objective(const FeatureMap<T>& map, const Generator<T>& gen, const Vec<T>& theta,
                                const Vec<T>& w, const Mat<T>& x_batch, const Mat<T>& z_batch,
                                const CriticOptions& opt) {
  return critic_objective(CriticBatch<T>(map, gen, theta, x_batch, z_batch), w, opt);
}

/// d_theta = -A w, the negated theta-gradient of the batch mean of f o G.
template <typename T>
Vec<T> generator_direction(const FeatureMap<T>& map, const Generator<T>& gen, const Vec<T>& theta, const Vec<T>& w,
                           const Mat<T>& z_batch) {
  detail::require_dim(w.size(), map.feature_dim(), "generator_direction");
  detail::require_dim(theta.size(), gen.param_count(), "generator_direction");
  const Mat<T> points = gen.forward_batch(theta, z_batch);
  const Mat<T> grads = map.gradient_batch(points, w);
  return -gen.vjp_batch(theta, z_batch, grads) / static_cast<T>(z_batch.cols());
}

struct GanConfig {
  double alpha = 100.0;
  long n_critic = 5;
  long batch = 512;
  long iterations = 20000;
  double lr_critic = 1e-4;
  double lr_generator = 1e-4;
  double rho = 0.9;
  double eps_num = 1e-8;
  double ridge_beta = 0.0;
  bool split_batch = false;
  // Algorithm-literal variant: fresh (x, z) for every critic step.
  bool resample_critic_batches = false;
  std::uint64_t latent_seed = 0;
  std::uint64_t target_seed = 0;
  std::uint64_t eval_seed = 0;
  long eval_every = 100;
  long eval_samples = 8192;
  long occupancy_samples = 4096;
  long snapshot_every = 0;
  bool record_wallclock = false;

  void validate() const {
    if (!(alpha >= 0) || !std::isfinite(alpha)) throw ConfigError("gan alpha must be finite and >= 0");
    if (n_critic < 1) throw ConfigError("n_critic must be >= 1");
    if (batch < 2) throw ConfigError("batch must be >= 2");
    if (iterations < 0) throw ConfigError("iterations must be >= 0");
    if (!(lr_critic > 0) || !(lr_generator > 0)) throw ConfigError("learning rates must be > 0");
    if (!(rho > 0 && rho < 1)) throw ConfigError("rho must lie in (0, 1)");
    if (!(eps_num > 0)) throw ConfigError("eps_num must be > 0");
    if (ridge_beta < 0) throw ConfigError("ridge_beta must be >= 0");
    if (eval_every < 0 || eval_samples < 1 || occupancy_samples < 1) throw ConfigError("bad evaluation settings");
    if (snapshot_every < 0) throw ConfigError("snapshot_every must be >= 0");
  }
};

struct TrainRow {
  long iter = 0;
  double eval_mmd = std::numeric_limits<double>::quiet_NaN();
  double critic_M = 0;
  long critic_steps = 0;
  double grad_norm_w = 0;
  double grad_norm_theta = 0;
  double eps = 0;
  double wallclock_ms = 0;
};

struct TrainLog {
  std::vector<TrainRow> rows;
  std::vector<std::pair<long, VectorX>> snapshots;
  VectorX final_theta;
  VectorX final_w;
  std::vector<double> occupancy;  // share of generated samples per target mode
  MatrixX final_samples;          // d x occupancy_samples
  bool aborted = false;
  std::string abort_reason;
};

/// Nearest-mean share per mixture component.
inline std::vector<double> mode_occupancy(const MixtureTarget& target, const MatrixX& samples) {
  std::vector<double> occ(static_cast<std::size_t>(target.components()), 0.0);
  for (long i = 0; i < samples.cols(); ++i) occ[static_cast<std::size_t>(target.nearest_component(samples.col(i)))] += 1;
  for (double& o : occ) o /= static_cast<double>(samples.cols());
  return occ;
}

/// One outer iteration: n_c critic steps, then one generator step. The
/// minibatch is drawn once per iteration and shared, unless the config asks
/// for fresh batches per critic step.
template <typename T>
TrainLog train(const FeatureMap<T>& map, const Generator<T>& gen, const Vec<T>& theta0, const MixtureTarget& target,
               const GanConfig& config) {
  config.validate();
  detail::require_dim(theta0.size(), gen.param_count(), "train theta0");
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();

  TargetSampler target_stream(target, config.target_seed);
  LatentSampler<T> latent_stream(gen.latent_dim(), config.latent_seed);
  TargetSampler eval_target(target, detail::derive_seed(config.eval_seed, 1));
  LatentSampler<T> eval_latent(gen.latent_dim(), detail::derive_seed(config.eval_seed, 2));
  const Mat<T> eval_x = eval_target.sample(config.eval_samples).template cast<T>();
  const Mat<T> eval_z = eval_latent.sample(config.eval_samples);
  const Vec<T> eval_mu_p = mean_embedding(map, eval_x).weights;

  const CriticOptions opt{config.alpha, config.ridge_beta, config.split_batch};
  Vec<T> theta = theta0;
  Vec<T> w = Vec<T>::Zero(map.feature_dim());
  RmsPropState<T> state_w(w.size(), config.rho, config.eps_num, config.lr_critic);
  RmsPropState<T> state_theta(theta.size(), config.rho, config.eps_num, config.lr_generator);

  auto eval_mmd = [&]() {
    const Vec<T> mu_q = mean_embedding(map, gen.forward_batch(theta, eval_z)).weights;
    return static_cast<double>((eval_mu_p - mu_q).norm());
  };

  TrainLog log;
  for (long it = 0; it <= config.iterations; ++it) {
    if (config.snapshot_every > 0 && it % config.snapshot_every == 0) {
      log.snapshots.emplace_back(it, theta.template cast<double>());
    }
    TrainRow row;
    row.iter = it;
    if (config.eval_every > 0 && (it % config.eval_every == 0 || it == config.iterations)) row.eval_mmd = eval_mmd();
    if (it == config.iterations) {
      if (config.record_wallclock) row.wallclock_ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
      log.rows.push_back(row);
      break;
    }

    Mat<T> x = target_stream.sample(config.batch).template cast<T>();
    Mat<T> z = latent_stream.sample(config.batch);
    CriticValue<T> cv;
    bool finite = true;
    try {
      CriticBatch<T> batch(map, gen, theta, x, z);
      for (long k = 0; k < config.n_critic; ++k) {
        if (config.resample_critic_batches && k > 0) {
          x = target_stream.sample(config.batch).template cast<T>();
          z = latent_stream.sample(config.batch);
          batch = CriticBatch<T>(map, gen, theta, x, z);
        }
        cv = critic_objective(batch, w, opt);
        rmsprop_step(state_w, w, cv.grad_w);
      }
      row.critic_M = cv.M;
      row.grad_norm_w = static_cast<double>(cv.grad_w.norm());
      // Generator step on the last batch with the updated critic.
      const Vec<T> d_theta = -batch.apply_A(w);
      row.grad_norm_theta = static_cast<double>(d_theta.norm());
      rmsprop_step(state_theta, theta, d_theta);
    } catch (const NumericError&) {
      finite = false;
    }
    row.critic_steps = config.n_critic;
    row.eps = config.lr_generator;
    if (!finite || !theta.allFinite() || !w.allFinite()) {
      log.rows.push_back(row);
      log.final_theta = theta.template cast<double>();
      log.final_w = w.template cast<double>();
      log.aborted = true;
      log.abort_reason = "non-finite parameters at iteration " + std::to_string(it);
      return log;
    }
    if (config.record_wallclock) row.wallclock_ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
    log.rows.push_back(row);
  }

  log.final_theta = theta.template cast<double>();
  log.final_w = w.template cast<double>();
  const Mat<T> occ_z = eval_z.leftCols(std::min(config.occupancy_samples, eval_z.cols()));
  log.final_samples = gen.forward_batch(theta, occ_z).template cast<double>();
  log.occupancy = mode_occupancy(target, log.final_samples);
  return log;
}

}  // namespace paramflow
