#pragma once

// Parametric generator G_theta: Z -> R^d. The architecture is held by the
// Generator object; theta is always passed in as a flat vector so flows can
// move it freely. Flattening order: per layer, weight row-major then bias.

#include <cstdint>
#include <random>
#include <vector>

#include "paramflow/common.hpp"
#include "paramflow/detail/relu_mlp.hpp"

namespace paramflow {

enum class GeneratorMode { mlp, constant };

template <typename T = double>
class Generator {
 public:
  Generator() = default;

  /// Rectifier MLP with widths (latent, hidden..., output).
  static Generator mlp(std::vector<long> widths) {
    if (widths.size() < 2) throw ConfigError("generator needs at least latent and output widths");
    for (long w : widths) {
      if (w < 1) throw ConfigError("generator widths must all be >= 1");
    }
    Generator g;
    g.mode_ = GeneratorMode::mlp;
    g.widths_ = std::move(widths);
    g.param_count_ = 0;
    for (std::size_t l = 0; l + 1 < g.widths_.size(); ++l) g.param_count_ += g.widths_[l + 1] * (g.widths_[l] + 1);
    return g;
  }

  /// G_theta(z) = theta, p = d. The latent dimension is irrelevant but kept
  /// so samplers and batches have a shape.
  static Generator constant(long output_dim, long latent_dim = 1) {
    if (output_dim < 1 || latent_dim < 1) throw ConfigError("constant generator needs positive dims");
    Generator g;
    g.mode_ = GeneratorMode::constant;
    g.widths_ = {latent_dim, output_dim};
    g.param_count_ = output_dim;
    return g;
  }

  GeneratorMode mode() const { return mode_; }
  const std::vector<long>& widths() const { return widths_; }
  long latent_dim() const { return widths_.front(); }
  long output_dim() const { return widths_.back(); }
  long param_count() const { return param_count_; }

  template <typename U>
  Generator<U> cast() const {
    return mode_ == GeneratorMode::constant ? Generator<U>::constant(output_dim(), latent_dim())
                                            : Generator<U>::mlp(widths_);
  }

  /// Splits theta into per-layer weights and biases.
  detail::LayerStack<T> unflatten(const Vec<T>& theta) const {
    check_theta(theta);
    detail::LayerStack<T> layers;
    if (mode_ == GeneratorMode::constant) return layers;
    long off = 0;
    for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
      const long in = widths_[l];
      const long out = widths_[l + 1];
      detail::DenseLayer<T> layer;
      layer.weight = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
          theta.data() + off, out, in);
      off += out * in;
      layer.bias = theta.segment(off, out);
      off += out;
      layers.push_back(std::move(layer));
    }
    return layers;
  }

  Vec<T> flatten(const detail::LayerStack<T>& layers) const {
    Vec<T> theta(param_count_);
    long off = 0;
    for (const auto& layer : layers) {
      const long out = layer.weight.rows();
      const long in = layer.weight.cols();
      Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(theta.data() + off, out, in) =
          layer.weight;
      off += out * in;
      theta.segment(off, out) = layer.bias;
      off += out;
    }
    if (off != param_count_) throw DimensionError("flatten: layer shapes do not match the architecture");
    return theta;
  }

  /// Weights i.i.d. N(0, 1/fan_in), biases zero. Constant mode: N(0, 1).
  Vec<T> initial_theta(std::uint64_t seed) const {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Vec<T> theta = Vec<T>::Zero(param_count_);
    if (mode_ == GeneratorMode::constant) {
      for (long i = 0; i < param_count_; ++i) theta(i) = static_cast<T>(normal(rng));
      return theta;
    }
    long off = 0;
    for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
      const long in = widths_[l];
      const long out = widths_[l + 1];
      const double scale = 1.0 / std::sqrt(static_cast<double>(in));
      for (long k = 0; k < out * in; ++k) theta(off + k) = static_cast<T>(scale * normal(rng));
      off += out * in + out;
    }
    return theta;
  }

  Vec<T> forward(const Vec<T>& theta, const Vec<T>& z) const {
    detail::require_dim(z.size(), latent_dim(), "generator forward");
    return forward_batch(theta, Mat<T>(z)).col(0);
  }

  /// Outputs for a latent batch (m_z x N) as d x N.
  Mat<T> forward_batch(const Vec<T>& theta, const Mat<T>& zs, detail::Tape<T>* tape = nullptr) const {
    detail::require_dim(zs.rows(), latent_dim(), "generator forward_batch");
    check_theta(theta);
    if (mode_ == GeneratorMode::constant) return theta.replicate(1, zs.cols());
    return detail::forward<T>(unflatten(theta), zs, tape);
  }

  /// p x d parameter Jacobian; column j is dG^j/dtheta.
  Mat<T> jacobian_theta(const Vec<T>& theta, const Vec<T>& z) const {
    detail::require_dim(z.size(), latent_dim(), "jacobian_theta");
    Mat<T> jac(param_count_, output_dim());
    if (mode_ == GeneratorMode::constant) {
      jac.setIdentity();
      return jac;
    }
    const auto layers = unflatten(theta);
    detail::Tape<T> tape;
    detail::forward<T>(layers, Mat<T>(z), &tape);
    detail::param_jacobian_sample<T>(layers, tape, 0, jac);
    return jac;
  }

  /// Jacobians of a whole batch, stacked p x (d*N); column i*d + j is
  /// dG^j/dtheta at sample i.
  Mat<T> jacobian_theta_batch(const Vec<T>& theta, const Mat<T>& zs) const {
    detail::require_dim(zs.rows(), latent_dim(), "jacobian_theta_batch");
    const long n = zs.cols();
    const long d = output_dim();
    Mat<T> jac(param_count_, d * n);
    if (mode_ == GeneratorMode::constant) {
      for (long i = 0; i < n; ++i) jac.middleCols(i * d, d).setIdentity();
      return jac;
    }
    const auto layers = unflatten(theta);
    detail::Tape<T> tape;
    detail::forward<T>(layers, zs, &tape);
    for (long i = 0; i < n; ++i) {
      auto block = jac.middleCols(i * d, d);
      detail::param_jacobian_sample<T>(layers, tape, i, block);
    }
    return jac;
  }

  /// sum_i J_theta G(z_i) cot.col(i), a p-vector.
  Vec<T> vjp_batch(const Vec<T>& theta, const Mat<T>& zs, const Mat<T>& cot) const {
    detail::require_dim(cot.rows(), output_dim(), "generator vjp");
    detail::require_dim(cot.cols(), zs.cols(), "generator vjp");
    if (mode_ == GeneratorMode::constant) {
      check_theta(theta);
      return cot.rowwise().sum();
    }
    const auto layers = unflatten(theta);
    detail::Tape<T> tape;
    detail::forward<T>(layers, zs, &tape);
    return detail::param_vjp<T>(layers, tape, cot, param_count_);
  }

  /// J_theta G(z_i)^T v for every sample, a d x N matrix.
  Mat<T> jvp_batch(const Vec<T>& theta, const Mat<T>& zs, const Vec<T>& v) const {
    detail::require_dim(v.size(), param_count_, "generator jvp");
    if (mode_ == GeneratorMode::constant) {
      check_theta(theta);
      return v.replicate(1, zs.cols());
    }
    const auto layers = unflatten(theta);
    detail::Tape<T> tape;
    detail::forward<T>(layers, zs, &tape);
    return detail::param_jvp<T>(layers, tape, v);
  }

  /// Matrix mass Gamma_theta(z, z') = J(z)^T J(z'), d x d.
  Mat<T> gamma_kernel(const Vec<T>& theta, const Vec<T>& z, const Vec<T>& z2) const {
    return jacobian_theta(theta, z).transpose() * jacobian_theta(theta, z2);
  }

 private:
  void check_theta(const Vec<T>& theta) const { detail::require_dim(theta.size(), param_count_, "theta"); }

  GeneratorMode mode_ = GeneratorMode::constant;
  std::vector<long> widths_{1, 1};
  long param_count_ = 1;
};

/// Standard normal latent stream. Single owner; split seeds for parallel use.
template <typename T = double>
class LatentSampler {
 public:
  LatentSampler(long dim, std::uint64_t seed) : dim_(dim), seed_(seed), rng_(seed) {
    if (dim < 1) throw ConfigError("latent dimension must be >= 1");
  }

  long dim() const { return dim_; }
  std::uint64_t seed() const { return seed_; }

  /// n latent vectors as columns of a dim x n matrix; advances the stream.
  Mat<T> sample(long n) {
    if (n < 1) throw ConfigError("sample_latent: n must be >= 1");
    Mat<T> z(dim_, n);
    for (long i = 0; i < n; ++i) {
      for (long r = 0; r < dim_; ++r) z(r, i) = static_cast<T>(normal_(rng_));
    }
    return z;
  }

 private:
  long dim_;
  std::uint64_t seed_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

template <typename T>
Mat<T> sample_latent(LatentSampler<T>& sampler, long n) {
  return sampler.sample(n);
}

}  // namespace paramflow
