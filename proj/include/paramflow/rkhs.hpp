#pragma once

// Finite-dimensional RKHS realized by a frozen random rectifier network
// Phi: R^d -> R^m. The kernel is k(x, y) = <Phi(x), Phi(y)>, a function in
// the space is a weight vector w with f(x) = <w, Phi(x)>, and mean embeddings
// live in the same coordinates.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "paramflow/common.hpp"
#include "paramflow/detail/relu_mlp.hpp"

namespace paramflow {

/// f(x) = <weights, Phi(x)>. Also used for mean embeddings.
template <typename T = double>
struct RkhsFunction {
  Vec<T> weights;

  RkhsFunction() = default;
  explicit RkhsFunction(Vec<T> w) : weights(std::move(w)) {}
  static RkhsFunction zero(long m) { return RkhsFunction(Vec<T>::Zero(m)); }

  long dim() const { return weights.size(); }
  T norm() const { return weights.norm(); }
  T squared_norm() const { return weights.squaredNorm(); }
  T inner(const RkhsFunction& other) const {
    detail::require_dim(other.dim(), dim(), "RkhsFunction::inner");
    return weights.dot(other.weights);
  }

  friend RkhsFunction operator+(const RkhsFunction& a, const RkhsFunction& b) {
    return RkhsFunction(a.weights + b.weights);
  }
  friend RkhsFunction operator-(const RkhsFunction& a, const RkhsFunction& b) {
    return RkhsFunction(a.weights - b.weights);
  }
  friend RkhsFunction operator*(T s, const RkhsFunction& a) { return RkhsFunction(s * a.weights); }
};

enum class FeatureMode { network, identity };

/// Frozen feature map. Weights are regenerated from (seed, widths, scaling)
/// and never change after construction.
template <typename T = double>
class FeatureMap {
 public:
  FeatureMap() = default;

  /// Random rectifier network d -> hidden... -> m with N(0, 1) weights and
  /// biases (optionally scaled by 1/sqrt(fan_in)).
  static FeatureMap network(long input_dim, std::vector<long> hidden, long feature_dim, std::uint64_t seed,
                            bool fan_in_scaling = false) {
    FeatureMap map;
    map.mode_ = FeatureMode::network;
    map.seed_ = seed;
    map.fan_in_scaling_ = fan_in_scaling;
    map.widths_.push_back(input_dim);
    for (long h : hidden) map.widths_.push_back(h);
    map.widths_.push_back(feature_dim);
    for (long w : map.widths_) {
      if (w < 1) throw ConfigError("feature map widths must all be >= 1");
    }
    // Draw in double regardless of T so float and double maps share weights.
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t l = 0; l + 1 < map.widths_.size(); ++l) {
      const long in = map.widths_[l];
      const long out = map.widths_[l + 1];
      const double scale = fan_in_scaling ? 1.0 / std::sqrt(static_cast<double>(in)) : 1.0;
      detail::DenseLayer<T> layer{Mat<T>(out, in), Vec<T>(out)};
      for (long r = 0; r < out; ++r) {
        for (long c = 0; c < in; ++c) layer.weight(r, c) = static_cast<T>(scale * normal(rng));
      }
      for (long r = 0; r < out; ++r) layer.bias(r) = static_cast<T>(scale * normal(rng));
      map.layers_.push_back(std::move(layer));
    }
    return map;
  }

  /// Phi(x) = x, m = d. Exists for closed-form checks.
  static FeatureMap identity(long dim) {
    if (dim < 1) throw ConfigError("identity feature map needs dim >= 1");
    FeatureMap map;
    map.mode_ = FeatureMode::identity;
    map.widths_ = {dim, dim};
    return map;
  }

  /// Same construction parameters, different scalar type.
  template <typename U>
  FeatureMap<U> cast() const {
    if (mode_ == FeatureMode::identity) return FeatureMap<U>::identity(input_dim());
    std::vector<long> hidden(widths_.begin() + 1, widths_.end() - 1);
    return FeatureMap<U>::network(input_dim(), hidden, feature_dim(), seed_, fan_in_scaling_);
  }

  FeatureMode mode() const { return mode_; }
  std::uint64_t seed() const { return seed_; }
  bool fan_in_scaling() const { return fan_in_scaling_; }
  const std::vector<long>& widths() const { return widths_; }
  long input_dim() const { return widths_.front(); }
  long feature_dim() const { return widths_.back(); }
  const detail::LayerStack<T>& layers() const { return layers_; }

  Vec<T> phi(const Vec<T>& x) const {
    detail::require_dim(x.size(), input_dim(), "phi");
    if (mode_ == FeatureMode::identity) return x;
    return detail::forward<T>(layers_, Mat<T>(x)).col(0);
  }

  /// Features of a batch (d x N) as an m x N matrix.
  Mat<T> phi_batch(const Mat<T>& xs) const {
    detail::require_dim(xs.rows(), input_dim(), "phi_batch");
    if (mode_ == FeatureMode::identity) return xs;
    return detail::forward<T>(layers_, xs);
  }

  /// d x m matrix; row i is dPhi/dx_i at x.
  Mat<T> phi_jacobian(const Vec<T>& x) const {
    detail::require_dim(x.size(), input_dim(), "phi_jacobian");
    Mat<T> jac = jacobian_batch(Mat<T>(x));
    return jac.transpose();
  }

  /// Features and input Jacobians of a batch. `jac` is m x (d*N) with column
  /// j*N + i equal to dPhi/dx_j at sample i.
  void phi_and_jacobian_batch(const Mat<T>& xs, Mat<T>& features, Mat<T>& jac) const {
    detail::require_dim(xs.rows(), input_dim(), "phi_and_jacobian_batch");
    const long n = xs.cols();
    const long d = input_dim();
    if (mode_ == FeatureMode::identity) {
      features = xs;
      jac = Mat<T>::Zero(d, d * n);
      for (long j = 0; j < d; ++j) jac.row(j).segment(j * n, n).setOnes();
      return;
    }
    detail::Tape<T> tape;
    features = detail::forward<T>(layers_, xs, &tape);
    Mat<T> seeds = Mat<T>::Zero(d, d * n);
    for (long j = 0; j < d; ++j) seeds.row(j).segment(j * n, n).setOnes();
    jac = detail::input_jvp<T>(layers_, tape, std::move(seeds), d);
  }

  Mat<T> jacobian_batch(const Mat<T>& xs) const {
    Mat<T> features, jac;
    phi_and_jacobian_batch(xs, features, jac);
    return jac;
  }

  /// Gradients of f = <w, Phi> at every column of xs (d x N).
  Mat<T> gradient_batch(const Mat<T>& xs, const Vec<T>& w) const {
    detail::require_dim(xs.rows(), input_dim(), "gradient_batch");
    detail::require_dim(w.size(), feature_dim(), "gradient_batch");
    if (mode_ == FeatureMode::identity) return w.replicate(1, xs.cols());
    detail::Tape<T> tape;
    detail::forward<T>(layers_, xs, &tape);
    return detail::input_vjp<T>(layers_, tape, w.replicate(1, xs.cols()));
  }

  T kernel(const Vec<T>& x, const Vec<T>& y) const { return phi(x).dot(phi(y)); }

  T evaluate(const RkhsFunction<T>& f, const Vec<T>& x) const {
    detail::require_dim(f.dim(), feature_dim(), "evaluate");
    return f.weights.dot(phi(x));
  }

  /// Gradient of f = <w, Phi> at x, i.e. JPhi(x)^T w.
  Vec<T> gradient(const RkhsFunction<T>& f, const Vec<T>& x) const {
    return gradient_batch(Mat<T>(x), f.weights).col(0);
  }

  friend bool operator==(const FeatureMap& a, const FeatureMap& b) {
    if (a.mode_ != b.mode_ || a.widths_ != b.widths_ || a.seed_ != b.seed_ || a.fan_in_scaling_ != b.fan_in_scaling_ ||
        a.layers_.size() != b.layers_.size())
      return false;
    for (std::size_t l = 0; l < a.layers_.size(); ++l) {
      if (a.layers_[l].weight != b.layers_[l].weight || a.layers_[l].bias != b.layers_[l].bias) return false;
    }
    return true;
  }

 private:
  FeatureMode mode_ = FeatureMode::identity;
  std::uint64_t seed_ = 0;
  bool fan_in_scaling_ = false;
  std::vector<long> widths_;
  detail::LayerStack<T> layers_;
};

template <typename T>
FeatureMap<T> build_feature_map(long input_dim, const std::vector<long>& hidden, long feature_dim, std::uint64_t seed,
                                bool fan_in_scaling = false) {
  return FeatureMap<T>::network(input_dim, hidden, feature_dim, seed, fan_in_scaling);
}

/// Sequential column average; the summation order is fixed so the result
/// does not depend on how the batch was produced.
template <typename T>
Vec<T> column_mean(const Mat<T>& m) {
  Vec<T> acc = Vec<T>::Zero(m.rows());
  for (long i = 0; i < m.cols(); ++i) acc += m.col(i);
  return acc / static_cast<T>(m.cols());
}

/// Empirical mean embedding (1/N) sum_i Phi(x_i) of a d x N batch.
template <typename T>
RkhsFunction<T> mean_embedding(const FeatureMap<T>& map, const Mat<T>& samples) {
  if (samples.cols() == 0) throw DimensionError("mean_embedding: empty batch");
  return RkhsFunction<T>(column_mean<T>(map.phi_batch(samples)));
}

/// Plain MMD: Euclidean norm of the difference of empirical embeddings.
template <typename T>
T mmd(const FeatureMap<T>& map, const Mat<T>& samples_p, const Mat<T>& samples_q) {
  if (samples_p.cols() == 0 || samples_q.cols() == 0) throw DimensionError("mmd: empty batch");
  return (mean_embedding(map, samples_p).weights - mean_embedding(map, samples_q).weights).norm();
}

}  // namespace paramflow
