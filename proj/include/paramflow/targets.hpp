#pragma once

#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "paramflow/common.hpp"

namespace paramflow {

/// Isotropic Gaussian mixture; component means are the columns of `means`.
struct MixtureTarget {
  MatrixX means;  // d x K
  double sigma = 0.0;
  std::vector<double> weights;
  std::uint64_t seed = 0;

  long dim() const { return means.rows(); }
  long components() const { return means.cols(); }

  void validate() const {
    if (means.cols() < 1) throw ConfigError("mixture target needs at least one component");
    if (static_cast<long>(weights.size()) != means.cols()) throw ConfigError("mixture weights/means size mismatch");
    if (!(sigma >= 0) || !std::isfinite(sigma)) throw ConfigError("mixture sigma must be finite and >= 0");
    double total = 0;
    for (double w : weights) {
      if (!(w >= 0)) throw ConfigError("mixture weights must be nonnegative");
      total += w;
    }
    if (std::abs(total - 1.0) > 1e-12) throw ConfigError("mixture weights must sum to 1");
  }

  /// Index of the nearest component mean to x.
  long nearest_component(const VectorX& x) const {
    long best = 0;
    double best_d = (means.col(0) - x).squaredNorm();
    for (long k = 1; k < components(); ++k) {
      const double dk = (means.col(k) - x).squaredNorm();
      if (dk < best_d) {
        best_d = dk;
        best = k;
      }
    }
    return best;
  }
};

/// Eight equal-weight modes at angles k*45 degrees on a circle.
inline MixtureTarget eight_gaussians(double radius, double sigma, std::uint64_t seed) {
  if (!(radius > 0)) throw ConfigError("eight_gaussians: radius must be > 0");
  if (!(sigma > 0)) throw ConfigError("eight_gaussians: sigma must be > 0");
  MixtureTarget t;
  t.means.resize(2, 8);
  for (long k = 0; k < 8; ++k) {
    const double angle = static_cast<double>(k) * std::numbers::pi / 4.0;
    t.means(0, k) = radius * std::cos(angle);
    t.means(1, k) = radius * std::sin(angle);
  }
  // Exact values on the axes, so mean_2 is (0, r) and not (6e-17, r).
  t.means(1, 0) = 0.0;
  t.means(0, 2) = 0.0;
  t.means(1, 4) = 0.0;
  t.means(0, 6) = 0.0;
  t.sigma = sigma;
  t.weights.assign(8, 1.0 / 8.0);
  t.seed = seed;
  return t;
}

/// Reproducible sampler over a mixture target.
class TargetSampler {
 public:
  TargetSampler(MixtureTarget target, std::uint64_t seed) : target_(std::move(target)), rng_(seed) {
    target_.validate();
    pick_ = std::discrete_distribution<long>(target_.weights.begin(), target_.weights.end());
  }
  explicit TargetSampler(MixtureTarget target) : TargetSampler(target, target.seed) {}

  const MixtureTarget& target() const { return target_; }

  /// d x n batch; picks a component by weight, then adds N(0, sigma^2 I).
  MatrixX sample(long n) {
    if (n < 1) throw ConfigError("target sample: n must be >= 1");
    const long d = target_.dim();
    MatrixX x(d, n);
    for (long i = 0; i < n; ++i) {
      const long k = pick_(rng_);
      for (long r = 0; r < d; ++r) x(r, i) = target_.means(r, k) + target_.sigma * normal_(rng_);
    }
    return x;
  }

 private:
  MixtureTarget target_;
  std::mt19937_64 rng_;
  std::discrete_distribution<long> pick_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

inline MatrixX sample(TargetSampler& sampler, long n) { return sampler.sample(n); }

}  // namespace paramflow
